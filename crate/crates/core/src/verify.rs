//! Numerical checks of the functional's closed-form properties. Each check
//! produces a [`VerificationReport`]; the CLI `verify` subcommand prints
//! them as a JSON array.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use serde::Serialize;
use serde_json::Value;

use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::functional::{
    derangetropy, derangetropy_derivative, derangetropy_entropy_form, derangetropy_gamma_form,
    total_energy_gradient,
};
use crate::numerics::{
    central_difference, find_root, integrate, linspace, sin_pi, DerivativeOrder, QuadratureSpec,
};

pub const NORMALIZATION_TAIL_EPS: f64 = 1e-9;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;
pub const MODE_GRID_POINTS: usize = 10_000;
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;
pub const ODE_TOLERANCE: f64 = 1e-4;
pub const ODE_STEP: f64 = 1e-5;
pub const ODE_GRID_POINTS: usize = 199;
pub const INITIAL_SLOPE_STEP: f64 = 1e-8;
pub const INITIAL_SLOPE_TOLERANCE: f64 = 1e-4;
pub const FORM_POINTS: usize = 100;
pub const FORM_TOLERANCE: f64 = 1e-9;
pub const DERIVATIVE_POINTS: usize = 50;
/// Finite-difference step as a fraction of the distribution scale.
pub const DERIVATIVE_RELATIVE_STEP: f64 = 1e-5;
pub const DERIVATIVE_TOLERANCE: f64 = 1e-5;
pub const EQUILIBRIUM_BRACKETS: usize = 1000;
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;
pub const CURVATURE_TOLERANCE: f64 = 1e-4;
pub const CLASSIFICATION_DEAD_BAND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub details: BTreeMap<String, Value>,
}

impl VerificationReport {
    pub fn new(check_name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        VerificationReport {
            check_name: check_name.into(),
            residual,
            tolerance,
            passed: residual <= tolerance,
            details: BTreeMap::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_owned(), value.into());
        self
    }
}

/// `pi e / 24`, the value of the integral of the unscaled weight over [0, 1].
pub fn appendix_target() -> f64 {
    PI * E / 24.0
}

/// `sin(pi z) z^z (1 - z)^(1 - z)`.
pub fn appendix_integrand(z: f64) -> f64 {
    sin_pi(z) * z.powf(z) * (1.0 - z).powf(1.0 - z)
}

fn integration_breakpoints(d: &Distribution, eps: f64) -> Result<Vec<f64>> {
    match d {
        // Integrate cell by cell so every panel sees a smooth integrand.
        Distribution::Tabulated(t) => Ok(t.xs().to_vec()),
        _ => {
            let (lo, hi) = d.truncated_support(eps)?;
            Ok(vec![lo, hi])
        }
    }
}

/// `|integral rho - 1|` over the support, truncated at the `1e-9` tail
/// quantiles where the support is infinite.
pub fn verify_normalization(d: &Distribution, spec: &QuadratureSpec) -> Result<VerificationReport> {
    let cuts = integration_breakpoints(d, NORMALIZATION_TAIL_EPS)?;
    let pieces = (cuts.len() - 1) as f64;
    let piece_spec = spec.with_abs_tol(spec.abs_tol / pieces);
    let mut mass = 0.0;
    for w in cuts.windows(2) {
        mass += integrate(|x| derangetropy(d, x).rho, w[0], w[1], &piece_spec)?;
    }
    Ok(VerificationReport::new(
        format!("normalization[{d}]"),
        (mass - 1.0).abs(),
        NORMALIZATION_TOLERANCE,
    )
    .with_detail("integral", mass)
    .with_detail("lower", cuts[0])
    .with_detail("upper", cuts[cuts.len() - 1])
    .with_detail("abs_tol", spec.abs_tol))
}

/// `|integral_0^1 sin(pi z) z^z (1-z)^(1-z) dz - pi e / 24|`. The pass
/// threshold is `min(1e-8, 100 abs_tol)`.
pub fn verify_appendix_constant(spec: &QuadratureSpec) -> Result<VerificationReport> {
    let value = integrate(appendix_integrand, 0.0, 1.0, spec)?;
    let target = appendix_target();
    let tolerance = (100.0 * spec.abs_tol).min(1e-8);
    Ok(
        VerificationReport::new("appendix_constant", (value - target).abs(), tolerance)
            .with_detail("integral", value)
            .with_detail("target", target)
            .with_detail("abs_tol", spec.abs_tol),
    )
}

/// Checks `F(m - t) + F(m + t) = 1` at a spread of offsets.
pub fn symmetry_probe(d: &Distribution) -> Result<()> {
    let m = d.median()?;
    let s = d.scale()?;
    for k in 1..=40 {
        let t = s * k as f64 / 40.0;
        let deviation = (d.cdf(m - t) + d.cdf(m + t) - 1.0).abs();
        if !(deviation <= SYMMETRY_TOLERANCE) {
            return Err(Error::SymmetryProbeFailed {
                offset: t,
                deviation,
            });
        }
    }
    Ok(())
}

/// Distance between the grid argmax of `rho` and the median, on
/// [`MODE_GRID_POINTS`] cell-centred nodes; passes within one grid step.
pub fn verify_mode_at_median(d: &Distribution) -> Result<VerificationReport> {
    symmetry_probe(d)?;
    let median = d.median()?;
    let (lo, hi) = d.truncated_support(NORMALIZATION_TAIL_EPS)?;
    let n = MODE_GRID_POINTS;
    let step = (hi - lo) / n as f64;
    let rho =
        Execution::default().map_range(n, |i| derangetropy(d, lo + (i as f64 + 0.5) * step).rho);
    let (best, _) =
        rho.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc },
        );
    let argmax = lo + (best as f64 + 0.5) * step;
    Ok(VerificationReport::new(
        format!("mode_at_median[{d}]"),
        (argmax - median).abs(),
        step,
    )
    .with_detail("argmax", argmax)
    .with_detail("median", median)
    .with_detail("grid_points", n))
}

fn uniform_unit() -> Distribution {
    Distribution::Uniform { a: 0.0, b: 1.0 }
}

/// Pointwise residual of
/// `rho'' + 4 atanh(1-2F) rho' + (pi^2 - 1/(F(1-F)) + 4 atanh^2(1-2F)) rho`
/// for the uniform case, with `rho'` analytic and `rho''` a central
/// difference of `rho'` with step `h`.
pub fn ode_residual(big_f: f64, h: f64) -> Result<f64> {
    let u = uniform_unit();
    let rho = derangetropy(&u, big_f).rho;
    let slope = derangetropy_derivative(&u, big_f)?;
    let mut first_err = None;
    let curvature = central_difference(
        |t| match derangetropy_derivative(&u, t) {
            Ok(v) => v,
            Err(e) => {
                first_err.get_or_insert(e);
                f64::NAN
            }
        },
        big_f,
        h,
        DerivativeOrder::First,
    );
    if let Some(e) = first_err {
        return Err(e);
    }
    let curvature = curvature?;
    let a = (1.0 - 2.0 * big_f).atanh();
    let coeff = PI * PI - 1.0 / (big_f * (1.0 - big_f)) + 4.0 * a * a;
    Ok(curvature + 4.0 * a * slope + coeff * rho)
}

pub fn default_ode_grid() -> Vec<f64> {
    linspace(0.01, 0.99, ODE_GRID_POINTS)
}

/// `max |residual| / max |rho|` over `grid_f`.
pub fn verify_ode_uniform(grid_f: &[f64], h: f64) -> Result<VerificationReport> {
    if grid_f.is_empty() {
        return Err(Error::domain("ODE grid is empty"));
    }
    if let Some(&bad) = grid_f.iter().find(|&&c| !(0.01..=0.99).contains(&c)) {
        return Err(Error::domain(format!(
            "ODE grid point {bad} outside [0.01, 0.99]"
        )));
    }
    let u = uniform_unit();
    let residuals = Execution::default().map_slice(grid_f, |&c| ode_residual(c, h));
    let mut worst = 0.0f64;
    let mut worst_at = grid_f[0];
    for (&c, r) in grid_f.iter().zip(residuals) {
        let r = r?.abs();
        if r > worst {
            worst = r;
            worst_at = c;
        }
    }
    let scale = grid_f
        .iter()
        .map(|&c| derangetropy(&u, c).rho.abs())
        .fold(0.0, f64::max);
    Ok(
        VerificationReport::new("ode_uniform", worst / scale, ODE_TOLERANCE)
            .with_detail("grid_points", grid_f.len())
            .with_detail("step", h)
            .with_detail("worst_f", worst_at)
            .with_detail("max_rho", scale),
    )
}

/// Initial conditions of the uniform-case ODE: `rho(0) = 0` and the forward
/// difference slope at 0 equals `24 / e`.
pub fn verify_initial_conditions() -> Vec<VerificationReport> {
    let u = uniform_unit();
    let at_zero = derangetropy(&u, 0.0).rho;
    let h = INITIAL_SLOPE_STEP;
    let slope = (derangetropy(&u, h).rho - at_zero) / h;
    let target = 24.0 / E;
    vec![
        VerificationReport::new("ode_initial_value", at_zero.abs(), 0.0),
        VerificationReport::new(
            "ode_initial_slope",
            (slope - target).abs(),
            INITIAL_SLOPE_TOLERANCE,
        )
        .with_detail("slope", slope)
        .with_detail("target", target)
        .with_detail("step", h),
    ]
}

/// Max relative gap between the sine form and each of the Gamma and
/// entropy forms at the quantiles `(i + 1/2) / n`.
pub fn verify_form_equivalence(d: &Distribution, n_points: usize) -> Result<VerificationReport> {
    let ps: Vec<f64> = (0..n_points)
        .map(|i| (i as f64 + 0.5) / n_points as f64)
        .collect();
    let gaps = Execution::default().map_slice(&ps, |&p| -> Result<(f64, f64)> {
        let x = d.quantile(p)?;
        let sine = derangetropy(d, x).rho;
        let gamma = derangetropy_gamma_form(d, x)?;
        let entropy = derangetropy_entropy_form(d, x);
        Ok(((sine - gamma).abs() / sine, (sine - entropy).abs() / sine))
    });
    let (mut gamma_gap, mut entropy_gap) = (0.0f64, 0.0f64);
    for g in gaps {
        let (a, b) = g?;
        gamma_gap = gamma_gap.max(a);
        entropy_gap = entropy_gap.max(b);
    }
    Ok(VerificationReport::new(
        format!("form_equivalence[{d}]"),
        gamma_gap.max(entropy_gap),
        FORM_TOLERANCE,
    )
    .with_detail("points", n_points)
    .with_detail("gamma_relative_gap", gamma_gap)
    .with_detail("entropy_relative_gap", entropy_gap))
}

/// Max relative error of the closed-form derivative against a central
/// difference with `h = 1e-5 * scale` at the quantiles `(i + 1/2) / n`.
pub fn verify_derivative(d: &Distribution, n_points: usize) -> Result<VerificationReport> {
    let scale = d.scale()?;
    let (lo, hi) = d.support();
    let h = DERIVATIVE_RELATIVE_STEP * scale;
    let ps: Vec<f64> = (0..n_points)
        .map(|i| (i as f64 + 0.5) / n_points as f64)
        .collect();
    let errors = Execution::default().map_slice(&ps, |&p| -> Result<f64> {
        let x = d.quantile(p)?;
        // Near a finite support end the step shrinks with the distance to it.
        let h_x = h.min(DERIVATIVE_RELATIVE_STEP * (x - lo).min(hi - x));
        let analytic = derangetropy_derivative(d, x)?;
        let numeric =
            central_difference(|t| derangetropy(d, t).rho, x, h_x, DerivativeOrder::First)?;
        let rho = derangetropy(d, x).rho;
        Ok((analytic - numeric).abs() / analytic.abs().max(DERIVATIVE_RELATIVE_STEP * rho / scale))
    });
    let mut worst = 0.0f64;
    for e in errors {
        worst = worst.max(e?);
    }
    Ok(
        VerificationReport::new(format!("derivative[{d}]"), worst, DERIVATIVE_TOLERANCE)
            .with_detail("points", n_points)
            .with_detail("step", h),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Minimum,
    Maximum,
    Degenerate,
}

/// Interior zero of `d E_total / dx`, classified by the sign of the second
/// derivative of `E_total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub x: f64,
    pub energy_second_derivative: f64,
    pub classification: Classification,
}

fn classify(curvature: f64) -> Classification {
    if curvature > CLASSIFICATION_DEAD_BAND {
        Classification::Minimum
    } else if curvature < -CLASSIFICATION_DEAD_BAND {
        Classification::Maximum
    } else {
        Classification::Degenerate
    }
}

/// Scans `n_brackets` equal cells between the `1e-6` and `1 - 1e-6`
/// quantiles for sign changes of `d E_total / dx = -rho'/rho`, refines each
/// with [`find_root`], and classifies it.
pub fn find_equilibria(d: &Distribution, n_brackets: usize) -> Result<Vec<Equilibrium>> {
    if n_brackets == 0 {
        return Err(Error::domain("need at least one bracket"));
    }
    let (lo, hi) = d.quantile_range(1e-6)?;
    let scale = d.scale()?;
    let nodes = linspace(lo, hi, n_brackets + 1);
    let grads = Execution::default().map_slice(&nodes, |&x| total_energy_gradient(d, x));
    let grads = grads.into_iter().collect::<Result<Vec<f64>>>()?;
    let gradient = |x: f64| total_energy_gradient(d, x).unwrap_or(f64::NAN);

    let mut roots = Vec::new();
    for i in 0..n_brackets {
        let (g0, g1) = (grads[i], grads[i + 1]);
        if g0 == 0.0 {
            if roots.last() != Some(&nodes[i]) {
                roots.push(nodes[i]);
            }
            continue;
        }
        if g1 == 0.0 {
            roots.push(nodes[i + 1]);
            continue;
        }
        if g0 * g1 < 0.0 {
            roots.push(find_root(gradient, nodes[i], nodes[i + 1], 1e-14 * scale)?);
        }
    }

    roots
        .into_iter()
        .map(|x| {
            let h = (1e-5 * scale).min(0.5 * (x - lo)).min(0.5 * (hi - x));
            let curvature = central_difference(gradient, x, h, DerivativeOrder::First)?;
            Ok(Equilibrium {
                x,
                energy_second_derivative: curvature,
                classification: classify(curvature),
            })
        })
        .collect()
}

/// Stationarity of every equilibrium found (`|rho'(x*)| <= 1e-8`); for
/// distributions with a symmetric CDF, also that one equilibrium sits at
/// the median; for Uniform(0,1), that the curvature there is `pi^2 - 4`.
pub fn verify_equilibria(d: &Distribution) -> Result<Vec<VerificationReport>> {
    let equilibria = find_equilibria(d, EQUILIBRIUM_BRACKETS)?;
    let stationarity = equilibria
        .iter()
        .map(|e| derangetropy_derivative(d, e.x).map(f64::abs))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(
            if equilibria.is_empty() {
                f64::INFINITY
            } else {
                0.0
            },
            f64::max,
        );
    let locations: Vec<Value> = equilibria.iter().map(|e| e.x.into()).collect();
    let classes: Vec<Value> = equilibria
        .iter()
        .map(|e| serde_json::to_value(e.classification).expect("enum serializes"))
        .collect();
    let mut reports = vec![VerificationReport::new(
        format!("equilibrium_stationarity[{d}]"),
        stationarity,
        EQUILIBRIUM_TOLERANCE,
    )
    .with_detail("count", equilibria.len())
    .with_detail("locations", locations)
    .with_detail("classifications", classes)];

    if symmetry_probe(d).is_ok() {
        let m = d.median()?;
        let nearest = equilibria
            .iter()
            .min_by(|a, b| (a.x - m).abs().total_cmp(&(b.x - m).abs()));
        let (offset, class) = nearest.map_or((f64::INFINITY, None), |e| {
            ((e.x - m).abs(), Some(e.classification))
        });
        let mut report = VerificationReport::new(
            format!("equilibrium_at_median[{d}]"),
            offset,
            EQUILIBRIUM_TOLERANCE,
        )
        .with_detail("median", m);
        if let Some(class) = class {
            report = report.with_detail(
                "classification",
                serde_json::to_value(class).expect("enum serializes"),
            );
        }
        reports.push(report);
    }

    if *d == uniform_unit() {
        let expected = PI * PI - 4.0;
        let at_centre = equilibria.iter().find(|e| (e.x - 0.5).abs() <= 1e-6);
        let residual = at_centre.map_or(f64::INFINITY, |e| {
            (e.energy_second_derivative - expected).abs()
        });
        reports.push(
            VerificationReport::new(
                "equilibrium_curvature[uniform(0,1)]",
                residual,
                CURVATURE_TOLERANCE,
            )
            .with_detail("expected", expected)
            .with_detail(
                "measured",
                at_centre.map_or(Value::Null, |e| e.energy_second_derivative.into()),
            ),
        );
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Normalization,
    Appendix,
    Mode,
    Ode,
    Equilibrium,
}

/// Zoo members with a symmetric unimodal density.
pub fn symmetric_unimodal_zoo() -> Vec<Distribution> {
    Distribution::zoo()
        .into_iter()
        .filter(|d| {
            matches!(
                d,
                Distribution::Uniform { .. }
                    | Distribution::Normal { .. }
                    | Distribution::Semicircle { .. }
            )
        })
        .collect()
}

pub fn run_suite(suite: Suite, spec: &QuadratureSpec) -> Result<Vec<VerificationReport>> {
    let zoo = Distribution::zoo();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    let mut reports = Vec::new();
    if wants(Suite::Appendix) {
        reports.push(verify_appendix_constant(spec)?);
    }
    if wants(Suite::Normalization) {
        for d in &zoo {
            reports.push(verify_normalization(d, spec)?);
        }
    }
    if wants(Suite::Mode) {
        for d in symmetric_unimodal_zoo() {
            reports.push(verify_mode_at_median(&d)?);
        }
    }
    if wants(Suite::Ode) {
        reports.push(verify_ode_uniform(&default_ode_grid(), ODE_STEP)?);
        reports.extend(verify_initial_conditions());
    }
    if wants(Suite::Equilibrium) {
        for d in &zoo {
            reports.extend(verify_equilibria(d)?);
        }
    }
    if suite == Suite::All {
        for d in &zoo {
            reports.push(verify_form_equivalence(d, FORM_POINTS)?);
            reports.push(verify_derivative(d, DERIVATIVE_POINTS)?);
        }
    }
    Ok(reports)
}
