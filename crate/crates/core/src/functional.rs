//! Pointwise evaluation of the derangetropy functional
//!
//! ```text
//! rho(x) = K sin(pi F) F^F (1 - F)^(1 - F) f(x),   K = 24 / (pi e)
//! ```
//!
//! in several algebraically equivalent forms. Also provides its first
//! derivative and the split of `-log rho` into energies.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numerics::{ln_gamma, sin_pi, xlogx};

/// `24 / (pi e)`, the constant that gives the functional unit mass.
pub const SCALE: f64 = 24.0 / (PI * E);

/// `log(24 / (pi e))`.
pub fn energy_constant() -> f64 {
    SCALE.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerangetropyValue {
    pub x: f64,
    pub f: f64,
    #[serde(rename = "F")]
    pub cdf: f64,
    pub rho: f64,
}

/// Energies of `-log rho` at a point, in nats.
///
/// `e_total == e_oscillatory + e_structural - constant_c` holds exactly
/// (up to rounding); see [`EnergyBreakdown::identity_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub x: f64,
    pub e_oscillatory: f64,
    pub e_structural: f64,
    pub e_total: f64,
    pub constant_c: f64,
}

impl EnergyBreakdown {
    /// Sign applied to `constant_c` in the exact decomposition.
    pub const CONSTANT_SIGN: f64 = -1.0;

    pub fn identity_residual(&self) -> f64 {
        self.e_total
            - (self.e_oscillatory + self.e_structural + Self::CONSTANT_SIGN * self.constant_c)
    }

    /// `e_oscillatory + e_structural + C`, the decomposition written with a
    /// positive constant. Differs from `e_total` by `2C`.
    pub fn total_with_positive_constant(&self) -> f64 {
        self.e_oscillatory + self.e_structural + self.constant_c
    }
}

/// Shannon entropy of a Bernoulli(p) variable, in nats.
pub fn bernoulli_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "Bernoulli parameter must be in [0, 1], got {p}"
        )));
    }
    Ok(-xlogx(p) - xlogx(1.0 - p))
}

/// `K sin(pi c) c^c (1 - c)^(1 - c)`: the factor the functional multiplies a
/// density by, as a function of the CDF value `c`. Zero at `c = 0` and `c = 1`.
pub fn cdf_weight(c: f64) -> f64 {
    // powf(0, 0) == 1
    SCALE * sin_pi(c) * c.powf(c) * (1.0 - c).powf(1.0 - c)
}

fn interior_cdf(d: &Distribution, x: f64) -> Result<f64> {
    let c = d.cdf(x);
    if c > 0.0 && c < 1.0 {
        Ok(c)
    } else {
        Err(Error::domain(format!(
            "F(x) = {c} at x = {x}; need 0 < F < 1"
        )))
    }
}

/// Sine form. Defined everywhere; zero wherever `F` is 0 or 1 and `f` is
/// finite.
pub fn derangetropy(d: &Distribution, x: f64) -> DerangetropyValue {
    let f = d.pdf(x);
    let cdf = d.cdf(x);
    let weight = cdf_weight(cdf);
    let rho = if weight == 0.0 { 0.0 } else { weight * f };
    DerangetropyValue { x, f, cdf, rho }
}

/// Sine form over a list of abscissae.
pub fn derangetropy_grid(d: &Distribution, xs: &[f64], exec: Execution) -> Vec<DerangetropyValue> {
    exec.map_slice(xs, |&x| derangetropy(d, x))
}

/// Gamma form via `sin(pi F) = pi / (Gamma(F) Gamma(1 - F))`.
pub fn derangetropy_gamma_form(d: &Distribution, x: f64) -> Result<f64> {
    let c = interior_cdf(d, x)?;
    let log_gammas = ln_gamma(c)? + ln_gamma(1.0 - c)?;
    Ok(24.0 / E * c.powf(c) * (1.0 - c).powf(1.0 - c) * d.pdf(x) / log_gammas.exp())
}

/// Entropy form `K sin(pi F) exp(-H_B(F)) f(x)`.
pub fn derangetropy_entropy_form(d: &Distribution, x: f64) -> f64 {
    let c = d.cdf(x);
    let h = -xlogx(c) - xlogx(1.0 - c);
    let s = sin_pi(c);
    if s == 0.0 {
        return 0.0;
    }
    SCALE * s * (-h).exp() * d.pdf(x)
}

/// `d/dx log rho = f (pi cot(pi F) + log(F / (1 - F))) + f'/f`.
pub fn log_derivative(d: &Distribution, x: f64) -> Result<f64> {
    let c = interior_cdf(d, x)?;
    let f = d.pdf(x);
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::domain(format!(
            "f(x) = {f} at x = {x}; need 0 < f < inf"
        )));
    }
    let slope = d.pdf_derivative(x)?;
    let cot = (PI * c).cos() / sin_pi(c);
    Ok(f * (PI * cot + (c / (1.0 - c)).ln()) + slope / f)
}

/// First derivative of the functional in `x`.
pub fn derangetropy_derivative(d: &Distribution, x: f64) -> Result<f64> {
    let g = log_derivative(d, x)?;
    Ok(derangetropy(d, x).rho * g)
}

/// `d E_total / dx = -rho' / rho`.
pub fn total_energy_gradient(d: &Distribution, x: f64) -> Result<f64> {
    log_derivative(d, x).map(|g| -g)
}

pub fn energy_decomposition(d: &Distribution, x: f64) -> Result<EnergyBreakdown> {
    let c = interior_cdf(d, x)?;
    let f = d.pdf(x);
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::domain(format!(
            "f(x) = {f} at x = {x}; need 0 < f < inf"
        )));
    }
    let rho = derangetropy(d, x).rho;
    Ok(EnergyBreakdown {
        x,
        e_oscillatory: -sin_pi(c).ln(),
        e_structural: bernoulli_entropy(c)? - f.ln(),
        e_total: -rho.ln(),
        constant_c: energy_constant(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{central_difference, DerivativeOrder};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    // Direct transcription of the sine form, used as an oracle.
    fn rho_oracle(big_f: f64, f: f64) -> f64 {
        let k = 24.0 / (PI * E);
        k * (PI * big_f).sin() * big_f.powf(big_f) * (1.0 - big_f).powf(1.0 - big_f) * f
    }

    #[test]
    fn scale_constant() {
        assert_abs_diff_eq!(SCALE, 2.810_391_913_167_32, epsilon = 1e-14);
        assert_abs_diff_eq!(energy_constant(), 1.033_323_944_498_545_6, epsilon = 1e-14);
    }

    #[test]
    fn derangetropy_examples() {
        let v = derangetropy(&uniform(), 0.5);
        assert_abs_diff_eq!(v.rho, 1.405_196, epsilon = 1e-6);
        assert_abs_diff_eq!(v.rho, SCALE * 0.5, epsilon = 1e-15);
        for d in Distribution::zoo() {
            let (lo, _) = d.support();
            let x = if lo.is_finite() { lo } else { -1e6 };
            assert_eq!(derangetropy(&d, x).rho, 0.0, "{d}");
        }
        let n = Distribution::normal(0.0, 1.0).unwrap();
        let v = derangetropy(&n, 0.0);
        assert_abs_diff_eq!(v.rho, 0.560_592_079_330_357_9, epsilon = 1e-14);
        assert_abs_diff_eq!(
            v.rho,
            rho_oracle(0.5, 1.0 / (2.0 * PI).sqrt()),
            epsilon = 1e-15
        );
        // Past the right end of the support.
        assert_eq!(derangetropy(&uniform(), 1.0).rho, 0.0);
        assert_eq!(derangetropy(&uniform(), 7.0).rho, 0.0);
    }

    #[test]
    fn gamma_form_examples() {
        let u = uniform();
        assert_abs_diff_eq!(
            derangetropy_gamma_form(&u, 0.5).unwrap(),
            1.405_196,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            derangetropy_gamma_form(&u, 0.25).unwrap(),
            derangetropy(&u, 0.25).rho,
            epsilon = 1e-10
        );
        assert!(matches!(
            derangetropy_gamma_form(&u, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            derangetropy_gamma_form(&u, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn entropy_form_examples() {
        assert_abs_diff_eq!(bernoulli_entropy(0.5).unwrap(), 2f64.ln(), epsilon = 1e-16);
        assert_eq!(bernoulli_entropy(0.0).unwrap(), 0.0);
        assert_eq!(bernoulli_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(bernoulli_entropy(0.25).unwrap(), 0.562_335, epsilon = 1e-6);
        assert!(bernoulli_entropy(-0.1).is_err());
        assert!(bernoulli_entropy(1.1).is_err());

        let u = uniform();
        assert_abs_diff_eq!(
            derangetropy_entropy_form(&u, 0.5),
            derangetropy(&u, 0.5).rho,
            epsilon = 1e-15
        );
        let e = Distribution::exponential(1.0).unwrap();
        assert_abs_diff_eq!(
            derangetropy_entropy_form(&e, 1.0),
            derangetropy(&e, 1.0).rho,
            epsilon = 1e-12
        );
    }

    #[test]
    fn derivative_examples() {
        let u = uniform();
        assert_abs_diff_eq!(
            derangetropy_derivative(&u, 0.5).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let n = Distribution::normal(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            derangetropy_derivative(&n, 0.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let fd = central_difference(
            |t| derangetropy(&u, t).rho,
            0.25,
            1e-5,
            DerivativeOrder::First,
        )
        .unwrap();
        assert_abs_diff_eq!(
            derangetropy_derivative(&u, 0.25).unwrap(),
            fd,
            epsilon = 1e-6
        );
        assert!(derangetropy_derivative(&u, 0.0).is_err());
        assert!(derangetropy_derivative(&u, 1.0).is_err());
    }

    #[test]
    fn uniform_derivative_against_closed_form_in_f() {
        // For Uniform(0,1), x == F, and rho' = rho (pi cot(pi F) + log(F/(1-F))).
        let u = uniform();
        for i in 1..100 {
            let c = i as f64 / 100.0;
            let expected = rho_oracle(c, 1.0) * (PI / (PI * c).tan() + (c / (1.0 - c)).ln());
            let got = derangetropy_derivative(&u, c).unwrap();
            assert!(
                (got - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
                "F = {c}"
            );
        }
    }

    #[test]
    fn energy_examples() {
        let u = uniform();
        let e = energy_decomposition(&u, 0.5).unwrap();
        assert_eq!(e.e_oscillatory, 0.0);
        assert_abs_diff_eq!(e.e_structural, 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(e.e_total, -(1.405_196f64).ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(e.e_total, -0.340_176_763_938_600_25, epsilon = 1e-14);
        assert!(e.identity_residual().abs() <= 1e-12);

        // Oscillatory energy climbs monotonically toward the left edge.
        let mut prev = f64::NEG_INFINITY;
        for i in (1..=50).rev() {
            let x = i as f64 * 1e-3;
            let osc = energy_decomposition(&u, x).unwrap().e_oscillatory;
            assert!(osc > prev, "x = {x}");
            prev = osc;
        }
        assert!(energy_decomposition(&u, 1e-12).unwrap().e_oscillatory > 25.0);

        let left = energy_decomposition(&u, 0.25).unwrap();
        let right = energy_decomposition(&u, 0.75).unwrap();
        assert_eq!(left.e_oscillatory, right.e_oscillatory);
        assert_abs_diff_eq!(left.e_structural, right.e_structural, epsilon = 1e-15);
        assert_abs_diff_eq!(left.e_total, right.e_total, epsilon = 1e-15);

        assert!(energy_decomposition(&u, 0.0).is_err());
    }

    #[test]
    fn positive_constant_convention_is_offset_by_twice_c() {
        let e = energy_decomposition(&uniform(), 0.3).unwrap();
        assert_abs_diff_eq!(
            e.total_with_positive_constant() - e.e_total,
            2.0 * energy_constant(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_evaluation_is_strategy_independent() {
        let d = Distribution::normal(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..2001).map(|i| -5.0 + i as f64 * 0.005).collect();
        let seq = derangetropy_grid(&d, &xs, Execution::Sequential);
        let par = derangetropy_grid(&d, &xs, Execution::Parallel);
        assert_eq!(seq, par);
    }

    proptest! {
        #[test]
        fn bernoulli_entropy_bounds_and_symmetry(p in 0.0f64..=1.0) {
            let h = bernoulli_entropy(p).unwrap();
            prop_assert!(h >= 0.0 && h <= 2f64.ln() + 1e-15);
            prop_assert!((h - bernoulli_entropy(1.0 - p).unwrap()).abs() <= 1e-15);
        }

        #[test]
        fn rho_is_nonnegative(x in -10.0f64..10.0) {
            for d in Distribution::zoo() {
                prop_assert!(derangetropy(&d, x).rho >= 0.0);
            }
        }

        #[test]
        fn energy_identity_holds(p in 1e-6f64..(1.0 - 1e-6)) {
            for d in Distribution::zoo() {
                let x = d.quantile(p).unwrap();
                let e = energy_decomposition(&d, x).unwrap();
                prop_assert!(e.identity_residual().abs() <= 1e-12, "{}: {}", d, e.identity_residual());
            }
        }

        #[test]
        fn symmetric_densities_give_symmetric_rho(t in 0.0f64..0.5) {
            let cases = [
                Distribution::uniform(0.0, 1.0).unwrap(),
                Distribution::normal(0.0, 1.0).unwrap(),
                Distribution::semicircle(-1.0, 1.0).unwrap(),
                Distribution::arcsin(0.0, 1.0).unwrap(),
            ];
            for d in cases {
                let m = d.median().unwrap();
                let s = t * d.scale().unwrap();
                let left = derangetropy(&d, m - s).rho;
                let right = derangetropy(&d, m + s).rho;
                prop_assert!((left - right).abs() <= 1e-10, "{}: {} vs {}", d, left, right);
            }
        }
    }
}
