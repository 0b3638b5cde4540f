//! Repeated application of the functional to a density sampled on a fixed
//! grid, with concentration diagnostics.

use serde::Serialize;

use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::functional::cdf_weight;
use crate::numerics::{
    cumulative_integral, interpolate, inverse_interpolate, linspace, trapezoid,
    NEGATIVE_DENSITY_SLACK,
};

pub const MIN_POINTS: usize = 101;
pub const DEFAULT_POINTS: usize = 4001;
pub const DEFAULT_TAIL_EPS: f64 = 1e-9;

const MASS_TOLERANCE: f64 = 1e-8;
const CDF_END_TOLERANCE: f64 = 1e-12;

/// A density on a fixed grid together with its CDF at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    xs: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    level: usize,
    origin_median: f64,
    raw_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub x: f64,
    pub density: f64,
    pub cdf: f64,
    pub level: usize,
}

impl GridFunction {
    /// Builds a level-0 grid function from arbitrary nonnegative samples,
    /// normalizing to unit trapezoid mass and integrating for the CDF.
    pub fn from_samples(xs: Vec<f64>, samples: Vec<f64>) -> Result<Self> {
        let raw_mass = trapezoid(&xs, &samples)?;
        let (density, cdf) = normalize(&xs, samples, raw_mass)?;
        let origin_median = inverse_interpolate(&xs, &cdf, 0.5);
        Ok(GridFunction {
            xs,
            density,
            cdf,
            level: 0,
            origin_median,
            raw_mass,
        })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Median of the level-0 grid this function descends from.
    pub fn origin_median(&self) -> f64 {
        self.origin_median
    }

    /// Trapezoid mass before renormalization. Ideally 1 for levels >= 1;
    /// departures measure quadrature drift.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn step(&self) -> f64 {
        (self.xs[self.xs.len() - 1] - self.xs[0]) / (self.xs.len() - 1) as f64
    }

    pub fn width(&self) -> f64 {
        self.xs[self.xs.len() - 1] - self.xs[0]
    }

    pub fn rows(&self) -> impl Iterator<Item = GridRow> + '_ {
        (0..self.xs.len()).map(move |i| GridRow {
            x: self.xs[i],
            density: self.density[i],
            cdf: self.cdf[i],
            level: self.level,
        })
    }

    /// Density interpolated linearly; zero outside the grid.
    pub fn density_at(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > self.xs[self.xs.len() - 1] {
            0.0
        } else {
            interpolate(&self.xs, &self.density, x)
        }
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        interpolate(&self.xs, &self.cdf, x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.xs.len();
        if n < 2 || self.density.len() != n || self.cdf.len() != n {
            return Err(Error::InvalidGrid(format!(
                "length mismatch: {} nodes, {} densities, {} cdf values",
                n,
                self.density.len(),
                self.cdf.len()
            )));
        }
        if let Some(i) = self.xs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid(format!(
                "grid not increasing at node {}",
                i + 1
            )));
        }
        if let Some(i) = self
            .density
            .iter()
            .position(|&d| !(d >= -NEGATIVE_DENSITY_SLACK) || !d.is_finite())
        {
            return Err(Error::InvalidGrid(format!(
                "density {} at node {i}",
                self.density[i]
            )));
        }
        if let Some(i) = self.cdf.windows(2).position(|w| !(w[1] >= w[0])) {
            return Err(Error::InvalidGrid(format!(
                "cdf decreases at node {}",
                i + 1
            )));
        }
        let (first, last) = (self.cdf[0], self.cdf[n - 1]);
        if first.abs() > CDF_END_TOLERANCE || (last - 1.0).abs() > CDF_END_TOLERANCE {
            return Err(Error::InvalidGrid(format!(
                "cdf runs from {first} to {last}"
            )));
        }
        let mass = trapezoid(&self.xs, &self.density)?;
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidGrid(format!("density has mass {mass}")));
        }
        Ok(())
    }
}

fn normalize(xs: &[f64], samples: Vec<f64>, mass: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidGrid(format!("cannot normalize mass {mass}")));
    }
    let density: Vec<f64> = samples.into_iter().map(|v| v / mass).collect();
    let mut cdf = cumulative_integral(xs, &density)?;
    let total = cdf[cdf.len() - 1];
    cdf.iter_mut().for_each(|c| *c = (*c / total).min(1.0));
    let last = cdf.len() - 1;
    cdf[last] = 1.0;
    Ok((density, cdf))
}

/// Samples `d` on `n_points` equally spaced nodes spanning
/// `[quantile(tail_eps), quantile(1 - tail_eps)]`.
///
/// The density is renormalized to unit trapezoid mass. The CDF comes from
/// the distribution itself, rescaled so it runs exactly from 0 to 1 across
/// the grid; a trapezoid CDF would be badly wrong next to an integrable
/// endpoint singularity such as the arcsin density's.
pub fn discretize(d: &Distribution, n_points: usize, tail_eps: f64) -> Result<GridFunction> {
    discretize_with(d, n_points, tail_eps, Execution::default())
}

pub fn discretize_with(
    d: &Distribution,
    n_points: usize,
    tail_eps: f64,
    exec: Execution,
) -> Result<GridFunction> {
    if n_points < MIN_POINTS {
        return Err(Error::domain(format!(
            "need at least {MIN_POINTS} grid points, got {n_points}"
        )));
    }
    if !(tail_eps > 0.0 && tail_eps < 0.1) {
        return Err(Error::domain(format!(
            "tail epsilon must be in (0, 0.1), got {tail_eps}"
        )));
    }
    let (lo, hi) = d.quantile_range(tail_eps)?;
    let xs = linspace(lo, hi, n_points);
    let samples = exec.map_slice(&xs, |&x| d.pdf(x));
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample {
            x: xs[i],
            value: samples[i],
        });
    }
    let raw_mass = trapezoid(&xs, &samples)?;
    if !(raw_mass > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "sampled density has mass {raw_mass}"
        )));
    }
    let density: Vec<f64> = samples.iter().map(|v| v / raw_mass).collect();

    // Exact CDF at interior nodes; the truncated tails are folded into the
    // first and last cells so the ends read exactly 0 and 1.
    let mut cdf = exec.map_slice(&xs, |&x| d.cdf(x));
    cdf[0] = 0.0;
    cdf[n_points - 1] = 1.0;

    let origin_median = inverse_interpolate(&xs, &cdf, 0.5);
    Ok(GridFunction {
        xs,
        density,
        cdf,
        level: 0,
        origin_median,
        raw_mass,
    })
}

/// One step of the recursion: multiply the density node-wise by
/// `K sin(pi G) G^G (1 - G)^(1 - G)` where `G` is the current CDF, then
/// renormalize and re-integrate.
pub fn apply_derangetropy(g: &GridFunction) -> Result<GridFunction> {
    apply_derangetropy_with(g, Execution::default())
}

pub fn apply_derangetropy_with(g: &GridFunction, exec: Execution) -> Result<GridFunction> {
    g.validate()?;
    let next = exec.map_range(g.xs.len(), |i| cdf_weight(g.cdf[i]) * g.density[i]);
    let raw_mass = trapezoid(&g.xs, &next)?;
    let (density, cdf) = normalize(&g.xs, next, raw_mass)?;
    log::debug!(
        "level {} -> {}: pre-renormalization mass {raw_mass:.12}",
        g.level,
        g.level + 1
    );
    Ok(GridFunction {
        xs: g.xs.clone(),
        density,
        cdf,
        level: g.level + 1,
        origin_median: g.origin_median,
        raw_mass,
    })
}

/// Levels `0..=n`, starting with a copy of `g0`.
pub fn iterate(g0: &GridFunction, n: usize) -> Result<Vec<GridFunction>> {
    iterate_with(g0, n, Execution::default())
}

pub fn iterate_with(g0: &GridFunction, n: usize, exec: Execution) -> Result<Vec<GridFunction>> {
    if n < 1 {
        return Err(Error::domain("iteration count must be at least 1"));
    }
    let mut levels = Vec::with_capacity(n + 1);
    levels.push(g0.clone());
    for _ in 0..n {
        let next = apply_derangetropy_with(levels.last().expect("non-empty"), exec)?;
        levels.push(next);
    }
    Ok(levels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceMetrics {
    pub level: usize,
    pub median: f64,
    pub variance: f64,
    pub iqr: f64,
    pub central_mass: f64,
}

/// Half-width of the central window: 5% of the grid width.
pub fn default_delta(g: &GridFunction) -> f64 {
    0.05 * g.width()
}

/// Median and quartiles come from the interpolated CDF. Moments treat the
/// CDF as piecewise linear (density constant on each cell), so they are
/// exact for a uniform level-0 grid. `central_mass` is the probability of
/// `[m0 - delta, m0 + delta]` with `m0` the level-0 median.
pub fn convergence_metrics(g: &GridFunction, delta: f64) -> Result<ConvergenceMetrics> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let xs = &g.xs;
    let cdf = &g.cdf;
    let median = inverse_interpolate(xs, cdf, 0.5);
    let iqr = (inverse_interpolate(xs, cdf, 0.75) - inverse_interpolate(xs, cdf, 0.25)).max(0.0);

    let mut mean = 0.0;
    let mut second = 0.0;
    for i in 0..xs.len() - 1 {
        let mass = cdf[i + 1] - cdf[i];
        let mid = 0.5 * (xs[i] + xs[i + 1]);
        let h = xs[i + 1] - xs[i];
        mean += mass * mid;
        second += mass * (mid * mid + h * h / 12.0);
    }
    let variance = (second - mean * mean).max(0.0);

    let m0 = g.origin_median;
    let central_mass = (g.cdf_at(m0 + delta) - g.cdf_at(m0 - delta)).clamp(0.0, 1.0);
    Ok(ConvergenceMetrics {
        level: g.level,
        median,
        variance,
        iqr,
        central_mass,
    })
}

/// `sqrt(integral (rho1 - rho2)^2)` over the overlap of the two grids,
/// evaluated on the nodes of `g1` with `g2` interpolated onto them.
pub fn l2_distance(g1: &GridFunction, g2: &GridFunction) -> Result<f64> {
    let lo = g1.xs[0].max(g2.xs[0]);
    let hi = g1.xs[g1.xs.len() - 1].min(g2.xs[g2.xs.len() - 1]);
    if !(lo < hi) {
        return Err(Error::GridMismatch(format!(
            "supports [{}, {}] and [{}, {}] do not overlap",
            g1.xs[0],
            g1.xs[g1.xs.len() - 1],
            g2.xs[0],
            g2.xs[g2.xs.len() - 1]
        )));
    }
    let (xs, sq): (Vec<f64>, Vec<f64>) = g1
        .xs
        .iter()
        .zip(&g1.density)
        .filter(|(&x, _)| x >= lo && x <= hi)
        .map(|(&x, &d)| {
            let diff = d - interpolate(&g2.xs, &g2.density, x);
            (x, diff * diff)
        })
        .unzip();
    if xs.len() < 2 {
        return Err(Error::GridMismatch(
            "fewer than two nodes of the first grid lie in the overlap".into(),
        ));
    }
    Ok(trapezoid(&xs, &sq)?.sqrt())
}
