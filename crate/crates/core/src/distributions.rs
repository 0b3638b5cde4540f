//! Univariate distributions exposing density, density slope, CDF and
//! quantile: a small analytic zoo plus densities tabulated on a grid.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::io::Read;
use std::path::Path;

use libm::erfc;

use crate::error::{Error, Result};
use crate::numerics::{cumulative_integral, find_root, interpolate, trapezoid};

/// Minimum number of data rows in a tabulated-density file.
pub const MIN_TABULATED_ROWS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    xs: Vec<f64>,
    fs: Vec<f64>,
    cdf: Vec<f64>,
    slopes: Vec<f64>,
    normalization: f64,
}

impl TabulatedDensity {
    /// Builds a density from samples, rescaling `fs` to unit trapezoid mass.
    pub fn new(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if xs.len() != fs.len() {
            return Err(Error::GridMismatch(format!(
                "{} abscissae but {} densities",
                xs.len(),
                fs.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::GridMismatch("need at least two samples".into()));
        }
        if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parse(format!("non-finite x at row {i}")));
        }
        if let Some(index) = xs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneGrid { index: index + 1 });
        }
        if let Some((index, &value)) = fs.iter().enumerate().find(|(_, f)| !(**f >= 0.0)) {
            return Err(if value.is_finite() {
                Error::NegativeDensity { index, value }
            } else {
                Error::Parse(format!("non-finite density at row {index}"))
            });
        }
        let mass = trapezoid(&xs, &fs)?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::domain(format!("tabulated density has mass {mass}")));
        }
        let normalization = 1.0 / mass;
        let fs: Vec<f64> = fs.iter().map(|f| f * normalization).collect();
        let mut cdf = cumulative_integral(&xs, &fs)?;
        let total = *cdf.last().expect("non-empty");
        cdf.iter_mut().for_each(|c| *c /= total);
        let slopes = nodal_slopes(&xs, &fs);
        Ok(TabulatedDensity {
            xs,
            fs,
            cdf,
            slopes,
            normalization,
        })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Normalized density values at the grid nodes.
    pub fn fs(&self) -> &[f64] {
        &self.fs
    }

    /// Factor applied to the raw samples to reach unit mass.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    fn lo(&self) -> f64 {
        self.xs[0]
    }

    fn hi(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    fn cell(&self, x: f64) -> usize {
        (self.xs.partition_point(|&v| v <= x) - 1).min(self.xs.len() - 2)
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        interpolate(&self.xs, &self.fs, x)
    }

    // Exact integral of the linear interpolant.
    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return 0.0;
        }
        if x >= self.hi() {
            return 1.0;
        }
        let i = self.cell(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = x - self.xs[i];
        let slope = (self.fs[i + 1] - self.fs[i]) / h;
        let partial = self.fs[i] * t + 0.5 * slope * t * t;
        // The node values are trapezoid sums divided by the total; apply the
        // same scale to the partial cell.
        let scale = (self.cdf[i + 1] - self.cdf[i]) / (0.5 * h * (self.fs[i] + self.fs[i + 1]));
        let partial = if scale.is_finite() {
            partial * scale
        } else {
            0.0
        };
        (self.cdf[i] + partial).clamp(0.0, 1.0)
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        let i = self
            .cdf
            .partition_point(|&c| c < p)
            .clamp(1, self.xs.len() - 1);
        let (a, b) = (self.xs[i - 1], self.xs[i]);
        find_root(
            |x| self.cdf(x) - p,
            a,
            b,
            1e-15 * (b - a).max(f64::MIN_POSITIVE),
        )
    }

    fn pdf_derivative(&self, x: f64) -> f64 {
        interpolate(&self.xs, &self.slopes, x)
    }
}

// Second-order finite-difference slopes at the nodes of a non-uniform grid,
// one-sided at the ends.
fn nodal_slopes(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut out = vec![0.0; n];
    if n == 2 {
        let s = (fs[1] - fs[0]) / (xs[1] - xs[0]);
        return vec![s, s];
    }
    for i in 1..n - 1 {
        let hl = xs[i] - xs[i - 1];
        let hr = xs[i + 1] - xs[i];
        out[i] = (hl * hl * fs[i + 1] - hr * hr * fs[i - 1] + (hr * hr - hl * hl) * fs[i])
            / (hl * hr * (hl + hr));
    }
    out[0] = (fs[1] - fs[0]) / (xs[1] - xs[0]);
    out[n - 1] = (fs[n - 1] - fs[n - 2]) / (xs[n - 1] - xs[n - 2]);
    out
}

/// A probability law on the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Uniform {
        a: f64,
        b: f64,
    },
    Normal {
        mean: f64,
        std_dev: f64,
    },
    Exponential {
        rate: f64,
    },
    /// Wigner semicircle rescaled to `(a, b)`.
    Semicircle {
        a: f64,
        b: f64,
    },
    Arcsin {
        a: f64,
        b: f64,
    },
    Tabulated(TabulatedDensity),
}

// CDF of a law symmetric on (a, b), given its lower-half CDF as a function
// of s = (x - a) / (b - a). The upper half is evaluated from the right edge
// so that both tails keep full relative precision.
fn reflected(a: f64, b: f64, x: f64, lower: impl Fn(f64) -> f64) -> f64 {
    let s = (x - a) / (b - a);
    if s <= 0.5 {
        lower(s)
    } else {
        1.0 - lower((b - x) / (b - a))
    }
}

fn check_interval(family: &str, a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{family} needs finite a < b, got ({a}, {b})"
        )))
    }
}

impl Distribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        check_interval("uniform", a, b)?;
        Ok(Distribution::Uniform { a, b })
    }

    pub fn normal(mean: f64, std_dev: f64) -> Result<Self> {
        if !(mean.is_finite() && std_dev > 0.0 && std_dev.is_finite()) {
            return Err(Error::domain(format!(
                "normal needs finite mean and sigma > 0, got ({mean}, {std_dev})"
            )));
        }
        Ok(Distribution::Normal { mean, std_dev })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::domain(format!(
                "exponential needs rate > 0, got {rate}"
            )));
        }
        Ok(Distribution::Exponential { rate })
    }

    pub fn semicircle(a: f64, b: f64) -> Result<Self> {
        check_interval("semicircle", a, b)?;
        Ok(Distribution::Semicircle { a, b })
    }

    pub fn arcsin(a: f64, b: f64) -> Result<Self> {
        check_interval("arcsin", a, b)?;
        Ok(Distribution::Arcsin { a, b })
    }

    pub fn tabulated(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        TabulatedDensity::new(xs, fs).map(Distribution::Tabulated)
    }

    /// Uniform(0,1), Normal(0,1), Exponential(1), Semicircle(-1,1), Arcsin(0,1).
    pub fn zoo() -> Vec<Distribution> {
        vec![
            Distribution::Uniform { a: 0.0, b: 1.0 },
            Distribution::Normal {
                mean: 0.0,
                std_dev: 1.0,
            },
            Distribution::Exponential { rate: 1.0 },
            Distribution::Semicircle { a: -1.0, b: 1.0 },
            Distribution::Arcsin { a: 0.0, b: 1.0 },
        ]
    }

    /// Closed support; ends may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Uniform { a, b }
            | Distribution::Semicircle { a, b }
            | Distribution::Arcsin { a, b } => (a, b),
            Distribution::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Distribution::Exponential { .. } => (0.0, f64::INFINITY),
            Distribution::Tabulated(ref t) => (t.lo(), t.hi()),
        }
    }

    /// `[quantile(eps), quantile(1 - eps)]`.
    pub fn quantile_range(&self, eps: f64) -> Result<(f64, f64)> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::domain(format!(
                "tail epsilon must be in (0, 0.5), got {eps}"
            )));
        }
        let (lo, hi) = self.support();
        // A tail quantile can round onto a finite support end.
        let q_lo = self.quantile(eps)?.max(lo.next_up());
        let q_hi = self.upper_quantile(eps)?.min(hi.next_down());
        Ok((q_lo, q_hi))
    }

    /// Support with infinite ends replaced by the `eps` / `1 - eps` quantiles.
    pub fn truncated_support(&self, eps: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.support();
        let lo = if lo.is_finite() {
            lo
        } else {
            self.quantile(eps)?
        };
        let hi = if hi.is_finite() {
            hi
        } else {
            self.upper_quantile(eps)?
        };
        Ok((lo, hi))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x.is_nan() || x < lo || x > hi {
            return 0.0;
        }
        match *self {
            Distribution::Uniform { a, b } => 1.0 / (b - a),
            Distribution::Normal { mean, std_dev } => {
                let z = (x - mean) / std_dev;
                (-0.5 * z * z).exp() / (std_dev * (2.0 * PI).sqrt())
            }
            Distribution::Exponential { rate } => rate * (-rate * x).exp(),
            Distribution::Semicircle { a, b } => {
                let w = b - a;
                8.0 / (PI * w * w) * ((x - a) * (b - x)).max(0.0).sqrt()
            }
            Distribution::Arcsin { a, b } => 1.0 / (PI * ((x - a) * (b - x)).sqrt()),
            Distribution::Tabulated(ref t) => t.pdf(x),
        }
    }

    /// Slope of the density; only defined strictly inside the support.
    pub fn pdf_derivative(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(x > lo && x < hi) {
            return Err(Error::domain(format!(
                "pdf derivative requires x strictly inside ({lo}, {hi}), got {x}"
            )));
        }
        Ok(match *self {
            Distribution::Uniform { .. } => 0.0,
            Distribution::Normal { mean, std_dev } => {
                -(x - mean) / (std_dev * std_dev) * self.pdf(x)
            }
            Distribution::Exponential { rate } => -rate * self.pdf(x),
            Distribution::Semicircle { a, b } => {
                let w = b - a;
                8.0 / (PI * w * w) * (a + b - 2.0 * x) / (2.0 * ((x - a) * (b - x)).sqrt())
            }
            Distribution::Arcsin { a, b } => {
                let q = (x - a) * (b - x);
                -(a + b - 2.0 * x) / (2.0 * PI * q * q.sqrt())
            }
            Distribution::Tabulated(ref t) => t.pdf_derivative(x),
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let p = match *self {
            Distribution::Uniform { a, b } => (x - a) / (b - a),
            Distribution::Normal { mean, std_dev } => {
                0.5 * erfc(-(x - mean) / std_dev * FRAC_1_SQRT_2)
            }
            Distribution::Exponential { rate } => -(-rate * x).exp_m1(),
            Distribution::Semicircle { a, b } => reflected(a, b, x, |s| {
                (2.0 * s.sqrt().asin() + (2.0 * s - 1.0) * 2.0 * (s * (1.0 - s)).sqrt()) / PI
            }),
            Distribution::Arcsin { a, b } => reflected(a, b, x, |s| 2.0 / PI * s.sqrt().asin()),
            Distribution::Tabulated(ref t) => t.cdf(x),
        };
        p.clamp(0.0, 1.0)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must be in (0, 1), got {p}"
            )));
        }
        match *self {
            Distribution::Uniform { a, b } => Ok(a + p * (b - a)),
            Distribution::Exponential { rate } => Ok(-(-p).ln_1p() / rate),
            Distribution::Arcsin { a, b } => {
                let lower = |q: f64| {
                    let s = (0.5 * PI * q).sin();
                    (b - a) * s * s
                };
                Ok(if p <= 0.5 {
                    a + lower(p)
                } else {
                    b - lower(1.0 - p)
                })
            }
            Distribution::Normal { mean, std_dev } => {
                // Solve in the lower tail, where the CDF keeps full relative
                // precision, and reflect through the mean for p > 1/2.
                let q = p.min(1.0 - p);
                let (lo, hi) = (mean - 40.0 * std_dev, mean);
                let x = find_root(|x| self.cdf(x) - q, lo, hi, 1e-14 * std_dev)?;
                Ok(if p > 0.5 { 2.0 * mean - x } else { x })
            }
            Distribution::Semicircle { a, b } => {
                find_root(|x| self.cdf(x) - p, a, b, 1e-15 * (b - a))
            }
            Distribution::Tabulated(ref t) => t.quantile(p),
        }
    }

    /// Point with upper-tail mass `q`, i.e. `quantile(1 - q)` without
    /// rounding `1 - q`.
    pub fn upper_quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!(
                "tail mass must be in (0, 1), got {q}"
            )));
        }
        match *self {
            Distribution::Uniform { a, b } => Ok(b - q * (b - a)),
            Distribution::Exponential { rate } => Ok(-q.ln() / rate),
            Distribution::Normal { mean, .. } => Ok(2.0 * mean - self.quantile(q)?),
            Distribution::Semicircle { a, b } | Distribution::Arcsin { a, b } => {
                Ok(a + b - self.quantile(q)?)
            }
            Distribution::Tabulated(_) => self.quantile(1.0 - q),
        }
    }

    pub fn median(&self) -> Result<f64> {
        self.quantile(0.5)
    }

    /// Width used to scale finite-difference steps: support width when
    /// finite, interquartile range otherwise.
    pub fn scale(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        if lo.is_finite() && hi.is_finite() {
            Ok(hi - lo)
        } else {
            Ok(self.quantile(0.75)? - self.quantile(0.25)?)
        }
    }

    pub fn normalization_factor(&self) -> Option<f64> {
        match self {
            Distribution::Tabulated(t) => Some(t.normalization()),
            _ => None,
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Distribution::Uniform { a, b } => write!(f, "uniform({a},{b})"),
            Distribution::Normal { mean, std_dev } => write!(f, "normal({mean},{std_dev})"),
            Distribution::Exponential { rate } => write!(f, "exponential({rate})"),
            Distribution::Semicircle { a, b } => write!(f, "semicircle({a},{b})"),
            Distribution::Arcsin { a, b } => write!(f, "arcsin({a},{b})"),
            Distribution::Tabulated(ref t) => {
                write!(
                    f,
                    "tabulated({} points on [{}, {}])",
                    t.xs.len(),
                    t.lo(),
                    t.hi()
                )
            }
        }
    }
}

/// Reads a tabulated density from CSV with a header naming columns `x` and
/// `f`. Other columns are ignored, so `eval` output can be fed back in.
pub fn load_tabulated(path: impl AsRef<Path>) -> Result<Distribution> {
    let file = std::fs::File::open(path.as_ref())?;
    read_tabulated(file)
}

pub fn read_tabulated<R: Read>(reader: R) -> Result<Distribution> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}` in header {headers:?}")))
    };
    let (xi, fi) = (column("x")?, column("f")?);
    let mut xs = Vec::new();
    let mut fs = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| -> Result<f64> {
            let raw = record
                .get(i)
                .ok_or_else(|| Error::Parse(format!("row {}: missing field {i}", row + 1)))?;
            raw.parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: `{raw}`: {e}", row + 1)))
        };
        xs.push(field(xi)?);
        fs.push(field(fi)?);
    }
    if xs.len() < MIN_TABULATED_ROWS {
        return Err(Error::Parse(format!(
            "need at least {MIN_TABULATED_ROWS} rows, got {}",
            xs.len()
        )));
    }
    Distribution::tabulated(xs, fs)
}
