//! Derangetropy: a density-to-density functional built from the CDF.
//!
//! For a density `f` with CDF `F`,
//!
//! ```text
//! rho[f](x) = (24 / (pi e)) * sin(pi F) * F^F * (1 - F)^(1 - F) * f(x)
//! ```
//!
//! The crate evaluates the functional pointwise in several algebraically
//! equivalent forms and splits `-log rho` into oscillatory and structural
//! energies. It also iterates the functional on a grid. The `verify` module
//! checks the closed-form properties of the functional against independent
//! numerical routes.
//!
//! Grid-wide work runs on rayon when the `parallel` feature is enabled
//! (the default); see [`exec::Execution`].

// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod functional;
pub mod numerics;
pub mod recursion;
pub mod verify;

pub use distributions::{Distribution, TabulatedDensity};
pub use error::{Error, Result};
pub use exec::Execution;
pub use functional::{
    bernoulli_entropy, derangetropy, derangetropy_derivative, derangetropy_entropy_form,
    derangetropy_gamma_form, energy_decomposition, DerangetropyValue, EnergyBreakdown,
};
pub use recursion::{ConvergenceMetrics, GridFunction};
pub use verify::{Classification, Equilibrium, VerificationReport};
