//! Simulation and numerical verification engine for fractional Lévy
//! processes, fractional Lévy Ornstein-Uhlenbeck processes with Gamma random
//! coefficients, their aggregates, and the Gamma-mixed limit process.
//!
//! The crate is organized around the process hierarchy:
//!
//! - [`levy_noise`]: the zero-mean driving Lévy process, its increments and
//!   cumulant.
//! - [`flp`]: the fractional Lévy process built on it, with all of its
//!   second-order closed forms.
//! - [`flou`]: Ornstein-Uhlenbeck processes driven by the fLp, with fixed and
//!   Gamma-random mean-reversion coefficients, and their aggregates.
//! - [`gmflou`]: the Gamma-mixed limit process, its moments, characteristic
//!   function, and the two alpha-asymptotic companions.
//! - [`stats`]: the Monte Carlo verification harness.
//!
//! Closed forms and quadrature are generic over the floating-point type via
//! [`scalar::Scalar`]; simulation and statistics run at [`Real`].

pub mod conv;
pub mod csvio;
pub mod ensemble;
pub mod error;
pub mod flou;
pub mod flp;
pub mod gmflou;
pub mod grid;
pub mod levy_noise;
pub mod quad;
pub mod scalar;
pub mod special;
pub mod stats;

/// Scalar type used by simulation and statistics.
pub type Real = f64;
/// Complex type used by characteristic functions.
pub type CReal = num_complex::Complex<f64>;

pub use error::{Error, Result};
pub use grid::{PathEnsemble, SampleGrid, Truncation};
pub use levy_noise::{JumpDist, LevyKind, LevySpec, SeedLineage};
pub use scalar::Scalar;
