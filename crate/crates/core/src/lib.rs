//! Asymptotic-preserving Euler schemes for slow-fast stochastic differential
//! equations whose slow component is driven by a fractional Brownian motion
//! with Hurst index `H > 1/2` and whose fast component is an
//! Ornstein-Uhlenbeck process.
//!
//! The crate is organised bottom-up:
//!
//! - [`fbm`]: time grids, exact fBm samplers and Hölder diagnostics.
//! - [`noise`]: exact OU stepping and Brownian drivers.
//! - [`expr`]: the coefficient-expression language `g(x, m)`.
//! - [`averaging`]: Gauss-Hermite averages of `g` against `N(0, 1)`.
//! - [`schemes`]: the AP scheme, its limit, the averaged scheme, the
//!   implicit-OU negative control and the variation recursions.
//! - [`stats`]: estimators for convergence in probability / in law and
//!   log-log rate fits.
//! - [`catalog`]: the named test systems used across experiments.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod catalog;
pub mod error;
pub mod expr;
pub mod fbm;
pub mod noise;
pub mod rng;
pub mod schemes;
pub mod stats;

pub use averaging::{AverageKind, AveragedCoeff, GaussHermite, DEFAULT_QUAD_ORDER};
pub use error::{Error, Result};
pub use expr::{CoeffExpr, ExprError};
pub use fbm::{FbmPath, HurstIndex, TimeGrid};
pub use noise::{GaussianSeq, OuParams, TimeScale};
pub use rng::{substream, Stream};
pub use schemes::{Driver, SchemeKind, SchemeTrajectory, SystemSpec, VariationState};
pub use stats::{ConvergenceReport, Estimate, RateFit, TestFunction};
