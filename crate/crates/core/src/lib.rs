//! Bandwidth selection for plug-in kernel density level-set estimation.
//!
//! The crate estimates level sets `{f >= c}` of a density from a sample by
//! thresholding a product-kernel density estimate, and picks the bandwidth
//! vector that minimises the asymptotic excess risk of that estimate. It also
//! ships the Monte Carlo machinery used to check the asymptotic risk
//! expansions numerically and a replication harness that compares the
//! selector against least-squares cross-validation.
//!
//! Module map:
//!
//! - [`mixtures`]: ground-truth Gaussian mixtures (density, derivatives,
//!   sampling, highest-density-region levels).
//! - [`kernels`]: univariate kernels of even order and their constants.
//! - [`kde`]: product-kernel estimates of densities and derivatives, pointwise
//!   and on grids.
//! - [`levelset`]: boundary extraction in one and two dimensions and surface
//!   integrals along it.
//! - [`bandwidth`]: the risk objective, its minimiser, surface functionals,
//!   pilots, the plug-in selector and the LSCV baseline.
//! - [`risk`]: symmetric-difference errors, closed-form risks and the
//!   Monte Carlo verifiers.
//! - [`harness`]: the replication runner, Wilcoxon test and result files.

pub mod bandwidth;
pub mod error;
pub mod harness;
pub mod kde;
pub mod kernels;
pub mod levelset;
pub mod mixtures;
pub mod quad;
pub mod risk;
pub mod rng;
pub mod sample;

pub use error::{Error, Result};
pub use kde::{BandwidthVector, GridField, GridSpec};
pub use kernels::{KernelFamily, KernelSpec};
pub use levelset::LevelSetBoundary;
pub use mixtures::{Level, MixtureModel};
pub use sample::Sample;
