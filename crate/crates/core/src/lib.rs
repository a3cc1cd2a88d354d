//! Phase retrieval by generalized proximal smoothing.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: lattices, complex fields, the unitary 2D DFT, radial maps and
//!   Gaussian low-pass filters.
//! * [`prox`]: proximal mappings and projections used by every solver.
//! * [`solver`]: the primal-dual GPS iterations (real-space, Fourier-space and
//!   combined smoothing) together with the ER, HIO and OSS baselines.
//! * [`sim`]: phantoms, oversampling and the Poisson + Gaussian detector model.
//! * [`metrics`]: R-factors, real-space error with ambiguity registration and
//!   batch aggregation.

pub mod error;
pub mod grid;
pub mod metrics;
pub mod prox;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{dft2, idft2, radial_map, Domain, Field, Lattice, RadialMap, SupportMask};
pub use metrics::{aggregate, aggregate_embedded, r_real, residual, BatchSummary};
pub use prox::{FidelityWeight, MagnitudeData, SmoothingMode, SmoothingParam};
pub use sim::{NoiseSpec, Phantom, PhantomKind};
pub use solver::{
    rf_factor, run, run_baseline, run_gps, sigma_at, Algorithm, GpsVariant, RunRecord, Schedule,
    SolverConfig,
};
