//! State-space multi-graph Ising modeling of binary pattern sequences.
//!
//! The model treats each observed binary pattern as a draw from an Ising
//! model whose natural parameter is a weighted combination of a few fixed
//! graphs. The weights follow a Gaussian random walk and are tracked online
//! by a Laplace-approximated sequential Bayes filter; the graphs themselves
//! are learned online by stochastic gradient ascent on the per-step expected
//! complete-data log-likelihood. The number of graphs is selected by AIC.
//!
//! Modules:
//! - [`ising`]: exact small-N Ising computations by pattern enumeration.
//! - [`filter`]: one-step prediction, Newton-Raphson filter update, per-step
//!   marginal log-likelihood.
//! - [`learner`]: gradient of the per-step objective, graph updates, column
//!   rescaling, and the full online loop.
//! - [`select`]: epoch averages, AIC, candidate sweeps, the full-model
//!   baseline, and a PCA baseline.
//! - [`synth`]: ground-truth generators for benchmark data.
//! - [`raster`]: binary rasters and spike-time binning.
//! - [`io`]: CSV formats, bundles, and run manifests.

pub mod error;
pub mod filter;
pub mod io;
pub mod ising;
pub mod learner;
mod linalg;
pub mod raster;
pub mod select;
mod seed;
pub mod synth;
pub mod trace;

pub use nalgebra;

pub use error::{Error, Result};
pub use filter::{FilterConfig, FilterSettings, NetworkState, StateKind};
pub use ising::{BinaryPattern, GraphMatrix, GraphVector};
pub use learner::{GraphInit, LearnerConfig, OnlineResult};
pub use linalg::min_symmetric_eigenvalue;
pub use raster::BinaryRaster;
pub use trace::{FitRecord, FitTrace};
