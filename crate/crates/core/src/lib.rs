//! Approximate model-X knockoffs: Gaussian knockoffs built from the first two
//! moments of the covariates, feature statistics, knockoff selection and
//! Monte-Carlo diagnostics of the asymptotic FDR conditions.

pub mod diagnostics;
pub mod error;
pub mod knockoff_gen;
pub mod lasso;
pub mod matrix;
pub mod quadrature;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod statistics;

pub use error::{Error, Result};
pub use knockoff_gen::{gaussian_knockoffs, KnockoffModel, RMethod};
pub use matrix::{CovarianceSpec, DataMatrix, GroundTruth, MomentOrigin, ResponseVector};
pub use selection::{knockoff_threshold, select, SelectionResult, ThresholdRule};
pub use statistics::{compute_stats, StatKind, WStats};
