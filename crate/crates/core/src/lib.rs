//! Source-task selection for multitask learning through a linear surrogate
//! of sampled multitask performances.
//!
//! The crate is `no_std` (with `alloc`). It carries the numerical pipeline:
//!
//! - [`subset`]: task ids, fixed-size subset sampling and enumeration, design matrices.
//! - [`surrogate`]: least-squares fit of the additive set-function surrogate and
//!   the exact population covariance of the uniform subset design.
//! - [`selection`]: thresholding of relevance scores and the threshold grid search.
//! - [`synthworld`]: a linear-Gaussian multitask world with closed-form
//!   hard-parameter-sharing regression.
//! - [`oracle`]: exhaustive baselines and direct checks of the score gap structure.
//! - [`metrics`]: rank correlation, minority-class F1 and MSE.
//!
//! File formats, the external trainer protocol and the command line live in
//! the companion `tasksel` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod selection;
pub mod subset;
pub mod surrogate;
pub mod synthworld;

pub use error::{Error, Result};
pub use oracle::PerformanceOracle;
pub use selection::{SelectionResult, TransferLabel};
pub use subset::{DesignMatrix, PerformanceRecord, Subset, TaskId};
pub use surrogate::{FitDiagnostics, FitOptions, SurrogateModel};
pub use synthworld::{SyntheticWorld, WorldParams};
