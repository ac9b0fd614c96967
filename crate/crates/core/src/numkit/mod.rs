//! Shared numerical building blocks.

pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod stats;
pub mod stiefel;
pub mod svm;

pub use kernel::{kernel_matrix, KernelSpec};
pub use linalg::{laplacian, ridge_solve};
pub use metrics::{classification_metrics, rmse, ClassificationMetrics};
pub use stats::t_test_one_tailed;
pub use stiefel::{stiefel_minimize, StiefelOptions, StiefelProblem, StiefelResult};
pub use svm::{svm_train, SvmOptions, SvmSolution};
