//! Sparse hierarchical factorization machines trained with FTRL-Proximal.
//!
//! Five model kinds share one parameter layout: a linear baseline, the
//! factorization machine, the second-order ANOVA regressor, and their
//! hierarchical variants that add a constant context feature. See the
//! [`trainer`] module for the optimization loop and [`cli`] for the binary.

pub mod audit;
pub mod cli;
pub mod data;
pub mod encode;
pub mod error;
pub mod ftrl;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod model_io;
pub mod synth;
pub mod trainer;

pub use audit::{hierarchy_audit, AuditOptions, HierarchyReport};
pub use data::{batch_iter, parse_libsvm, read_libsvm, Dataset, SparseVector, Task};
pub use error::{Error, Result};
pub use ftrl::{FtrlState, HyperParams};
pub use grid::{grid_search, Grid};
pub use loss::LossKind;
pub use metrics::{evaluate, f1_scores, sparsity, EvalReport};
pub use model::{anova_kernel, FactorizedModel, ModelKind};
pub use model_io::{load_model, read_model, save_model, write_model};
pub use trainer::{train, TraceRow, TrainConfig};
