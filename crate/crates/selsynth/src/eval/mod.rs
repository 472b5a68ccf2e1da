//! Evaluation battery over (original, synthetic) table pairs: repeated-row
//! rate, CDF export, pairwise correlation difference, selectivity MSE, and
//! machine-learning utility, plus the paired ablation protocol.

pub mod ablate;
pub mod learners;
pub mod metrics;

pub use ablate::{ablation_compare, AblationOptions, AblationReport};
pub use learners::{ml_utility, MlUtilityReport, Score, TaskKind, TaskSpec};
pub use metrics::{
    cdf_export, pairwise_correlation_difference, repeated_row_rate, selectivity_mse_eval, CdfPoint,
};
