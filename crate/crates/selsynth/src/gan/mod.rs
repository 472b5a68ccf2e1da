//! Conditional adversarial synthesis with selectivity supervision: cond
//! vectors, gan-space mapping, the generator/critic pair, and the training
//! loop.

pub mod cond;
pub mod model;
pub mod space;
pub mod train;

pub use cond::{build_cond_vector, sample_condition, sample_condition_with, CondLaw, CondLayout, ConditionDraw};
pub use model::{generate, generate_transformed, GanConfig, GanModel};
pub use space::GanSpace;
pub use train::{EpochStats, GanTrainer, SelSupervision};
