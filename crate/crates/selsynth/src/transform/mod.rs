//! The reversible data transform: per-column encoders fitted on the original
//! table, row encoding into the concatenated numeric space, and the inverse
//! mapping for generated rows.

pub mod gmm;
pub mod matrix;
pub mod schema;

pub use gmm::{fit_mode_model, ModeModel, ALPHA_CLIP, MAX_MODES, PRUNE_THRESHOLD, SIGMA_FLOOR};
pub use matrix::{inverse_transform, transform, Layout, Segment, SegmentKind, TransformedMatrix};
pub use schema::{ColumnDecl, ColumnMeta, ColumnRole, FittedKind, TableSchema};
