//! Tabular data synthesis under query-selectivity constraints.
//!
//! The pipeline: fit a reversible per-column transform on the original table,
//! train a piecewise-linear selectivity estimator on exact selectivities of
//! the transformed data, then train a conditional WGAN whose generator loss
//! carries the estimator's error as an extra supervision term, so synthetic
//! tables preserve the original table's selectivity behavior.

pub mod error;
pub mod estimator;
pub mod eval;
pub mod gan;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod table;
pub mod transform;

pub use error::{Error, Result};

/// Cap the worker-thread pool. A zero count keeps the default; calling after
/// the pool has spun up is an error surfaced as a configuration failure. The
/// sequential build accepts and ignores any cap.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) -> Result<()> {
    Ok(())
}
