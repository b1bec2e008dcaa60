//! Configuration, persistence, reporting and the worker pool.

pub mod config;
pub mod io;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind, FieldSpec, Numerics};
pub use report::emit_report;
pub use run::{run_experiment, Manifest};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "HOMOLAB_THREADS";

/// Builds the global rayon pool, capped by `HOMOLAB_THREADS` when set.
/// Returns the number of workers in use.
pub fn configure_workers() -> crate::Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| crate::Error::Validation(vec![format!("{THREADS_ENV}={v} must be a positive integer")]))?;
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}
