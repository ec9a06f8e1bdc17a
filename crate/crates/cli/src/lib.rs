//! Batch front end for `fundus-core`: every task reads files, writes one
//! artifact set per input and a `summary.json` into the output directory.

pub mod manifest;
pub mod summary;
mod tasks;

use std::fs;

pub use manifest::{JobManifest, ManifestError, Params, Task};
pub use summary::{FileReport, FileStatus, RunSummary};
pub use tasks::FrameFile;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_BAD_MANIFEST: i32 = 2;

/// Validates the manifest, runs the task over all inputs and writes
/// `summary.json`. Per-item failures are recorded in the summary; only
/// manifest-level problems return `Err`.
pub fn run(m: &JobManifest) -> Result<RunSummary, ManifestError> {
    m.validate()?;
    fs::create_dir_all(&m.output).map_err(|source| ManifestError::Output {
        path: m.output.clone(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(m.params.workers)
        .build()
        .expect("thread pool");
    let summary = pool.install(|| tasks::dispatch(m))?;
    let path = m.output.join("summary.json");
    fs::write(&path, summary.to_json()).map_err(|source| ManifestError::Output { path, source })?;
    Ok(summary)
}
