//! File formats and run configuration.
//!
//! * noise-sample CSV ([`samples`])
//! * Touchstone 2-port subset ([`touchstone`])
//! * versioned JSON documents, run configuration and plot-ready CSV tables
//!   ([`document`])
//!
//! All writers are deterministic and replace their target atomically.

pub mod document;
pub mod samples;
pub mod touchstone;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use document::{read_document, read_run_config, write_document, Document, Meta, RunConfig};
pub use samples::{read_noise_csv, write_noise_csv};
pub use touchstone::{read_touchstone_subset, SParamTable};

/// Write `bytes` to a temporary file next to `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Fixed float formatting used by all CSV writers: 17 significant digits,
/// enough for a lossless round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
