//! Files read and written by the command-line tool.

pub mod archive;
pub mod config;
pub mod events;
pub mod tables;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use archive::{decode_archive, encode_archive, read_draws, write_draws, ArchiveMeta, DrawArchive, ARCHIVE_VERSION};
pub use config::{config_hash, BaselineConfig, EvaluationConfig, RegionConfig, RunConfig};
pub use events::{read_events, read_points, read_region, write_events, Binning, EventTable, RejectedRow};

/// Decimal text with 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
