//! Atomic file output and the versioned CSV layout.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// First line of every CSV file.
pub const SCHEMA_LINE: &str = "# percond-schema v1";

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Output(e.to_string()))?;
    tmp.write_all(bytes).map_err(|e| CliError::Output(e.to_string()))?;
    tmp.as_file().sync_all().map_err(|e| CliError::Output(e.to_string()))?;
    tmp.persist(path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// CSV with the schema comment, the `header` row, then `rows`.
pub fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> CliResult<Vec<u8>> {
    let mut buf = format!("{SCHEMA_LINE}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(header).map_err(|e| CliError::Output(e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Output(e.to_string()))?;
    }
    Ok(buf)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> CliResult<()> {
    write_atomic(path, &csv_bytes(rows, header)?)
}
