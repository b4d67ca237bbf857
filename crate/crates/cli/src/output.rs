//! Run identifiers and atomic file output.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{io_err, CliResult};

/// First 16 hex digits of the SHA-256 of `text`.
pub fn run_id(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(&format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| io_err(&format!("creating temporary file in {}", dir.display()), e))?;
    tmp.write_all(contents)
        .and_then(|_| tmp.flush())
        .map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| io_err(&format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}
