//! File helpers shared by the writers.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| "out".into());
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Runs `write` against a temporary sibling of `path` and renames it into
/// place only if every write succeeded. A failed write leaves no file behind.
pub fn write_atomic<E, F>(path: &Path, write: F) -> Result<(), E>
where
    E: From<AtomicWriteError>,
    F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
{
    let tmp = temp_path(path);
    let file = File::create(&tmp).map_err(|source| AtomicWriteError {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    let result = write(&mut writer).and_then(|()| {
        writer.flush().map_err(|source| {
            E::from(AtomicWriteError {
                path: path.display().to_string(),
                source,
            })
        })
    });
    drop(writer);
    match result {
        Ok(()) => fs::rename(&tmp, path).map_err(|source| {
            let _ = fs::remove_file(&tmp);
            E::from(AtomicWriteError {
                path: path.display().to_string(),
                source,
            })
        }),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{path}")]
pub struct AtomicWriteError {
    pub path: String,
    #[source]
    pub source: io::Error,
}

impl From<AtomicWriteError> for crate::trace::TraceError {
    fn from(e: AtomicWriteError) -> Self {
        crate::trace::TraceError::Io {
            path: e.path,
            source: e.source,
        }
    }
}

/// Writes a string atomically.
pub fn write_string_atomic(path: &Path, contents: &str) -> Result<(), AtomicWriteError> {
    write_atomic(path, |w| {
        w.write_all(contents.as_bytes()).map_err(|source| AtomicWriteError {
            path: path.display().to_string(),
            source,
        })
    })
}
