use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::Prediction;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a line-delimited prediction file. A torn final line (no trailing
/// newline, not valid JSON) is what an interrupted writer leaves behind and is
/// skipped; damage anywhere else is an error.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(p) => out.push(p),
            Err(_) if n + 1 == lines.len() && !complete => {
                tracing::warn!(path = %path.display(), "ignoring torn final line");
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Append-only sink, flushed after every record.
pub struct PredictionWriter {
    path: PathBuf,
    file: File,
}

impl PredictionWriter {
    /// Opens `path` for appending, first cutting off any torn final line.
    pub fn open_append(path: &Path) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        if path.exists() {
            let bytes = fs::read(path).map_err(io_err(path))?;
            if !bytes.is_empty() && !bytes.ends_with(b"\n") {
                let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
                let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                f.set_len(keep as u64).map_err(io_err(path))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(PredictionWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn write(&mut self, p: &Prediction) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(p).expect("prediction serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))
    }
}

/// Rewrites `partial` into `dest` sorted by example index (first record per
/// index wins) and removes `partial`.
pub fn finalize_predictions(partial: &Path, dest: &Path) -> Result<Vec<Prediction>, StoreError> {
    let mut by_index: BTreeMap<usize, Prediction> = BTreeMap::new();
    for p in read_predictions(partial)? {
        by_index.entry(p.example_index).or_insert(p);
    }
    let preds: Vec<Prediction> = by_index.into_values().collect();
    write_sorted(dest, &preds)?;
    fs::remove_file(partial).map_err(io_err(partial))?;
    Ok(preds)
}

pub(crate) fn write_sorted(dest: &Path, preds: &[Prediction]) -> Result<(), StoreError> {
    let mut body = String::new();
    for p in preds {
        body.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        body.push('\n');
    }
    let tmp = dest.with_extension("tmp");
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, dest).map_err(io_err(dest))
}
