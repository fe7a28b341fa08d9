//! Minimal tab-separated reading with named columns. Fields never contain tabs
//! or newlines, so no quoting is applied.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub struct TsvTable {
    pub path: PathBuf,
    columns: HashMap<String, usize>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl TsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, h)) => h.trim_end_matches('\r'),
            None => return Err(Error::Schema(format!("{}: missing header row", path.display()))),
        };
        let columns: HashMap<String, usize> = header
            .split('\t')
            .enumerate()
            .map(|(i, c)| (c.trim().to_string(), i))
            .collect();
        let width = columns.len();
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
            if fields.len() > width {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("expected at most {width} fields, found {}", fields.len()),
                });
            }
            rows.push((idx + 1, fields));
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| {
            Error::Schema(format!("{}: missing column `{name}`", self.path.display()))
        })
    }

    pub fn malformed(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }
}

/// Returns field `idx`, or the empty string when the row is short.
pub fn field(fields: &[String], idx: usize) -> &str {
    fields.get(idx).map(String::as_str).unwrap_or("")
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
