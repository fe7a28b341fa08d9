use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::AugmentationResult;
use crate::error::{Error, Result};

/// Append-only JSON-lines store keyed by the exact query string. A later line
/// for the same key replaces the earlier one.
#[derive(Debug, Default)]
pub struct AugmentationCache {
    entries: RwLock<HashMap<String, AugmentationResult>>,
    writer: Mutex<Option<(PathBuf, File)>>,
}

impl AugmentationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Reads `path` if it exists; later `insert`s are appended to it.
    pub fn open(path: &Path) -> Result<Self> {
        let cache = Self::read_only(path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        *cache.writer.lock().unwrap() = Some((path.to_path_buf(), file));
        Ok(cache)
    }

    /// Reads `path` without ever writing to it. A missing file is an empty cache.
    pub fn read_only(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: AugmentationResult =
                    serde_json::from_str(&line).map_err(|e| Error::Malformed {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                entries.insert(r.query_name.clone(), r.normalized());
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn get(&self, query: &str) -> Option<AugmentationResult> {
        self.entries.read().unwrap().get(query).cloned()
    }

    pub fn contains(&self, query: &str) -> bool {
        self.entries.read().unwrap().contains_key(query)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `result`, appending it to the backing file when there is one.
    pub fn insert(&self, result: AugmentationResult) -> Result<()> {
        let result = result.normalized();
        let mut writer = self.writer.lock().unwrap();
        if let Some((path, file)) = writer.as_mut() {
            let line = serde_json::to_string(&result).expect("augmentation results serialize");
            writeln!(file, "{line}").map_err(|e| Error::io(&*path, e))?;
            file.flush().map_err(|e| Error::io(&*path, e))?;
        }
        self.entries
            .write()
            .unwrap()
            .insert(result.query_name.clone(), result);
        Ok(())
    }

    /// Consistent copy of all live entries, ordered by key.
    pub fn snapshot(&self) -> BTreeMap<String, AugmentationResult> {
        self.entries
            .read()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Rewrites `path` with one line per live entry, sorted by key.
    pub fn write_compacted(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in self.snapshot().values() {
            out.push_str(&serde_json::to_string(r).expect("augmentation results serialize"));
            out.push('\n');
        }
        crate::tsv::write_atomic(path, out.as_bytes())
    }
}
