use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::IngestBatch;

/// One line of a record file: parsed JSON, or the reason it could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawRecord {
    Json(Value),
    Malformed { line: usize, error: String },
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("source unavailable: {0}")]
    Unavailable(String),
}

/// Splits JSON Lines text into records. Blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Vec<RawRecord> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match serde_json::from_str(l) {
            Ok(v) => RawRecord::Json(v),
            Err(e) => RawRecord::Malformed { line: i + 1, error: e.to_string() },
        })
        .collect()
}

/// Where scheduled ingestion pulls records from.
pub trait RecordSource: Send + Sync {
    /// Every batch currently available, in processing order.
    fn fetch(&self) -> Result<Vec<IngestBatch>, SourceError>;
}

/// A drop directory of `.jsonl` files, one batch per file, read in file-name order.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    dir: PathBuf,
}

impl DirectorySource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirectorySource { dir: dir.into() }
    }

    pub fn read_file(path: &Path) -> Result<IngestBatch, SourceError> {
        let text = std::fs::read_to_string(path).map_err(|source| SourceError::Io { path: path.to_path_buf(), source })?;
        Ok(IngestBatch {
            batch_id: path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
            source: path.display().to_string(),
            received_at: Utc::now(),
            records: parse_jsonl(&text),
        })
    }

    /// Record files directly inside `dir`, sorted by name.
    pub fn files(dir: &Path) -> Result<Vec<PathBuf>, SourceError> {
        let io = |source| SourceError::Io { path: dir.to_path_buf(), source };
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl" || x == "ndjson"))
            .collect();
        files.sort();
        Ok(files)
    }
}

impl RecordSource for DirectorySource {
    fn fetch(&self) -> Result<Vec<IngestBatch>, SourceError> {
        Self::files(&self.dir)?.iter().map(|p| Self::read_file(p)).collect()
    }
}

/// In-process source, shareable with the code that feeds it.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    inner: Arc<Mutex<MemoryState>>,
}

#[derive(Debug, Default)]
struct MemoryState {
    batches: Vec<IngestBatch>,
    unavailable: bool,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, batch: IngestBatch) {
        self.inner.lock().batches.push(batch);
    }

    /// Replaces every record with the given batch list.
    pub fn set(&self, batches: Vec<IngestBatch>) {
        self.inner.lock().batches = batches;
    }

    pub fn set_unavailable(&self, down: bool) {
        self.inner.lock().unavailable = down;
    }
}

impl RecordSource for MemorySource {
    fn fetch(&self) -> Result<Vec<IngestBatch>, SourceError> {
        let state = self.inner.lock();
        if state.unavailable {
            return Err(SourceError::Unavailable("memory source marked down".into()));
        }
        Ok(state.batches.clone())
    }
}
