//! Segment and manifest persistence.
//!
//! Layout of a data directory:
//!
//! ```text
//! manifest.json            schema, analyzer, live segments and their tombstones
//! segments/seg-000001.jsonl  one stored document per line, append-only
//! ```
//!
//! The manifest is replaced atomically (write + rename); a segment file not
//! named by the manifest is garbage from an aborted commit.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalyzerConfig;
use crate::schema::{ReportDocument, Schema};

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub snapshot_id: u64,
    pub next_segment_id: u64,
    pub schema: Schema,
    pub analyzer: AnalyzerConfig,
    pub segments: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub id: u64,
    pub doc_count: usize,
    /// Ordinals of deleted documents.
    #[serde(default)]
    pub deleted: Vec<u32>,
}

pub trait Storage: Send + Sync + std::fmt::Debug {
    fn write_segment(&self, id: u64, docs: &[ReportDocument]) -> io::Result<()>;
    fn write_manifest(&self, manifest: &Manifest) -> io::Result<()>;
    /// Removes segment files no longer referenced. Best effort.
    fn remove_segment(&self, _id: u64) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps nothing; the index lives only in memory.
#[derive(Debug, Default)]
pub struct MemoryStorage;

impl Storage for MemoryStorage {
    fn write_segment(&self, _id: u64, _docs: &[ReportDocument]) -> io::Result<()> {
        Ok(())
    }

    fn write_manifest(&self, _manifest: &Manifest) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DirectoryStorage {
    root: PathBuf,
}

impl DirectoryStorage {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("segments"))?;
        Ok(DirectoryStorage { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn segment_path(&self, id: u64) -> PathBuf {
        self.root.join("segments").join(format!("seg-{id:06}.jsonl"))
    }

    pub fn read_manifest(&self) -> io::Result<Option<Manifest>> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(None);
        }
        let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported manifest format {}", manifest.format),
            ));
        }
        Ok(Some(manifest))
    }

    pub fn read_segment(&self, id: u64) -> io::Result<Vec<ReportDocument>> {
        let reader = BufReader::new(File::open(self.segment_path(id))?);
        reader
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|line| serde_json::from_str(&line?).map_err(io::Error::from))
            .collect()
    }
}

impl Storage for DirectoryStorage {
    fn write_segment(&self, id: u64, docs: &[ReportDocument]) -> io::Result<()> {
        let path = self.segment_path(id);
        let tmp = path.with_extension("jsonl.tmp");
        let mut out = BufWriter::new(File::create(&tmp)?);
        for doc in docs {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(tmp, path)
    }

    fn write_manifest(&self, manifest: &Manifest) -> io::Result<()> {
        let path = self.manifest_path();
        let tmp = path.with_extension("json.tmp");
        let mut file = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut file, manifest)?;
        file.sync_all()?;
        fs::rename(tmp, path)
    }

    fn remove_segment(&self, id: u64) -> io::Result<()> {
        match fs::remove_file(self.segment_path(id)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }
}
