//! Turning source record batches into index commits.

mod canonical;
mod schedule;
mod source;

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::index::{Index, IndexError, IndexWriter};
use crate::schema::{names, ReportDocument};

pub use canonical::{canonicalize, parse_datetime, Canonical, CanonicalizeConfig, RejectCode, UnknownFields};
pub use schedule::{run_schedule, RefreshSchedule, Scheduler, SchedulerHandle, TickKind, TickOutcome};
pub use source::{parse_jsonl, DirectorySource, MemorySource, RawRecord, RecordSource, SourceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestBatch {
    pub batch_id: String,
    /// File path or stream name the records came from.
    pub source: String,
    pub received_at: DateTime<Utc>,
    pub records: Vec<RawRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub read: usize,
    pub upserted: usize,
    /// Valid records replaced by a later record with the same id in the same batch.
    pub superseded: usize,
    pub rejected: usize,
    pub reject_reasons: BTreeMap<String, usize>,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
    /// Snapshot published by the batch; `None` when nothing was committed.
    pub snapshot_id: Option<u64>,
    /// Latest `ReportUploadDatetime` among upserted records.
    pub watermark: Option<DateTime<Utc>>,
}

impl IngestStats {
    pub fn is_conserved(&self) -> bool {
        self.read == self.upserted + self.superseded + self.rejected
    }

    fn reject(&mut self, code: RejectCode) {
        self.rejected += 1;
        *self.reject_reasons.entry(code.as_str().to_string()).or_default() += 1;
    }

    pub fn absorb(&mut self, other: &IngestStats) {
        self.read += other.read;
        self.upserted += other.upserted;
        self.superseded += other.superseded;
        self.rejected += other.rejected;
        for (k, v) in &other.reject_reasons {
            *self.reject_reasons.entry(k.clone()).or_default() += v;
        }
        self.elapsed += other.elapsed;
        self.snapshot_id = other.snapshot_id.or(self.snapshot_id);
        self.watermark = self.watermark.max(other.watermark);
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Source(#[from] SourceError),
}

/// Canonicalises and stages every record, then commits once.
///
/// Invalid records are counted and skipped. A storage failure aborts the
/// whole batch before anything becomes visible.
pub fn ingest_batch(index: &Index, batch: &IngestBatch, cfg: &CanonicalizeConfig) -> Result<IngestStats, IngestError> {
    let mut writer = index.writer();
    let mut stats = stage(&mut writer, batch, cfg)?;
    if stats.upserted == 0 {
        writer.rollback();
        return Ok(stats);
    }
    let started = Instant::now();
    let snapshot = writer.commit()?;
    stats.elapsed += started.elapsed();
    stats.snapshot_id = Some(snapshot.id());
    Ok(stats)
}

/// Validates and stages one batch on an open writer without committing.
pub fn stage(writer: &mut IndexWriter<'_>, batch: &IngestBatch, cfg: &CanonicalizeConfig) -> Result<IngestStats, IngestError> {
    let started = Instant::now();
    let mut stats = IngestStats { read: batch.records.len(), ..Default::default() };
    let mut latest: HashMap<String, ReportDocument> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    'records: for record in &batch.records {
        let Canonical { doc, new_fields } = match canonicalize(record, writer.schema(), cfg, &batch.batch_id, batch.received_at) {
            Ok(c) => c,
            Err(code) => {
                stats.reject(code);
                continue;
            }
        };
        for def in new_fields {
            if let Err(e) = writer.register_field(def) {
                tracing::warn!(error = %e, "field could not be registered");
                stats.reject(RejectCode::InvalidDocument);
                continue 'records;
            }
        }
        if writer.validate(&doc).is_err() {
            stats.reject(RejectCode::InvalidDocument);
            continue;
        }
        if latest.insert(doc.doc_id.clone(), doc.clone()).is_some() {
            stats.superseded += 1;
        } else {
            order.push(doc.doc_id.clone());
        }
    }
    for id in order {
        let doc = latest.remove(&id).expect("staged id");
        let upload = doc.datetime(names::REPORT_UPLOAD_DATETIME);
        writer.upsert(doc)?;
        stats.upserted += 1;
        stats.watermark = stats.watermark.max(upload);
    }
    stats.elapsed = started.elapsed();
    Ok(stats)
}
