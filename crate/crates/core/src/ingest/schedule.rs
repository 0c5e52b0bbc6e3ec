use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use chrono::{DateTime, NaiveTime, TimeDelta, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{canonicalize, ingest_batch, stage, CanonicalizeConfig, IngestBatch, IngestError, IngestStats, RecordSource};
use crate::index::Index;
use crate::schema::{names, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefreshSchedule {
    pub incremental_every_secs: u64,
    /// Wall-clock time of the nightly gap repair, at `utc_offset_minutes`.
    pub nightly_at: NaiveTime,
    pub utc_offset_minutes: i32,
    pub full_reindex_every_days: u64,
}

impl Default for RefreshSchedule {
    fn default() -> Self {
        RefreshSchedule {
            incremental_every_secs: 20 * 60,
            nightly_at: NaiveTime::MIN,
            utc_offset_minutes: 0,
            full_reindex_every_days: 180,
        }
    }
}

impl RefreshSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if self.incremental_every_secs == 0 {
            return Err("incremental_every_secs must be positive".into());
        }
        if self.full_reindex_every_days == 0 {
            return Err("full_reindex_every_days must be positive".into());
        }
        Ok(())
    }

    fn incremental_every(&self) -> TimeDelta {
        TimeDelta::seconds(self.incremental_every_secs as i64)
    }

    fn full_every(&self) -> TimeDelta {
        TimeDelta::days(self.full_reindex_every_days as i64)
    }

    /// The latest nightly boundary at or before `now`.
    pub fn last_nightly_boundary(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        let offset = TimeDelta::minutes(self.utc_offset_minutes as i64);
        let local = (now + offset).date_naive();
        let at = local.and_time(self.nightly_at).and_utc() - offset;
        if at > now {
            at - TimeDelta::days(1)
        } else {
            at
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickKind {
    /// Records uploaded since the watermark.
    Incremental,
    /// Records uploaded in the last 24 hours, to repair gaps.
    Nightly,
    /// Every record, into a fresh generation that replaces the index at commit.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TickOutcome {
    Ran { kind: TickKind, stats: IngestStats },
    /// Another tick was still running.
    Skipped { kind: TickKind },
    Failed { kind: TickKind, error: String },
}

#[derive(Debug)]
struct State {
    watermark: Option<DateTime<Utc>>,
    last_incremental: Option<DateTime<Utc>>,
    last_nightly: DateTime<Utc>,
    last_full: DateTime<Utc>,
}

/// Serialised refresh ticks against one index.
pub struct Scheduler {
    index: Arc<Index>,
    source: Box<dyn RecordSource>,
    cfg: CanonicalizeConfig,
    schedule: RefreshSchedule,
    state: Mutex<State>,
    running: AtomicBool,
}

impl Scheduler {
    /// Starts with the watermark at the newest upload time already indexed.
    /// Nightly and full ticks first fall due one period after `now`.
    pub fn new(
        index: Arc<Index>,
        source: Box<dyn RecordSource>,
        cfg: CanonicalizeConfig,
        schedule: RefreshSchedule,
        now: DateTime<Utc>,
    ) -> Self {
        let snap = index.snapshot();
        let watermark = snap.live_doc_nums().filter_map(|d| snap.doc(d).datetime(names::REPORT_UPLOAD_DATETIME)).max();
        let state = State {
            watermark,
            last_incremental: None,
            last_nightly: schedule.last_nightly_boundary(now),
            last_full: now,
        };
        Scheduler { index, source, cfg, schedule, state: Mutex::new(state), running: AtomicBool::new(false) }
    }

    pub fn index(&self) -> &Arc<Index> {
        &self.index
    }

    pub fn watermark(&self) -> Option<DateTime<Utc>> {
        self.state.lock().watermark
    }

    /// The tick that should run at `now`, the largest first.
    pub fn due(&self, now: DateTime<Utc>) -> Option<TickKind> {
        let s = self.state.lock();
        if now - s.last_full >= self.schedule.full_every() {
            Some(TickKind::Full)
        } else if self.schedule.last_nightly_boundary(now) > s.last_nightly {
            Some(TickKind::Nightly)
        } else if s.last_incremental.is_none_or(|t| now - t >= self.schedule.incremental_every()) {
            Some(TickKind::Incremental)
        } else {
            None
        }
    }

    /// Runs one tick unless another is in progress. The watermark only moves
    /// when every batch of the tick commits.
    pub fn tick(&self, kind: TickKind, now: DateTime<Utc>) -> TickOutcome {
        if self.running.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return TickOutcome::Skipped { kind };
        }
        let result = self.run(kind, now);
        {
            let mut s = self.state.lock();
            s.last_incremental = Some(now);
            if kind != TickKind::Incremental {
                s.last_nightly = self.schedule.last_nightly_boundary(now);
            }
            if kind == TickKind::Full {
                s.last_full = now;
            }
            if let Ok(stats) = &result {
                s.watermark = s.watermark.max(stats.watermark);
            }
        }
        self.running.store(false, Ordering::Release);
        match result {
            Ok(stats) => {
                tracing::info!(?kind, read = stats.read, upserted = stats.upserted, rejected = stats.rejected, "refresh tick");
                TickOutcome::Ran { kind, stats }
            }
            Err(e) => {
                tracing::warn!(?kind, error = %e, "refresh tick failed");
                TickOutcome::Failed { kind, error: e.to_string() }
            }
        }
    }

    fn run(&self, kind: TickKind, now: DateTime<Utc>) -> Result<IngestStats, IngestError> {
        let batches = self.source.fetch()?;
        let mut total = IngestStats::default();
        match kind {
            TickKind::Full => {
                let mut writer = self.index.writer();
                writer.replace_all();
                for batch in &batches {
                    total.absorb(&stage(&mut writer, batch, &self.cfg)?);
                }
                total.snapshot_id = Some(writer.commit()?.id());
            }
            TickKind::Incremental | TickKind::Nightly => {
                let since = match kind {
                    TickKind::Nightly => Some(now - TimeDelta::hours(24)),
                    _ => self.state.lock().watermark,
                };
                let schema = self.index.snapshot().schema().clone();
                for batch in &batches {
                    let window = self.window(batch, since, &schema);
                    if !window.records.is_empty() {
                        total.absorb(&ingest_batch(&self.index, &window, &self.cfg)?);
                    }
                }
            }
        }
        Ok(total)
    }

    /// Records uploaded at or after `since`; records without an upload time always pass.
    fn window(&self, batch: &IngestBatch, since: Option<DateTime<Utc>>, schema: &Schema) -> IngestBatch {
        let Some(since) = since else { return batch.clone() };
        let records = batch
            .records
            .iter()
            .filter(|r| {
                canonicalize(r, schema, &self.cfg, &batch.batch_id, batch.received_at)
                    .ok()
                    .and_then(|c| c.doc.datetime(names::REPORT_UPLOAD_DATETIME))
                    .is_none_or(|t| t >= since)
            })
            .cloned()
            .collect();
        IngestBatch { records, ..batch.clone() }
    }
}

/// Background thread driving a scheduler on the wall clock.
pub struct SchedulerHandle {
    stop: mpsc::Sender<()>,
    thread: Option<JoinHandle<()>>,
}

impl SchedulerHandle {
    /// Stops after any tick in progress finishes.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        let _ = self.stop.send(());
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for SchedulerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Polls `scheduler.due` every `poll` and runs whatever is due.
pub fn run_schedule(scheduler: Arc<Scheduler>, poll: Duration) -> SchedulerHandle {
    let (tx, rx) = mpsc::channel();
    let thread = std::thread::Builder::new()
        .name("refresh-scheduler".into())
        .spawn(move || loop {
            let now = Utc::now();
            if let Some(kind) = scheduler.due(now) {
                scheduler.tick(kind, now);
            }
            match rx.recv_timeout(poll) {
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                _ => break,
            }
        })
        .expect("spawn scheduler thread");
    SchedulerHandle { stop: tx, thread: Some(thread) }
}
