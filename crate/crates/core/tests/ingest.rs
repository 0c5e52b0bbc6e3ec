use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::time::Duration;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use radsearch_core::analysis::AnalyzerConfig;
use radsearch_core::index::storage::{Manifest, Storage};
use radsearch_core::index::{Index, IndexOptions, Snapshot};
use radsearch_core::ingest::{
    ingest_batch, run_schedule, CanonicalizeConfig, IngestBatch, MemorySource, RawRecord, RecordSource, RefreshSchedule,
    Scheduler, SourceError, TickKind, TickOutcome,
};
use radsearch_core::query::FilterSpec;
use radsearch_core::ranking::{search_all, SearchConfig};
use radsearch_core::schema::{names, ReportDocument, Schema};
use serde_json::json;

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 6, 1, 12, 0, 0).unwrap()
}

fn record(id: &str, findings: &str, uploaded: DateTime<Utc>) -> RawRecord {
    RawRecord::Json(json!({
        "AccessionNumber": id,
        "PID": format!("P-{id}"),
        "Findings": findings,
        "Modality": "CT",
        "ReportUploadDatetime": uploaded.to_rfc3339(),
    }))
}

fn batch(id: &str, records: Vec<RawRecord>) -> IngestBatch {
    IngestBatch { batch_id: id.into(), source: "test".into(), received_at: t0(), records }
}

fn new_index() -> Index {
    Index::in_memory(Schema::radiology(), AnalyzerConfig::default())
}

fn result_ids(snap: &Snapshot, q: &str) -> Vec<(String, String)> {
    search_all::<f64>(q, FilterSpec::default(), snap, t0(), &SearchConfig::default())
        .unwrap()
        .hits
        .into_iter()
        .map(|h| (h.doc_id, format!("{:.12}", h.total_score)))
        .collect()
}

const QUERIES: &[&str] = &["filter", "stent OR filter", "NOT stent", "\"ivc filter\"", "hep*"];

fn corpus(n: usize) -> Vec<RawRecord> {
    let texts = ["ivc filter placed", "hepatic pump patent", "stent fracture", "no filter seen", "palmaz stent"];
    (0..n).map(|i| record(&format!("A{i:04}"), texts[i % texts.len()], t0() - TimeDelta::hours(i as i64))).collect()
}

#[test]
fn happy_path_single_commit() {
    let idx = new_index();
    let before = idx.snapshot().id();
    let stats = ingest_batch(&idx, &batch("b", corpus(100)), &CanonicalizeConfig::default()).unwrap();
    assert_eq!((stats.read, stats.upserted, stats.rejected), (100, 100, 0));
    assert!(stats.is_conserved());
    assert_eq!(idx.snapshot().id(), before + 1);
    assert_eq!(stats.snapshot_id, Some(before + 1));
    assert_eq!(idx.snapshot().doc_count(), 100);
    assert_eq!(stats.watermark, Some(t0()));
}

#[test]
fn malformed_records_counted() {
    let mut recs = corpus(97);
    recs.push(RawRecord::Malformed { line: 4, error: "eof".into() });
    recs.push(RawRecord::Json(json!({"Findings": "no id"})));
    recs.push(RawRecord::Json(json!({"id": "Z", "ReportUploadDatetime": "not a date"})));
    let stats = ingest_batch(&new_index(), &batch("b", recs), &CanonicalizeConfig::default()).unwrap();
    assert_eq!((stats.read, stats.upserted, stats.rejected), (100, 97, 3));
    assert_eq!(stats.reject_reasons["malformed_json"], 1);
    assert_eq!(stats.reject_reasons["missing_id"], 1);
    assert_eq!(stats.reject_reasons["bad_datetime"], 1);
    assert!(stats.is_conserved());
}

#[test]
fn empty_batch_commits_nothing() {
    let idx = new_index();
    let stats = ingest_batch(&idx, &batch("e", vec![]), &CanonicalizeConfig::default()).unwrap();
    assert_eq!(stats.read, 0);
    assert_eq!(stats.snapshot_id, None);
    assert_eq!(idx.snapshot().id(), 0);
}

#[test]
fn duplicate_ids_last_wins() {
    let idx = new_index();
    let recs = vec![record("D", "first version", t0()), record("D", "second version", t0())];
    let stats = ingest_batch(&idx, &batch("d", recs), &CanonicalizeConfig::default()).unwrap();
    assert_eq!((stats.read, stats.upserted, stats.superseded), (2, 1, 1));
    assert!(stats.is_conserved());
    assert_eq!(idx.snapshot().get_document("D").unwrap().text(names::FINDINGS), Some("second version"));
}

#[test]
fn double_ingest_is_idempotent() {
    let idx = new_index();
    let b = batch("b", corpus(60));
    ingest_batch(&idx, &b, &CanonicalizeConfig::default()).unwrap();
    let first = idx.snapshot();
    ingest_batch(&idx, &b, &CanonicalizeConfig::default()).unwrap();
    let second = idx.snapshot();
    assert_eq!(first.doc_count(), second.doc_count());
    for q in QUERIES {
        assert_eq!(result_ids(&first, q), result_ids(&second, q), "{q}");
    }
}

#[test]
fn readers_never_see_part_of_a_batch() {
    let idx = Arc::new(new_index());
    let done = Arc::new(AtomicBool::new(false));
    let reader = {
        let idx = idx.clone();
        let done = done.clone();
        std::thread::spawn(move || {
            let mut seen = std::collections::BTreeSet::new();
            while !done.load(Ordering::Acquire) {
                seen.insert(idx.snapshot().doc_count());
            }
            seen
        })
    };
    for round in 0..20 {
        let recs = (0..50).map(|i| record(&format!("R{round}-{i}"), "filter", t0())).collect();
        ingest_batch(&idx, &batch(&format!("r{round}"), recs), &CanonicalizeConfig::default()).unwrap();
    }
    done.store(true, Ordering::Release);
    let seen = reader.join().unwrap();
    assert!(seen.iter().all(|n| n % 50 == 0), "{seen:?}");
}

#[derive(Debug)]
struct BrokenStorage;

impl Storage for BrokenStorage {
    fn write_segment(&self, _: u64, _: &[ReportDocument]) -> std::io::Result<()> {
        Err(std::io::Error::other("disk full"))
    }
    fn write_manifest(&self, _: &Manifest) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn storage_failure_aborts_batch() {
    let idx = Index::with_storage(Box::new(BrokenStorage), Schema::radiology(), AnalyzerConfig::default(), IndexOptions::default());
    assert!(ingest_batch(&idx, &batch("b", corpus(10)), &CanonicalizeConfig::default()).is_err());
    assert_eq!(idx.snapshot().doc_count(), 0);
    assert_eq!(idx.snapshot().id(), 0);
}

fn scheduler(source: MemorySource, idx: Arc<Index>) -> Scheduler {
    Scheduler::new(idx, Box::new(source), CanonicalizeConfig::default(), RefreshSchedule::default(), t0())
}

#[test]
fn watermark_moves_only_on_success() {
    let src = MemorySource::new();
    src.push(batch("1", vec![record("a", "filter", t0() - TimeDelta::hours(2))]));
    let s = scheduler(src.clone(), Arc::new(new_index()));
    assert!(matches!(s.tick(TickKind::Incremental, t0()), TickOutcome::Ran { .. }));
    assert_eq!(s.watermark(), Some(t0() - TimeDelta::hours(2)));
    src.push(batch("2", vec![record("b", "stent", t0())]));
    src.set_unavailable(true);
    assert!(matches!(s.tick(TickKind::Incremental, t0() + TimeDelta::minutes(20)), TickOutcome::Failed { .. }));
    assert_eq!(s.watermark(), Some(t0() - TimeDelta::hours(2)));
    src.set_unavailable(false);
    assert!(matches!(s.tick(TickKind::Incremental, t0() + TimeDelta::minutes(40)), TickOutcome::Ran { .. }));
    assert_eq!(s.watermark(), Some(t0()));
}

#[test]
fn update_between_ticks_appears_after_next_tick() {
    let src = MemorySource::new();
    src.push(batch("1", vec![record("a", "filter placed", t0() - TimeDelta::hours(1)), record("b", "stent", t0() - TimeDelta::hours(1))]));
    let idx = Arc::new(new_index());
    let s = scheduler(src.clone(), idx.clone());
    s.tick(TickKind::Incremental, t0());
    assert_eq!(idx.snapshot().get_document("a").unwrap().text(names::FINDINGS), Some("filter placed"));
    src.push(batch("2", vec![record("a", "filter removed", t0() + TimeDelta::minutes(5))]));
    let TickOutcome::Ran { stats, .. } = s.tick(TickKind::Incremental, t0() + TimeDelta::minutes(20)) else { panic!() };
    // the window is inclusive, so records stamped exactly at the watermark are re-read
    assert_eq!(stats.read, 3);
    assert_eq!(idx.snapshot().get_document("a").unwrap().text(names::FINDINGS), Some("filter removed"));
    assert_eq!(idx.snapshot().doc_count(), 2);
}

#[test]
fn full_rebuild_matches_incremental_state() {
    let src = MemorySource::new();
    let recs = corpus(80);
    src.push(batch("1", recs[..40].to_vec()));
    src.push(batch("2", recs[40..].to_vec()));
    let idx = Arc::new(new_index());
    let s = scheduler(src.clone(), idx.clone());
    s.tick(TickKind::Incremental, t0());
    let incremental = idx.snapshot();
    s.tick(TickKind::Full, t0() + TimeDelta::days(1));
    let full = idx.snapshot();
    assert!(full.id() > incremental.id());
    for q in QUERIES {
        assert_eq!(result_ids(&incremental, q), result_ids(&full, q), "{q}");
    }
}

#[test]
fn nightly_repairs_last_day() {
    let src = MemorySource::new();
    let idx = Arc::new(new_index());
    let s = scheduler(src.clone(), idx.clone());
    s.tick(TickKind::Incremental, t0());
    // a late arrival stamped before the watermark would be missed by incremental ticks
    src.push(batch("1", vec![record("new", "x", t0() + TimeDelta::hours(1))]));
    s.tick(TickKind::Incremental, t0() + TimeDelta::hours(2));
    src.push(batch("2", vec![record("late", "x", t0() - TimeDelta::hours(3)), record("old", "x", t0() - TimeDelta::days(3))]));
    s.tick(TickKind::Incremental, t0() + TimeDelta::hours(3));
    assert!(idx.snapshot().get_document("late").is_none());
    s.tick(TickKind::Nightly, t0() + TimeDelta::hours(12));
    assert!(idx.snapshot().get_document("late").is_some());
    assert!(idx.snapshot().get_document("old").is_none());
}

#[test]
fn due_follows_schedule() {
    let s = scheduler(MemorySource::new(), Arc::new(new_index()));
    assert_eq!(s.due(t0()), Some(TickKind::Incremental));
    s.tick(TickKind::Incremental, t0());
    assert_eq!(s.due(t0() + TimeDelta::minutes(19)), None);
    assert_eq!(s.due(t0() + TimeDelta::minutes(20)), Some(TickKind::Incremental));
    // t0 is noon; the next midnight is 12 hours later
    assert_eq!(s.due(t0() + TimeDelta::hours(12)), Some(TickKind::Nightly));
    assert_eq!(s.due(t0() + TimeDelta::days(180)), Some(TickKind::Full));
    assert!(RefreshSchedule { incremental_every_secs: 0, ..Default::default() }.validate().is_err());
}

struct SlowSource {
    gate: Arc<Barrier>,
    release: Arc<Barrier>,
}

impl RecordSource for SlowSource {
    fn fetch(&self) -> Result<Vec<IngestBatch>, SourceError> {
        self.gate.wait();
        self.release.wait();
        Ok(vec![])
    }
}

#[test]
fn overlapping_ticks_coalesce() {
    let gate = Arc::new(Barrier::new(2));
    let release = Arc::new(Barrier::new(2));
    let src = SlowSource { gate: gate.clone(), release: release.clone() };
    let s = Arc::new(Scheduler::new(Arc::new(new_index()), Box::new(src), CanonicalizeConfig::default(), RefreshSchedule::default(), t0()));
    let busy = {
        let s = s.clone();
        std::thread::spawn(move || s.tick(TickKind::Incremental, t0()))
    };
    gate.wait();
    assert_eq!(s.tick(TickKind::Nightly, t0()), TickOutcome::Skipped { kind: TickKind::Nightly });
    release.wait();
    assert!(matches!(busy.join().unwrap(), TickOutcome::Ran { .. }));
}

#[test]
fn background_thread_runs_and_stops() {
    let src = MemorySource::new();
    src.push(batch("1", corpus(5)));
    let idx = Arc::new(new_index());
    let s = Arc::new(Scheduler::new(idx.clone(), Box::new(src), CanonicalizeConfig::default(), RefreshSchedule::default(), Utc::now()));
    let handle = run_schedule(s, Duration::from_millis(10));
    for _ in 0..200 {
        if idx.snapshot().doc_count() == 5 {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    handle.stop();
    assert_eq!(idx.snapshot().doc_count(), 5);
}
