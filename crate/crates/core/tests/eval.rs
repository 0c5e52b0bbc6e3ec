mod common;

use std::cell::Cell;
use std::collections::BTreeSet;

use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radsearch_core::analysis::AnalyzerConfig;
use radsearch_core::eval::{
    drain, generate_corpus, latency_benchmark, run_scenario, write_curve_csv, write_curve_dat, CorpusSpec, EvalError,
    GoldStandardScenario, PageIds, ScenarioReport, SearchEngine, SnapshotEngine,
};
use radsearch_core::index::{Index, Snapshot};
use radsearch_core::query::detect_boolean;
use radsearch_core::ranking::{SearchConfig, SearchError};
use radsearch_core::schema::{ReportDocument, Schema};

use common::gen;

fn index(docs: Vec<ReportDocument>) -> Snapshot {
    let idx = Index::in_memory(Schema::radiology(), AnalyzerConfig::default());
    let mut w = idx.writer();
    for d in docs {
        w.upsert(d).unwrap();
    }
    w.commit().unwrap()
}

fn now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 6, 1, 0, 0, 0).unwrap()
}

fn run_default(seed: u64) -> (Vec<GoldStandardScenario>, Vec<ScenarioReport>, Snapshot) {
    let corpus = generate_corpus(&CorpusSpec::default(), seed);
    let snap = index(corpus.docs);
    let cfg = SearchConfig::<f64>::default();
    let engine = SnapshotEngine::new(&snap, now(), &cfg);
    let reports = corpus.scenarios.iter().map(|s| run_scenario(s, &engine).unwrap()).collect();
    (corpus.scenarios, reports, snap)
}

fn ids(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

#[test]
fn default_corpus_shape() {
    let spec = CorpusSpec::default();
    assert_eq!(spec.scenarios.len(), 5);
    assert_eq!(spec.total_positives(), 636);
    let corpus = generate_corpus(&spec, 7);
    assert_eq!(corpus.docs.len(), spec.total_docs());
    let all: usize = corpus.scenarios.iter().map(|s| s.positive_doc_ids.len()).sum();
    assert_eq!(all, 636);
    for s in &corpus.scenarios {
        s.validate().unwrap();
    }
}

#[test]
fn spec_round_trips_through_json() {
    let spec = CorpusSpec::default();
    let json = serde_json::to_string_pretty(&spec).unwrap();
    assert_eq!(serde_json::from_str::<CorpusSpec>(&json).unwrap(), spec);
}

#[test]
fn same_seed_same_bytes() {
    let bytes = |seed| serde_json::to_vec(&generate_corpus(&CorpusSpec::default(), seed).docs).unwrap();
    assert_eq!(bytes(11), bytes(11));
    assert_ne!(bytes(11), bytes(12));
}

#[test]
fn negated_mentions_are_negative() {
    let corpus = generate_corpus(&CorpusSpec::default(), 1);
    let anoxic = &corpus.scenarios[0];
    let negated: Vec<_> = corpus
        .docs
        .iter()
        .filter(|d| d.text("Impression").is_some_and(|t| t.contains("No evidence of anoxic injury")))
        .collect();
    assert!(!negated.is_empty());
    for d in negated {
        assert!(anoxic.universe_doc_ids.contains(&d.doc_id));
        assert!(!anoxic.positive_doc_ids.contains(&d.doc_id));
    }
}

#[test]
fn sweep_reaches_full_sensitivity() {
    let (_, reports, _) = run_default(5);
    for r in &reports {
        assert_eq!(r.final_point().sensitivity, Some(1.0), "{}", r.name);
        assert!(r.best_within(4, |p| p.sensitivity).unwrap() > 0.9, "{}", r.name);
        assert!(r.best_within(15, |p| p.specificity).unwrap() > 0.9, "{}", r.name);
    }
    let mean = reports.iter().map(|r| r.final_point().specificity.unwrap()).sum::<f64>() / reports.len() as f64;
    assert!(mean >= 0.95, "{mean}");
}

/// Indices where the next refinement only appends ` NOT ...` clauses.
fn not_only_steps(queries: &[String]) -> Vec<usize> {
    (0..queries.len().saturating_sub(1))
        .filter(|&i| queries[i + 1].strip_prefix(queries[i].as_str()).is_some_and(|rest| rest.starts_with(" NOT ")))
        .collect()
}

#[test]
fn not_refinements_never_lose_positives() {
    let (scenarios, reports, snap) = run_default(9);
    let cfg = SearchConfig::<f64>::default();
    let engine = SnapshotEngine::new(&snap, now(), &cfg);
    let mut checked = 0;
    for (s, r) in scenarios.iter().zip(&reports) {
        for i in not_only_steps(&s.refinement_sequence) {
            let (a, b) = (&r.points[i], &r.points[i + 1]);
            assert!(b.sensitivity >= a.sensitivity, "{} step {i}", s.name);
            assert!(b.specificity >= a.specificity, "{} step {i}", s.name);
            let before = drain(&engine, &s.refinement_sequence[i]).unwrap();
            let after = drain(&engine, &s.refinement_sequence[i + 1]).unwrap();
            assert!(after.is_subset(&before));
            checked += 1;
        }
    }
    assert!(checked >= 15, "{checked}");
}

#[test]
fn metrics_match_set_arithmetic() {
    let (scenarios, reports, snap) = run_default(2);
    let cfg = SearchConfig::<f64>::default();
    let engine = SnapshotEngine::new(&snap, now(), &cfg);
    for (s, r) in scenarios.iter().zip(&reports) {
        for (q, p) in s.refinement_sequence.iter().zip(&r.points) {
            let hits = drain(&engine, q).unwrap();
            let mut tp = 0;
            let mut fp = 0;
            for d in &s.universe_doc_ids {
                match (hits.contains(d), s.positive_doc_ids.contains(d)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    _ => {}
                }
            }
            let negatives = s.universe_doc_ids.len() - s.positive_doc_ids.len();
            assert_eq!(p.sensitivity, Some(tp as f64 / s.positive_doc_ids.len() as f64));
            assert_eq!(p.specificity, Some((negatives - fp) as f64 / negatives as f64));
            assert_eq!(p.retrieved_count, tp + fp);
            assert_eq!(p.corpus_retrieved_count, hits.len());
            assert_eq!(p.precision, (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64));
        }
    }
}

#[test]
fn sweeps_are_deterministic() {
    assert_eq!(run_default(4).1, run_default(4).1);
}

#[test]
fn output_files() {
    let (_, reports, _) = run_default(5);
    let mut csv = Vec::new();
    write_curve_csv(&reports[4], &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("operator_count,sensitivity,specificity,precision,retrieved_count"));
    // corpus-wide: 2301 docs, 88 positives, 20 false positives -> 2193 / 2213
    assert_eq!(lines.next().unwrap(), "0,1.000000,0.687500,0.814815,108,0.990962,108,palmaz");
    let mut dat = Vec::new();
    write_curve_dat(&reports[4], &mut dat).unwrap();
    let dat = String::from_utf8(dat).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

/// Scripted engine: fixed pages per query.
struct Fake {
    pages: Vec<Vec<&'static str>>,
    calls: Cell<usize>,
}

impl SearchEngine for Fake {
    fn page(&self, _: &str, page: usize) -> Result<PageIds, SearchError> {
        self.calls.set(self.calls.get() + 1);
        Ok(PageIds {
            doc_ids: self.pages[page - 1].iter().map(|s| s.to_string()).collect(),
            total_hits: self.pages.iter().map(Vec::len).sum(),
            total_pages: self.pages.len(),
        })
    }

    fn all_doc_ids(&self) -> BTreeSet<String> {
        (1..=10).map(|i| format!("d{i}")).collect()
    }
}

fn scenario(queries: &[&str]) -> GoldStandardScenario {
    GoldStandardScenario {
        name: "toy".into(),
        positive_doc_ids: ids(&["d1", "d2"]),
        universe_doc_ids: (1..=10).map(|i| format!("d{i}")).collect(),
        refinement_sequence: queries.iter().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn drains_every_page() {
    let fake = Fake { pages: vec![vec!["d1", "d3"], vec!["d2"]], calls: Cell::new(0) };
    let r = run_scenario(&scenario(&["x"]), &fake).unwrap();
    assert_eq!(r.points.len(), 1);
    assert_eq!(fake.calls.get(), 2);
    let p = &r.points[0];
    assert_eq!((p.sensitivity, p.specificity, p.retrieved_count), (Some(1.0), Some(7.0 / 8.0), 3));
}

#[test]
fn duplicate_across_pages_is_an_error() {
    let fake = Fake { pages: vec![vec!["d1"], vec!["d1"]], calls: Cell::new(0) };
    assert!(matches!(run_scenario(&scenario(&["x"]), &fake), Err(EvalError::DuplicateHit(_))));
}

#[test]
fn bad_scenarios_are_rejected() {
    let fake = Fake { pages: vec![vec![]], calls: Cell::new(0) };
    let err = run_scenario(&scenario(&["a", "b AND"]), &fake).unwrap_err();
    assert!(matches!(err, EvalError::Query { index: 1, .. }), "{err}");
    assert!(matches!(run_scenario(&scenario(&["a OR b", "a"]), &fake), Err(EvalError::InvalidScenario(_))));
    assert!(matches!(run_scenario(&scenario(&[]), &fake), Err(EvalError::InvalidScenario(_))));
    let mut outside = scenario(&["a"]);
    outside.positive_doc_ids.insert("zz".into());
    assert!(matches!(run_scenario(&outside, &fake), Err(EvalError::InvalidScenario(_))));
    assert!(fake.calls.get() == 0);
}

#[test]
fn benchmark_reports_every_query() {
    let snap = index(generate_corpus(&CorpusSpec::default(), 3).docs);
    let cfg = SearchConfig::<f64>::default();
    let engine = SnapshotEngine::new(&snap, now(), &cfg);
    let workload: Vec<String> = ["palmaz", "filter", "stent OR pump", "lungs", "anoxic OR hypoxic", "knee"].map(String::from).into();
    let report = latency_benchmark(&engine, &workload, 3).unwrap();
    assert_eq!(report.samples.len(), 6);
    assert!(report.samples.iter().all(|s| s.elapsed_ms > 0.0));
    assert_eq!(report.samples[0].result_count, 108);
    assert!(matches!(latency_benchmark(&engine, &[], 0), Err(EvalError::EmptyWorkload)));
}

fn refinement_pairs() -> impl Strategy<Value = (u64, Vec<(String, String)>)> {
    (any::<u64>(), 1..4u32).prop_map(|(seed, depth)| {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = (0..20)
            .map(|_| (gen::random_query(&mut rng, depth), gen::VOCAB[rng.gen_range(0..gen::VOCAB.len())].to_string()))
            .collect();
        (seed, pairs)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn not_shrinks_and_or_grows((seed, pairs) in refinement_pairs()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snap = index(gen::random_corpus(&mut rng, 120));
        let cfg = SearchConfig::<f64>::default();
        let engine = SnapshotEngine::new(&snap, now(), &cfg);
        // regular-mode queries use min-should-match, so only Boolean queries are refinements
        for (q, t) in pairs.into_iter().filter(|(q, _)| detect_boolean(q)) {
            let base = drain(&engine, &format!("({q})")).unwrap();
            let narrowed = drain(&engine, &format!("({q}) NOT {t}")).unwrap();
            let widened = drain(&engine, &format!("({q}) OR {t}")).unwrap();
            let (sub, sup) = (narrowed.is_subset(&base), base.is_subset(&widened));
            prop_assert!(sub, "NOT grew {}", q);
            prop_assert!(sup, "OR shrank {}", q);
        }
    }
}
