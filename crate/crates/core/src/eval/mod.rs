//! Evaluation harness: gold-standard scenarios, refinement sweeps and latency benchmarks.

mod corpus;
mod latency;
mod metrics;

use std::collections::BTreeSet;
use std::io::{self, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::index::Snapshot;
use crate::query::{FilterSpec, QueryError};
use crate::ranking::{search, SearchConfig, SearchError};
use crate::Scalar;

pub use corpus::{generate_corpus, CorpusSpec, Family, ScenarioSpec, SyntheticCorpus};
pub use latency::{
    bench_corpus, bench_workload, latency_benchmark, ols, summarize, write_latency_csv, write_latency_dat, LatencyReport,
    LatencySample, LinearFit,
};
pub use metrics::{operator_count, precision, sensitivity, specificity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStandardScenario {
    pub name: String,
    pub positive_doc_ids: BTreeSet<String>,
    pub universe_doc_ids: BTreeSet<String>,
    pub refinement_sequence: Vec<String>,
}

impl GoldStandardScenario {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !self.positive_doc_ids.is_subset(&self.universe_doc_ids) {
            return Err(EvalError::InvalidScenario(format!("{}: positives outside the universe", self.name)));
        }
        if self.refinement_sequence.is_empty() {
            return Err(EvalError::InvalidScenario(format!("{}: no refinement queries", self.name)));
        }
        let mut last = 0;
        for (index, q) in self.refinement_sequence.iter().enumerate() {
            let n = operator_count(q).map_err(|error| EvalError::Query { index, error })?;
            if n < last {
                return Err(EvalError::InvalidScenario(format!(
                    "{}: refinement {index} has fewer operators than the one before",
                    self.name
                )));
            }
            last = n;
        }
        Ok(())
    }
}

/// One refinement step. Ratios are `None` where their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub query: String,
    pub operator_count: usize,
    pub sensitivity: Option<f64>,
    /// Over the scenario universe.
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    /// Over every indexed document.
    pub corpus_specificity: Option<f64>,
    /// Hits inside the scenario universe.
    pub retrieved_count: usize,
    /// Hits anywhere in the index.
    pub corpus_retrieved_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("refinement {index} does not parse: {error}")]
    Query { index: usize, error: QueryError },
    #[error("query {query:?} failed: {source}")]
    Search { query: String, source: SearchError },
    #[error("engine returned {0} twice while draining pages")]
    DuplicateHit(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("empty workload")]
    EmptyWorkload,
    #[error("regression needs at least three samples with distinct result counts")]
    DegenerateFit,
}

/// One page of results as the harness sees them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageIds {
    pub doc_ids: Vec<String>,
    pub total_hits: usize,
    pub total_pages: usize,
}

/// Anything that answers paginated queries.
pub trait SearchEngine {
    fn page(&self, query: &str, page: usize) -> Result<PageIds, SearchError>;

    /// Ids of live documents, for corpus-wide specificity.
    fn all_doc_ids(&self) -> BTreeSet<String>;
}

/// The in-process engine over one snapshot.
pub struct SnapshotEngine<'a, S: Scalar = f64> {
    pub snapshot: &'a Snapshot,
    pub now: DateTime<Utc>,
    pub config: &'a SearchConfig<S>,
    pub filters: FilterSpec,
}

impl<'a, S: Scalar> SnapshotEngine<'a, S> {
    pub fn new(snapshot: &'a Snapshot, now: DateTime<Utc>, config: &'a SearchConfig<S>) -> Self {
        SnapshotEngine { snapshot, now, config, filters: FilterSpec::default() }
    }
}

impl<S: Scalar> SearchEngine for SnapshotEngine<'_, S> {
    fn page(&self, query: &str, page: usize) -> Result<PageIds, SearchError> {
        let p = search(query, self.filters.clone(), page, self.snapshot, self.now, self.config)?;
        Ok(PageIds {
            doc_ids: p.hits.into_iter().map(|h| h.doc_id).collect(),
            total_hits: p.total_hits,
            total_pages: p.total_pages,
        })
    }

    fn all_doc_ids(&self) -> BTreeSet<String> {
        self.snapshot.live_doc_nums().map(|d| self.snapshot.doc(d).doc_id.clone()).collect()
    }
}

/// Every hit of `query`, fetched page by page.
pub fn drain(engine: &dyn SearchEngine, query: &str) -> Result<BTreeSet<String>, EvalError> {
    let wrap = |source| EvalError::Search { query: query.to_string(), source };
    let first = engine.page(query, 1).map_err(wrap)?;
    let mut out = BTreeSet::new();
    let mut push = |ids: Vec<String>| {
        for id in ids {
            if !out.insert(id.clone()) {
                return Err(EvalError::DuplicateHit(id));
            }
        }
        Ok(())
    };
    push(first.doc_ids)?;
    for page in 2..=first.total_pages {
        push(engine.page(query, page).map_err(wrap)?.doc_ids)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub points: Vec<EvalPoint>,
}

impl ScenarioReport {
    pub fn final_point(&self) -> &EvalPoint {
        self.points.last().expect("scenarios have at least one refinement")
    }

    /// Best value of `metric` among refinements with at most `max_ops` operators.
    pub fn best_within(&self, max_ops: usize, metric: impl Fn(&EvalPoint) -> Option<f64>) -> Option<f64> {
        self.points.iter().filter(|p| p.operator_count <= max_ops).filter_map(metric).reduce(f64::max)
    }
}

/// Runs every refinement of `scenario`, draining all pages of each.
pub fn run_scenario(scenario: &GoldStandardScenario, engine: &dyn SearchEngine) -> Result<ScenarioReport, EvalError> {
    scenario.validate()?;
    let corpus = engine.all_doc_ids();
    let positives = &scenario.positive_doc_ids;
    let mut points = Vec::with_capacity(scenario.refinement_sequence.len());
    for (index, query) in scenario.refinement_sequence.iter().enumerate() {
        let operators = operator_count(query).map_err(|error| EvalError::Query { index, error })?;
        let hits = drain(engine, query)?;
        let in_universe: BTreeSet<String> = hits.intersection(&scenario.universe_doc_ids).cloned().collect();
        points.push(EvalPoint {
            query: query.clone(),
            operator_count: operators,
            sensitivity: sensitivity(&in_universe, positives),
            specificity: specificity(&in_universe, positives, &scenario.universe_doc_ids),
            precision: precision(&in_universe, positives),
            corpus_specificity: specificity(&hits, positives, &corpus),
            retrieved_count: in_universe.len(),
            corpus_retrieved_count: hits.len(),
        });
    }
    Ok(ScenarioReport { name: scenario.name.clone(), points })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV curve; undefined ratios are empty cells.
pub fn write_curve_csv(report: &ScenarioReport, out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "operator_count",
        "sensitivity",
        "specificity",
        "precision",
        "retrieved_count",
        "corpus_specificity",
        "corpus_retrieved_count",
        "query",
    ])?;
    for p in &report.points {
        w.write_record([
            p.operator_count.to_string(),
            opt(p.sensitivity),
            opt(p.specificity),
            opt(p.precision),
            p.retrieved_count.to_string(),
            opt(p.corpus_specificity),
            p.corpus_retrieved_count.to_string(),
            p.query.clone(),
        ])?;
    }
    w.flush()
}

/// Whitespace-separated table for gnuplot; undefined ratios are `NaN`.
pub fn write_curve_dat(report: &ScenarioReport, mut out: impl Write) -> io::Result<()> {
    let nan = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NaN".into());
    writeln!(out, "# {}", report.name)?;
    writeln!(out, "# operator_count sensitivity specificity precision retrieved_count")?;
    for p in &report.points {
        writeln!(
            out,
            "{} {} {} {} {}",
            p.operator_count,
            nan(p.sensitivity),
            nan(p.specificity),
            nan(p.precision),
            p.retrieved_count
        )?;
    }
    Ok(())
}
