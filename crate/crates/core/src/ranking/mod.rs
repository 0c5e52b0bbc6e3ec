//! Scoring, filtering and pagination of query results.

pub mod bm25;
mod exec;
mod filters;
pub mod passage;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::index::{DocNum, IndexError, Snapshot, WildcardPolicy};
use crate::query::{plan_query, sanitize, FilterSpec, PlanMode, QueryError, QueryPlan, RejectReason, SanitizeLimits};
use crate::schema::names;
use crate::Scalar;
use exec::Executor;

pub use filters::{apply_filters, collapse, paginate, PaginateError};

pub const PER_PAGE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default, deny_unknown_fields)]
pub struct RankingConfig<S = f64> {
    /// Field name → weight. Fields not listed weigh 1.
    pub field_weights: BTreeMap<String, S>,
    pub w_bigram: S,
    pub w_trigram: S,
    pub w_passage: S,
    pub k1: S,
    pub b: S,
    pub passage_window: u32,
    pub recency_beta: S,
    pub recency_tau_days: S,
}

impl<S: Scalar> Default for RankingConfig<S> {
    fn default() -> Self {
        let field_weights = [
            (names::STUDY_DESCRIPTION, 3.0),
            (names::IMPRESSION, 2.0),
            (names::FINDINGS, 1.0),
            (names::PATIENT_NAME, 2.0),
            (names::AUTHOR, 1.5),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), S::lit(v)))
        .collect();
        RankingConfig {
            field_weights,
            w_bigram: S::lit(1.5),
            w_trigram: S::lit(1.5),
            w_passage: S::lit(1.0),
            k1: S::lit(1.2),
            b: S::lit(0.75),
            passage_window: passage::DEFAULT_WINDOW,
            recency_beta: S::lit(0.25),
            recency_tau_days: S::lit(730.0),
        }
    }
}

impl<S: Scalar> RankingConfig<S> {
    pub fn field_weight(&self, field: &str) -> S {
        self.field_weights
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(field))
            .map_or(S::one(), |(_, w)| *w)
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some((k, _)) = self.field_weights.iter().find(|(_, w)| !(**w > S::zero())) {
            return Err(format!("field weight for {k} must be positive"));
        }
        for (name, w) in [("w_bigram", self.w_bigram), ("w_trigram", self.w_trigram), ("w_passage", self.w_passage)] {
            if !(w >= S::zero()) {
                return Err(format!("{name} must be non-negative"));
            }
        }
        if !(self.k1 >= S::zero()) || !(self.b >= S::zero() && self.b <= S::one()) {
            return Err("k1 must be non-negative and b within [0, 1]".into());
        }
        if self.passage_window == 0 {
            return Err("passage_window must be at least 1".into());
        }
        if !(self.recency_beta >= S::zero()) || !(self.recency_tau_days > S::zero()) {
            return Err("recency_beta must be non-negative and recency_tau_days positive".into());
        }
        Ok(())
    }
}

/// Everything a search needs besides the query and the snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default)]
pub struct SearchConfig<S: Scalar = f64> {
    pub ranking: RankingConfig<S>,
    pub limits: SanitizeLimits,
    #[serde(skip)]
    pub wildcard: WildcardPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Breakdown<S = f64> {
    pub base_relevance: S,
    pub bigram: S,
    pub trigram: S,
    pub passage: S,
    pub recency_multiplier: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ScoredHit<S = f64> {
    pub doc_id: String,
    pub total_score: S,
    pub breakdown: Breakdown<S>,
    pub matched_terms: Vec<String>,
    pub study_time: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ResultPage<S = f64> {
    pub hits: Vec<ScoredHit<S>>,
    pub page_number: usize,
    pub per_page: usize,
    pub total_hits: usize,
    pub total_pages: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Full ranked result of one query, before pagination.
#[derive(Debug, Clone)]
pub struct SearchOutcome<S = f64> {
    pub plan: QueryPlan,
    pub hits: Vec<ScoredHit<S>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("query rejected: {0}")]
    Rejected(#[from] RejectReason),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Page(#[from] PaginateError),
}

impl SearchError {
    pub fn code(&self) -> &'static str {
        match self {
            SearchError::Rejected(r) => r.code(),
            SearchError::Query(q) => q.code(),
            SearchError::Index(IndexError::LeadingWildcard(_)) => "leading_wildcard",
            SearchError::Index(IndexError::DegenerateWildcard(_)) => "degenerate_wildcard",
            SearchError::Index(_) => "index_error",
            SearchError::Page(_) => "invalid_page",
        }
    }

    /// Sanitizer rejections and malformed queries, as opposed to engine faults.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, SearchError::Index(IndexError::Storage(_)))
    }
}

/// `1 + beta * exp(-age_days / tau)`; a study in the future counts as age 0,
/// a study without a date gets no boost.
pub fn recency_multiplier<S: Scalar>(study_time: Option<DateTime<Utc>>, now: DateTime<Utc>, beta: S, tau_days: S) -> S {
    let Some(t) = study_time else { return S::one() };
    let age_secs = (now - t).num_milliseconds().max(0) as f64 / 1000.0;
    let age_days = S::lit(age_secs / 86_400.0);
    S::one() + beta * (-age_days / tau_days).exp()
}

pub fn recency_boost<S: Scalar>(score: S, study_time: Option<DateTime<Utc>>, now: DateTime<Utc>, cfg: &RankingConfig<S>) -> S {
    score * recency_multiplier(study_time, now, cfg.recency_beta, cfg.recency_tau_days)
}

impl<S: Scalar> Default for SearchConfig<S> {
    fn default() -> Self {
        SearchConfig { ranking: RankingConfig::default(), limits: SanitizeLimits::default(), wildcard: WildcardPolicy::default() }
    }
}

/// Per-document component scores before combination.
#[derive(Debug, Clone, Default)]
pub struct Components<S = f64> {
    pub base: HashMap<DocNum, S>,
    pub bigram: HashMap<DocNum, S>,
    pub trigram: HashMap<DocNum, S>,
    pub passage: HashMap<DocNum, S>,
}

/// Weighted sum of the components, boosted by recency. Only documents with a
/// base entry are admitted.
pub fn combine<S: Scalar>(
    components: &Components<S>,
    matched: &HashMap<DocNum, Vec<String>>,
    snap: &Snapshot,
    now: DateTime<Utc>,
    cfg: &RankingConfig<S>,
) -> Vec<ScoredHit<S>> {
    let get = |m: &HashMap<DocNum, S>, d: &DocNum| m.get(d).copied().unwrap_or(S::zero());
    components
        .base
        .iter()
        .map(|(doc, &base)| {
            let stored = snap.doc(*doc);
            let study_time = stored.study_time();
            let breakdown = Breakdown {
                base_relevance: base,
                bigram: get(&components.bigram, doc),
                trigram: get(&components.trigram, doc),
                passage: get(&components.passage, doc),
                recency_multiplier: recency_multiplier(study_time, now, cfg.recency_beta, cfg.recency_tau_days),
            };
            let sum = breakdown.base_relevance
                + cfg.w_bigram * breakdown.bigram
                + cfg.w_trigram * breakdown.trigram
                + cfg.w_passage * breakdown.passage;
            ScoredHit {
                doc_id: stored.doc_id.clone(),
                total_score: sum * breakdown.recency_multiplier,
                breakdown,
                matched_terms: matched.get(doc).cloned().unwrap_or_default(),
                study_time,
            }
        })
        .collect()
}

/// Score descending, doc id ascending.
pub fn sort_hits<S: Scalar>(hits: &mut [ScoredHit<S>]) {
    hits.sort_by(|a, b| b.total_score.total_cmp_scores(&a.total_score).then_with(|| a.doc_id.cmp(&b.doc_id)));
}

fn bits_to_docs(bits: &FixedBitSet) -> Vec<DocNum> {
    bits.ones().map(|d| d as DocNum).collect()
}

/// Runs a planned query and returns every hit, ranked, with filters and collapse applied.
pub fn execute<S: Scalar>(
    plan: QueryPlan,
    snap: &Snapshot,
    now: DateTime<Utc>,
    cfg: &SearchConfig<S>,
) -> Result<SearchOutcome<S>, SearchError> {
    let ex = Executor::new(snap, &cfg.ranking, &cfg.wildcard);
    run(&ex, plan, now, cfg)
}

fn run<S: Scalar>(
    ex: &Executor<'_, S>,
    plan: QueryPlan,
    now: DateTime<Utc>,
    cfg: &SearchConfig<S>,
) -> Result<SearchOutcome<S>, SearchError> {
    let snap = ex.snap;
    let (candidates, base, matched) = match plan.mode {
        PlanMode::Boolean => boolean_candidates(ex, &plan)?,
        PlanMode::Regular => regular_candidates(ex, &plan)?,
    };
    let mut candidates = candidates;
    filters::prefilter(&mut candidates, &plan.filters, snap);
    let mut components = Components {
        base: bits_to_docs(&candidates).into_iter().map(|d| (d, base[d as usize])).collect(),
        ..Default::default()
    };
    components.bigram = ex.shingle_component(&plan.keywords, 2, &candidates);
    components.trigram = ex.shingle_component(&plan.keywords, 3, &candidates);
    if plan.mode == PlanMode::Regular {
        components.passage = ex.passage_component(&plan.keywords, &candidates)?;
    }
    let mut hits = combine(&components, &matched, snap, now, &cfg.ranking);
    if let Some(field) = &plan.filters.collapse_field {
        hits = collapse(hits, field, snap);
    }
    sort_hits(&mut hits);
    let warnings = ex.warnings.borrow().clone();
    Ok(SearchOutcome { plan, hits, warnings })
}

type Candidates<S> = (FixedBitSet, Vec<S>, HashMap<DocNum, Vec<String>>);

fn boolean_candidates<S: Scalar>(ex: &Executor<'_, S>, plan: &QueryPlan) -> Result<Candidates<S>, SearchError> {
    let docs = ex.eval(&plan.ast)?;
    let mut base = vec![S::zero(); ex.snap.max_doc() as usize];
    let mut matched: HashMap<DocNum, Vec<String>> = HashMap::new();
    for leaf in plan.ast.positive_leaves() {
        let m = ex.leaf(leaf)?;
        let label = leaf.to_string();
        for d in docs.intersection(&m.docs) {
            base[d] = base[d] + m.scores[d];
            matched.entry(d as DocNum).or_default().push(label.clone());
        }
    }
    Ok((docs, base, matched))
}

fn regular_candidates<S: Scalar>(ex: &Executor<'_, S>, plan: &QueryPlan) -> Result<Candidates<S>, SearchError> {
    let mut docs = ex.snap.live_docs();
    for k in &plan.mandatory {
        docs.intersect_with(&ex.keyword(k.field.as_deref(), &k.text)?.docs);
    }
    let phrases: Vec<_> = plan.phrases.iter().map(|p| ex.phrase(p.field.as_deref(), &p.terms)).collect();
    for p in &phrases {
        docs.intersect_with(&p.docs);
    }
    let mut base = vec![S::zero(); ex.snap.max_doc() as usize];
    let mut matched: HashMap<DocNum, Vec<String>> = HashMap::new();
    for k in &plan.keywords {
        let m = ex.keyword(k.field.as_deref(), &k.text)?;
        for d in docs.intersection(&m.docs) {
            base[d] = base[d] + m.scores[d];
            matched.entry(d as DocNum).or_default().push(k.text.clone());
        }
    }
    for (p, m) in plan.phrases.iter().zip(&phrases) {
        let label = format!("\"{}\"", p.terms.join(" "));
        for d in docs.intersection(&m.docs) {
            base[d] = base[d] + m.scores[d];
            matched.entry(d as DocNum).or_default().push(label.clone());
        }
    }
    Ok((docs, base, matched))
}

/// Plans a sanitized query against the snapshot's statistics.
pub fn plan_for<S: Scalar>(raw: &str, filters: FilterSpec, snap: &Snapshot, cfg: &SearchConfig<S>) -> Result<QueryPlan, SearchError> {
    plan_with(&Executor::new(snap, &cfg.ranking, &cfg.wildcard), raw, filters, cfg)
}

fn plan_with<S: Scalar>(ex: &Executor<'_, S>, raw: &str, filters: FilterSpec, cfg: &SearchConfig<S>) -> Result<QueryPlan, SearchError> {
    let snap = ex.snap;
    let cleaned = sanitize(raw, &cfg.limits)?;
    let df = |k: &crate::query::Keyword| ex.keyword(k.field.as_deref(), &k.text).map_or(0, |m| m.docs.count_ones(..) as u64);
    Ok(plan_query(&cleaned, filters, snap.schema(), snap.analyzer(), cfg.limits.max_chars, &df)?)
}

/// sanitize → plan → execute → paginate.
pub fn search<S: Scalar>(
    raw: &str,
    filters: FilterSpec,
    page: usize,
    snap: &Snapshot,
    now: DateTime<Utc>,
    cfg: &SearchConfig<S>,
) -> Result<ResultPage<S>, SearchError> {
    if page == 0 {
        return Err(PaginateError::PageZero.into());
    }
    let outcome = search_all(raw, filters, snap, now, cfg)?;
    let mut result = paginate(&outcome.hits, page)?;
    result.warnings = outcome.warnings;
    Ok(result)
}

/// Every ranked hit of a query, unpaginated.
pub fn search_all<S: Scalar>(
    raw: &str,
    filters: FilterSpec,
    snap: &Snapshot,
    now: DateTime<Utc>,
    cfg: &SearchConfig<S>,
) -> Result<SearchOutcome<S>, SearchError> {
    let ex = Executor::new(snap, &cfg.ranking, &cfg.wildcard);
    let plan = plan_with(&ex, raw, filters, cfg)?;
    run(&ex, plan, now, cfg)
}
