use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::{sort_hits, ResultPage, ScoredHit, PER_PAGE};
use crate::analysis::fold;
use crate::index::Snapshot;
use crate::query::FilterSpec;
use crate::schema::{names, ReportDocument};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum PaginateError {
    #[error("page numbers start at 1")]
    PageZero,
}

fn passes(doc: &ReportDocument, filters: &FilterSpec) -> bool {
    if let Some(modalities) = &filters.modality {
        let Some(m) = doc.get(names::MODALITY).map(|v| fold(v.render().trim())) else { return false };
        if !modalities.iter().any(|want| fold(want.trim()) == m) {
            return false;
        }
    }
    if filters.from.is_some() || filters.to.is_some() {
        let Some(t) = doc.study_time() else { return false };
        if filters.from.is_some_and(|from| t < from) || filters.to.is_some_and(|to| t > to) {
            return false;
        }
    }
    true
}

/// Modality and time-range filters on candidate document numbers.
pub(crate) fn prefilter(candidates: &mut FixedBitSet, filters: &FilterSpec, snap: &Snapshot) {
    if filters.modality.is_none() && filters.from.is_none() && filters.to.is_none() {
        return;
    }
    let rejected: Vec<usize> = candidates.ones().filter(|&d| !passes(snap.doc(d as u32), filters)).collect();
    for d in rejected {
        candidates.set(d, false);
    }
}

/// Keeps hits whose modality is in the set and whose study time lies in
/// `[from, to]`, then collapses when asked. Output is sorted.
pub fn apply_filters<S: Scalar>(hits: Vec<ScoredHit<S>>, filters: &FilterSpec, snap: &Snapshot) -> Vec<ScoredHit<S>> {
    let mut kept: Vec<ScoredHit<S>> = hits
        .into_iter()
        .filter(|h| snap.get_document(&h.doc_id).is_some_and(|d| passes(d, filters)))
        .collect();
    if let Some(field) = &filters.collapse_field {
        kept = collapse(kept, field, snap);
    }
    sort_hits(&mut kept);
    kept
}

/// One hit per value of `field`: the highest score, then the most recent
/// study. Hits without a value are kept as they are.
pub fn collapse<S: Scalar>(hits: Vec<ScoredHit<S>>, field: &str, snap: &Snapshot) -> Vec<ScoredHit<S>> {
    let mut best: HashMap<String, ScoredHit<S>> = HashMap::new();
    let mut loose = Vec::new();
    for hit in hits {
        let key = snap.get_document(&hit.doc_id).and_then(|d| d.get(field)).map(|v| fold(v.render().trim()));
        let Some(key) = key else {
            loose.push(hit);
            continue;
        };
        match best.get(&key) {
            Some(current) if !beats(&hit, current) => {}
            _ => {
                best.insert(key, hit);
            }
        }
    }
    loose.extend(best.into_values());
    loose
}

fn beats<S: Scalar>(a: &ScoredHit<S>, b: &ScoredHit<S>) -> bool {
    a.total_score
        .total_cmp_scores(&b.total_score)
        .then_with(|| a.study_time.cmp(&b.study_time))
        .then_with(|| b.doc_id.cmp(&a.doc_id))
        .is_gt()
}

/// Page `page` (1-based) of sorted hits. Pages past the end are empty, not errors.
pub fn paginate<S: Scalar>(hits: &[ScoredHit<S>], page: usize) -> Result<ResultPage<S>, PaginateError> {
    if page == 0 {
        return Err(PaginateError::PageZero);
    }
    let total_hits = hits.len();
    let start = (page - 1).saturating_mul(PER_PAGE).min(total_hits);
    let end = (start + PER_PAGE).min(total_hits);
    Ok(ResultPage {
        hits: hits[start..end].to_vec(),
        page_number: page,
        per_page: PER_PAGE,
        total_hits,
        total_pages: total_hits.div_ceil(PER_PAGE),
        warnings: Vec::new(),
    })
}
