//! Wire types shared by the HTTP service and the command line.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use radsearch_core::index::Snapshot;
use radsearch_core::ranking::{Breakdown, ResultPage, SearchError};
use radsearch_core::schema::ReportDocument;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// `{accession}` and `{doc_id}` substituted into the configured viewer URL.
/// Builds a string only; nothing is fetched.
pub fn image_link(template: Option<&str>, doc: &ReportDocument) -> Option<String> {
    let template = template?;
    // ingestion maps the accession number onto doc_id
    let accession = doc.text("AccessionNumber").unwrap_or(&doc.doc_id);
    Some(template.replace("{accession}", accession).replace("{doc_id}", &doc.doc_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitView {
    pub rank: usize,
    pub doc_id: String,
    pub score: f64,
    pub matched_terms: Vec<String>,
    pub document: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<Breakdown<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub page_number: usize,
    pub per_page: usize,
    pub total_hits: usize,
    pub total_pages: usize,
    pub elapsed_ms: f64,
    pub hits: Vec<HitView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SearchResponse {
    pub fn from_page(
        query: &str,
        page: ResultPage<f64>,
        snap: &Snapshot,
        viewer_template: Option<&str>,
        explain: bool,
        elapsed_ms: f64,
    ) -> Self {
        let first_rank = (page.page_number - 1) * page.per_page + 1;
        let hits = page
            .hits
            .into_iter()
            .enumerate()
            .filter_map(|(i, h)| {
                let doc = snap.get_document(&h.doc_id)?;
                Some(HitView {
                    rank: first_rank + i,
                    document: doc.to_flat_json(),
                    image_link: image_link(viewer_template, doc),
                    doc_id: h.doc_id,
                    score: h.total_score,
                    matched_terms: h.matched_terms,
                    breakdown: explain.then_some(h.breakdown),
                })
            })
            .collect();
        SearchResponse {
            query: query.to_string(),
            page_number: page.page_number,
            per_page: page.per_page,
            total_hits: page.total_hits,
            total_pages: page.total_pages,
            elapsed_ms,
            hits,
            warnings: page.warnings,
        }
    }
}

/// Query descriptor of an export, also echoed in the bundle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRequest {
    pub q: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub export_id: String,
    pub query: ExportRequest,
    pub generated_at: DateTime<Utc>,
    pub user_id: String,
    pub protocol_tag: String,
    pub total: usize,
    pub documents: Vec<Value>,
}

/// A date-time bound given as RFC 3339 or as a bare `YYYY-MM-DD`. A bare
/// date used as an upper bound covers the whole day.
pub fn parse_time_bound(s: &str, upper: bool) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    let time = if upper { NaiveTime::from_hms_milli_opt(23, 59, 59, 999)? } else { NaiveTime::MIN };
    Some(date.and_time(time).and_utc())
}

/// Error body `{code, reason, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub reason: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, reason: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.to_string(), reason: reason.into(), detail: Value::Null } }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn code(&self) -> &str {
        &self.body.code
    }
}

impl From<&SearchError> for ApiError {
    fn from(e: &SearchError) -> Self {
        let status = if e.is_user_error() { StatusCode::BAD_REQUEST } else { StatusCode::INTERNAL_SERVER_ERROR };
        let mut err = ApiError::new(status, e.code(), e.to_string());
        if let SearchError::Query(q) = e {
            if let Some(position) = q.position() {
                err = err.with_detail(serde_json::json!({ "position": position }));
            }
        }
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
