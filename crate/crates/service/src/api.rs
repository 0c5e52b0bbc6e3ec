//! Router, handlers and the network allowlist.

use std::collections::BTreeSet;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{ConnectInfo, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, TimeDelta, Utc};
use radsearch_core::index::Index;
use radsearch_core::query::FilterSpec;
use radsearch_core::ranking::{search, search_all, SearchConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::audit::{AuditAction, AuditFilter, AuditLog, AuditRecord};
use crate::auth::{AuthError, Clock, Session, SessionStore, Tier, UserStore};
use crate::config::ServiceConfig;
use crate::deid::{Deidentifier, MasterKey};
use crate::response::{parse_time_bound, ApiError, ExportBundle, ExportRequest, SearchResponse};

pub const ADMIN_HEADER: &str = "x-admin-token";

pub struct AppState {
    pub index: Arc<Index>,
    pub search: SearchConfig<f64>,
    pub config: ServiceConfig,
    pub users: Arc<UserStore>,
    pub sessions: SessionStore,
    pub audit: AuditLog,
    pub clock: Arc<dyn Clock>,
    pub deid_key: Option<MasterKey>,
}

impl AppState {
    pub fn new(
        index: Arc<Index>,
        search: SearchConfig<f64>,
        config: ServiceConfig,
        users: Arc<UserStore>,
        audit: AuditLog,
        clock: Arc<dyn Clock>,
        deid_key: Option<MasterKey>,
    ) -> Self {
        AppState { index, search, config, users, sessions: SessionStore::default(), audit, clock, deid_key }
    }

    fn record(&self, record: AuditRecord) -> Result<(), ApiError> {
        self.audit.append(record, self.clock.now()).map(drop).map_err(|e| {
            tracing::error!(error = %e, "audit append failed");
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "audit_unavailable", "audit trail could not be written")
        })
    }

    fn session(&self, headers: &HeaderMap) -> Result<(String, Session), AuthError> {
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or(AuthError::MissingToken)?;
        let session = self.sessions.validate(token, self.clock.now())?;
        Ok((token.to_string(), session))
    }

    /// Export needs both a key and at least one PHI field.
    pub fn export_enabled(&self) -> bool {
        self.deid_key.is_some() && !self.config.phi_fields.is_empty()
    }
}

type Shared = Arc<AppState>;

/// Peer address when the server was started with connect info, as in `serve`.
pub struct ClientAddr(pub Option<SocketAddr>);

impl<S: Send + Sync> FromRequestParts<S> for ClientAddr {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        Ok(ClientAddr(parts.extensions.get::<ConnectInfo<SocketAddr>>().map(|ConnectInfo(a)| *a)))
    }
}

fn client(addr: &ClientAddr) -> Option<String> {
    addr.0.map(|a| a.ip().to_string())
}

fn auth_error(e: &AuthError) -> ApiError {
    let status = match e {
        AuthError::TierDenied { .. } | AuthError::MissingProtocol => StatusCode::FORBIDDEN,
        _ => StatusCode::UNAUTHORIZED,
    };
    ApiError::new(status, e.code(), e.to_string())
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/auth/login", post(login))
        .route("/search", get(search_handler))
        .route("/doc/{id}", get(doc_handler))
        .route("/export", post(export_handler))
        .route("/audit", get(audit_handler))
        .layer(middleware::from_fn_with_state(state.clone(), allowlist))
        .with_state(state)
}

/// Stand-in for the network tier: only listed addresses reach any handler.
/// Requests to search or export from elsewhere are still audited.
async fn allowlist(State(state): State<Shared>, addr: ClientAddr, req: Request, next: Next) -> Response {
    let nets = &state.config.allowlist;
    if nets.is_empty() {
        return next.run(req).await;
    }
    let allowed = addr.0.is_some_and(|a| nets.iter().any(|n| n.contains(&a.ip())));
    if allowed {
        return next.run(req).await;
    }
    let path = req.uri().path().to_string();
    if path == "/search" || path == "/export" {
        let q = req.uri().query().unwrap_or_default().to_string();
        let rec = AuditRecord::new(AuditAction::RejectedQuery, None).query(&q).client(client(&addr)).detail(format!("{path}: network_denied"));
        if let Err(e) = state.record(rec) {
            return e.into_response();
        }
    }
    ApiError::new(StatusCode::FORBIDDEN, "network_denied", "client address is not on the allowlist").into_response()
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    let snap = state.index.snapshot();
    Json(json!({ "status": "ok", "doc_count": snap.doc_count(), "snapshot_id": snap.id() }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub user_id: String,
    pub password: String,
    #[serde(default = "default_tier")]
    pub tier: Tier,
}

fn default_tier() -> Tier {
    Tier::Searcher
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user_id: String,
    pub tier: Tier,
    pub expires_at: DateTime<Utc>,
}

async fn login(
    State(state): State<Shared>,
    addr: ClientAddr,
    body: Result<Json<LoginRequest>, JsonRejection>,
) -> Result<Json<LoginResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let users = state.users.clone();
    let (user, password, tier) = (req.user_id.clone(), req.password.clone(), req.tier);
    // argon2 verification is deliberately slow
    let outcome = tokio::task::spawn_blocking(move || users.authenticate(&user, &password, tier))
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "login task failed"))?;
    let rec = AuditRecord::new(AuditAction::Login, Some(&req.user_id)).client(client(&addr));
    match outcome {
        Ok(account) => {
            let ttl = TimeDelta::hours(state.config.session_ttl_hours as i64);
            let session = state.sessions.issue(&account, req.tier, state.clock.now(), ttl);
            state.record(rec.detail(format!("granted {}", session.tier)))?;
            Ok(Json(LoginResponse {
                token: session.token,
                user_id: session.user_id,
                tier: session.tier,
                expires_at: session.expires_at,
            }))
        }
        Err(e) => {
            state.record(rec.detail(e.code()))?;
            Err(auth_error(&e))
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SearchParams {
    pub q: String,
    pub page: Option<usize>,
    /// Comma-separated modality codes.
    pub modality: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub collapse: Option<String>,
    #[serde(default)]
    pub explain: bool,
}

/// Builds the filter set shared by search and export.
pub fn filters_from(
    modality: Option<&str>,
    from: Option<&str>,
    to: Option<&str>,
    collapse: Option<&str>,
) -> Result<FilterSpec, ApiError> {
    let bound = |s: Option<&str>, upper: bool, name: &str| -> Result<Option<DateTime<Utc>>, ApiError> {
        match s.map(str::trim).filter(|s| !s.is_empty()) {
            None => Ok(None),
            Some(v) => parse_time_bound(v, upper).map(Some).ok_or_else(|| {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_filter", format!("{name} must be RFC 3339 or YYYY-MM-DD, got {v:?}"))
            }),
        }
    };
    let modality: Option<BTreeSet<String>> = modality
        .map(|m| m.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect::<BTreeSet<_>>())
        .filter(|set| !set.is_empty());
    let spec = FilterSpec {
        modality,
        from: bound(from, false, "from")?,
        to: bound(to, true, "to")?,
        collapse_field: collapse.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string),
    };
    spec.validate().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string()))?;
    Ok(spec)
}

async fn search_handler(
    State(state): State<Shared>,
    addr: ClientAddr,
    headers: HeaderMap,
    params: Result<Query<SearchParams>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let client = client(&addr);
    let raw_q = params.as_ref().map(|Query(p)| p.q.clone()).unwrap_or_default();
    let reject = |user: Option<&str>, err: ApiError| -> ApiError {
        let rec = AuditRecord::new(AuditAction::RejectedQuery, user).query(&raw_q).client(client.clone()).detail(err.code());
        match state.record(rec) {
            Ok(()) => err,
            Err(audit_err) => audit_err,
        }
    };

    let (token, session) = state.session(&headers).map_err(|e| reject(None, auth_error(&e)))?;
    let user = Some(session.user_id.as_str());
    if !session.allows(Tier::Searcher) {
        return Err(reject(user, auth_error(&AuthError::TierDenied { requested: Tier::Searcher })));
    }
    let Query(p) = params.map_err(|e| reject(user, ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())))?;
    let page = p.page.unwrap_or(1);
    let filters = filters_from(p.modality.as_deref(), p.from.as_deref(), p.to.as_deref(), p.collapse.as_deref())
        .map_err(|e| reject(user, e))?;

    let snap = state.index.snapshot();
    let (cfg, now, q) = (state.search.clone(), state.clock.now(), p.q.clone());
    let snap2 = snap.clone();
    let started = Instant::now();
    let result = tokio::task::spawn_blocking(move || search(&q, filters, page, &snap2, now, &cfg))
        .await
        .map_err(|_| reject(user, ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "search task failed")))?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
    let result_page = result.map_err(|e| reject(user, ApiError::from(&e)))?;

    let response = SearchResponse::from_page(&p.q, result_page, &snap, state.config.viewer_url_template.as_deref(), p.explain, elapsed_ms);
    state.sessions.set_page(&token, response.hits.iter().map(|h| h.doc_id.clone()).collect());
    let action = if page == 1 { AuditAction::Search } else { AuditAction::PageNav };
    state.record(AuditRecord::new(action, user).query(&p.q).results(response.total_hits).page(page).client(client.clone()))?;
    Ok(Json(response))
}

async fn doc_handler(
    State(state): State<Shared>,
    addr: ClientAddr,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let (token, session) = state.session(&headers).map_err(|e| auth_error(&e))?;
    // only the ten reports of the session's current page are reachable
    if !state.sessions.on_page(&token, &id) {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "not_on_page", "document is not on the current result page"));
    }
    let snap = state.index.snapshot();
    let doc = snap
        .get_document(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no document {id}")))?;
    state.record(AuditRecord::new(AuditAction::ExpandDoc, Some(&session.user_id)).client(client(&addr)).detail(id.clone()))?;
    let mut body = json!({ "document": doc.to_flat_json() });
    if let Some(link) = crate::response::image_link(state.config.viewer_url_template.as_deref(), doc) {
        body["image_link"] = link.into();
    }
    Ok(Json(body))
}

async fn export_handler(
    State(state): State<Shared>,
    addr: ClientAddr,
    headers: HeaderMap,
    body: Result<Json<ExportRequest>, JsonRejection>,
) -> Result<Json<ExportBundle>, ApiError> {
    let client = client(&addr);
    let raw_q = body.as_ref().map(|Json(r)| r.q.clone()).unwrap_or_default();
    let reject = |user: Option<&str>, err: ApiError| -> ApiError {
        let rec = AuditRecord::new(AuditAction::RejectedQuery, user)
            .query(&raw_q)
            .client(client.clone())
            .detail(format!("export: {}", err.code()));
        match state.record(rec) {
            Ok(()) => err,
            Err(audit_err) => audit_err,
        }
    };

    let (_, session) = state.session(&headers).map_err(|e| reject(None, auth_error(&e)))?;
    let user = Some(session.user_id.as_str());
    if !session.allows(Tier::Researcher) {
        return Err(reject(user, auth_error(&AuthError::TierDenied { requested: Tier::Researcher })));
    }
    let Some(protocol_tag) = session.protocol_tag.clone().filter(|t| !t.trim().is_empty()) else {
        return Err(reject(user, auth_error(&AuthError::MissingProtocol)));
    };
    let (Some(master), true) = (state.deid_key.clone(), state.export_enabled()) else {
        return Err(reject(
            user,
            ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "export_disabled", "export needs a de-identification key and a PHI field list"),
        ));
    };
    let Json(req) = body.map_err(|e| reject(user, ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())))?;
    let filters = filters_from(req.modality.as_deref(), req.from.as_deref(), req.to.as_deref(), req.collapse.as_deref())
        .map_err(|e| reject(user, e))?;

    let snap = state.index.snapshot();
    let (cfg, now, q, phi) = (state.search.clone(), state.clock.now(), req.q.clone(), state.config.phi_fields.clone());
    let task = tokio::task::spawn_blocking(move || {
        let outcome = search_all(&q, filters, &snap, now, &cfg)?;
        let (export_id, key) = master.export_key();
        let deid = Deidentifier::new(key, &phi);
        let docs: Vec<serde_json::Value> = outcome
            .hits
            .iter()
            .filter_map(|h| snap.get_document(&h.doc_id))
            .map(|d| deid.deidentify(d).to_flat_json())
            .collect();
        Ok::<_, radsearch_core::ranking::SearchError>((export_id, docs))
    });
    let (export_id, documents) = task
        .await
        .map_err(|_| reject(user, ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "export task failed")))?
        .map_err(|e| reject(user, ApiError::from(&e)))?;

    state.record(
        AuditRecord::new(AuditAction::Export, user)
            .query(&req.q)
            .results(documents.len())
            .client(client.clone())
            .detail(format!("export {export_id} protocol {protocol_tag}")),
    )?;
    Ok(Json(ExportBundle {
        export_id,
        query: req,
        generated_at: now,
        user_id: session.user_id.clone(),
        protocol_tag,
        total: documents.len(),
        documents,
    }))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct AuditParams {
    pub user: Option<String>,
    pub action: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    /// `json` (default) or `jsonl`, the audit file format.
    pub format: Option<String>,
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn audit_handler(
    State(state): State<Shared>,
    headers: HeaderMap,
    params: Result<Query<AuditParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let presented = headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok());
    let admitted = match (&state.config.admin_token, presented) {
        (Some(expected), Some(given)) => constant_time_eq(expected.as_bytes(), given.as_bytes()),
        _ => false,
    };
    if !admitted {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "admin_required", "audit review needs the admin token"));
    }
    let Query(p) = params.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let bad = |what: &str, v: &str| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("invalid {what} {v:?}"));
    let action = match &p.action {
        Some(a) => Some(a.parse::<AuditAction>().map_err(|_| bad("action", a))?),
        None => None,
    };
    let time = |s: &Option<String>, upper: bool, what: &str| match s {
        Some(v) => parse_time_bound(v, upper).map(Some).ok_or_else(|| bad(what, v)),
        None => Ok(None),
    };
    let filter = AuditFilter { user: p.user.clone(), action, from: time(&p.from, false, "from")?, to: time(&p.to, true, "to")? };
    let records = state
        .audit
        .query(&filter)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "audit_unavailable", e.to_string()))?;
    match p.format.as_deref() {
        None | Some("json") => Ok(Json(json!({ "records": records })).into_response()),
        Some("jsonl") => {
            let mut out = String::new();
            for r in &records {
                out.push_str(&serde_json::to_string(r).expect("audit records serialize"));
                out.push('\n');
            }
            Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response())
        }
        Some(other) => Err(bad("format", other)),
    }
}

/// Serves until `shutdown` resolves, then flushes the audit trail.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state.clone());
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await?;
    state.audit.sync()
}
