//! HTTP front door for a radsearch index: tiered sessions, 10-report pages,
//! de-identified export and an append-only audit trail.

pub mod audit;
pub mod auth;
pub mod config;
pub mod deid;
pub mod api;
pub mod response;

pub use api::{router, serve, AppState};
