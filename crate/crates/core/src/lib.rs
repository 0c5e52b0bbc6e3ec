//! Core of a document-oriented search engine for radiology reports.

pub mod analysis;
pub mod config;
pub mod scalar;
pub mod schema;

pub use scalar::Scalar;
pub mod index;
pub mod ingest;
pub mod query;
pub mod ranking;
pub mod eval;

/// Single-precision instantiations of the scored types.
pub type SearchConfigF32 = ranking::SearchConfig<f32>;
pub type ScoredHitF32 = ranking::ScoredHit<f32>;
pub type ResultPageF32 = ranking::ResultPage<f32>;

/// Double precision, the default parameter of every scored type.
pub type SearchConfigF64 = ranking::SearchConfig<f64>;
pub type ScoredHitF64 = ranking::ScoredHit<f64>;
pub type ResultPageF64 = ranking::ResultPage<f64>;
