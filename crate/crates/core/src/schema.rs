//! Dynamic field schema shared by the analyzer, the index and the ranker.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical field names of the radiology report schema.
pub mod names {
    pub const PATIENT_ID: &str = "PatientID";
    pub const PATIENT_NAME: &str = "PatientName";
    pub const PATIENT_DOB: &str = "PatientDOB";
    pub const STUDY_DESCRIPTION: &str = "StudyDescription";
    pub const AUTHOR: &str = "Author";
    pub const FINDINGS: &str = "Findings";
    pub const IMPRESSION: &str = "Impression";
    pub const MODALITY: &str = "Modality";
    pub const STUDY_DATETIME: &str = "StudyDatetime";
    pub const REPORT_UPLOAD_DATETIME: &str = "ReportUploadDatetime";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    AnalyzedText,
    ExactKeyword,
    Datetime,
    Identifier,
}

impl FieldKind {
    /// Whether values of this kind produce postings.
    pub fn is_indexed(self) -> bool {
        !matches!(self, FieldKind::Datetime)
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FieldKind::AnalyzedText => "analyzed_text",
            FieldKind::ExactKeyword => "exact_keyword",
            FieldKind::Datetime => "datetime",
            FieldKind::Identifier => "identifier",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default)]
    pub shingled: bool,
    #[serde(default = "default_true")]
    pub stored: bool,
}

fn default_true() -> bool {
    true
}

impl FieldDef {
    pub fn new(name: impl Into<String>, kind: FieldKind) -> Self {
        FieldDef { name: name.into(), kind, shingled: false, stored: true }
    }

    pub fn text(name: impl Into<String>) -> Self {
        Self::new(name, FieldKind::AnalyzedText)
    }

    pub fn with_shingles(mut self) -> Self {
        self.shingled = true;
        self
    }
}

/// Position of a field in its schema. Fields are only ever appended, so ids are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldId(pub u16);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{name}` is already registered as {existing}, cannot re-register as {requested}")]
    KindConflict { name: String, existing: FieldKind, requested: FieldKind },
    #[error("invalid field definition `{name}`: {reason}")]
    InvalidDefinition { name: String, reason: String },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "SchemaRepr", into = "SchemaRepr")]
pub struct Schema {
    fields: Vec<FieldDef>,
    by_name: HashMap<String, FieldId>,
    version: u64,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    version: u64,
    fields: Vec<FieldDef>,
}

impl From<SchemaRepr> for Schema {
    fn from(repr: SchemaRepr) -> Self {
        let by_name = repr
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| (f.name.to_lowercase(), FieldId(i as u16)))
            .collect();
        Schema { fields: repr.fields, by_name, version: repr.version }
    }
}

impl From<Schema> for SchemaRepr {
    fn from(schema: Schema) -> Self {
        SchemaRepr { version: schema.version, fields: schema.fields }
    }
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    /// The report schema with every field the engine knows about.
    pub fn radiology() -> Self {
        let mut schema = Self::preliminary();
        schema.register(FieldDef::new(names::PATIENT_DOB, FieldKind::Datetime)).unwrap();
        schema
    }

    /// The report schema without `PatientDOB`, which deployments add later.
    pub fn preliminary() -> Self {
        use names::*;
        let mut schema = Schema::new();
        for def in [
            FieldDef::new(PATIENT_ID, FieldKind::Identifier),
            FieldDef::text(PATIENT_NAME).with_shingles(),
            FieldDef::text(STUDY_DESCRIPTION).with_shingles(),
            FieldDef::text(AUTHOR).with_shingles(),
            FieldDef::text(FINDINGS),
            FieldDef::text(IMPRESSION),
            FieldDef::new(MODALITY, FieldKind::ExactKeyword),
            FieldDef::new(STUDY_DATETIME, FieldKind::Datetime),
            FieldDef::new(REPORT_UPLOAD_DATETIME, FieldKind::Datetime),
        ] {
            schema.register(def).unwrap();
        }
        schema
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Registers a field. Re-registering an identical definition is a no-op
    /// that returns the current version.
    pub fn register(&mut self, def: FieldDef) -> Result<u64, SchemaError> {
        if def.name.is_empty() || !is_identifier(&def.name) {
            return Err(SchemaError::InvalidDefinition {
                name: def.name,
                reason: "field names must be identifiers".into(),
            });
        }
        if def.shingled && def.kind != FieldKind::AnalyzedText {
            return Err(SchemaError::InvalidDefinition {
                name: def.name,
                reason: "only analyzed_text fields can be shingled".into(),
            });
        }
        if let Some(id) = self.by_name.get(&def.name.to_lowercase()) {
            let existing = &self.fields[id.0 as usize];
            if existing.kind != def.kind {
                return Err(SchemaError::KindConflict {
                    name: def.name,
                    existing: existing.kind,
                    requested: def.kind,
                });
            }
            if existing == &def {
                return Ok(self.version);
            }
            // Same kind, different flags: flags only apply to documents indexed from now on.
            self.fields[id.0 as usize] = def;
            self.version += 1;
            return Ok(self.version);
        }
        let id = FieldId(self.fields.len() as u16);
        self.by_name.insert(def.name.to_lowercase(), id);
        self.fields.push(def);
        self.version += 1;
        Ok(self.version)
    }

    /// Case-insensitive lookup.
    pub fn lookup(&self, name: &str) -> Option<(FieldId, &FieldDef)> {
        self.by_name
            .get(&name.to_lowercase())
            .map(|id| (*id, &self.fields[id.0 as usize]))
    }

    pub fn resolve(&self, name: &str) -> Result<(FieldId, &FieldDef), SchemaError> {
        self.lookup(name).ok_or_else(|| SchemaError::UnknownField(name.to_string()))
    }

    pub fn def(&self, id: FieldId) -> &FieldDef {
        &self.fields[id.0 as usize]
    }

    pub fn fields(&self) -> impl Iterator<Item = (FieldId, &FieldDef)> {
        self.fields.iter().enumerate().map(|(i, f)| (FieldId(i as u16), f))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Fields searched by an unscoped query term.
    pub fn default_search_fields(&self) -> Vec<FieldId> {
        self.fields()
            .filter(|(_, f)| f.kind == FieldKind::AnalyzedText)
            .map(|(id, _)| id)
            .collect()
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldValue {
    Text(String),
    Identifier(String),
    Datetime(DateTime<Utc>),
}

impl FieldValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) | FieldValue::Identifier(s) => Some(s),
            FieldValue::Datetime(_) => None,
        }
    }

    pub fn as_datetime(&self) -> Option<DateTime<Utc>> {
        match self {
            FieldValue::Datetime(dt) => Some(*dt),
            _ => None,
        }
    }

    /// String form used for display, collapse keys and JSON output.
    pub fn render(&self) -> String {
        match self {
            FieldValue::Text(s) | FieldValue::Identifier(s) => s.clone(),
            FieldValue::Datetime(dt) => dt.to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }
}

/// One report: the unit of storage and retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub doc_id: String,
    pub fields: BTreeMap<String, FieldValue>,
    pub ingest_time: DateTime<Utc>,
    #[serde(default)]
    pub source_batch: String,
}

impl ReportDocument {
    pub fn new(doc_id: impl Into<String>) -> Self {
        ReportDocument {
            doc_id: doc_id.into(),
            fields: BTreeMap::new(),
            ingest_time: DateTime::<Utc>::UNIX_EPOCH,
            source_batch: String::new(),
        }
    }

    pub fn with_text(mut self, field: &str, value: impl Into<String>) -> Self {
        self.fields.insert(field.to_string(), FieldValue::Text(value.into()));
        self
    }

    pub fn with_identifier(mut self, field: &str, value: impl Into<String>) -> Self {
        self.fields.insert(field.to_string(), FieldValue::Identifier(value.into()));
        self
    }

    pub fn with_datetime(mut self, field: &str, value: DateTime<Utc>) -> Self {
        self.fields.insert(field.to_string(), FieldValue::Datetime(value));
        self
    }

    /// Case-insensitive field access.
    pub fn get(&self, field: &str) -> Option<&FieldValue> {
        self.fields
            .get(field)
            .or_else(|| self.fields.iter().find(|(k, _)| k.eq_ignore_ascii_case(field)).map(|(_, v)| v))
    }

    pub fn text(&self, field: &str) -> Option<&str> {
        self.get(field).and_then(FieldValue::as_text)
    }

    pub fn datetime(&self, field: &str) -> Option<DateTime<Utc>> {
        self.get(field).and_then(FieldValue::as_datetime)
    }

    /// Study time used by recency boosting and time-range filters.
    pub fn study_time(&self) -> Option<DateTime<Utc>> {
        self.datetime(names::STUDY_DATETIME)
            .or_else(|| self.datetime(names::REPORT_UPLOAD_DATETIME))
    }

    /// Flat `{field: string}` map plus `doc_id`, the shape exposed over the API.
    pub fn to_flat_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("doc_id".into(), self.doc_id.clone().into());
        for (k, v) in &self.fields {
            map.insert(k.clone(), v.render().into());
        }
        serde_json::Value::Object(map)
    }
}
