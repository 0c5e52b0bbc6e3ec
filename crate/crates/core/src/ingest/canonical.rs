use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RawRecord;
use crate::schema::{is_identifier, names, FieldDef, FieldKind, FieldValue, ReportDocument, Schema};

/// Canonical name the alias table maps report identifiers to.
pub const DOC_ID: &str = "doc_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownFields {
    #[default]
    Drop,
    /// Register the field as analyzed text on first sight.
    Register,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CanonicalizeConfig {
    /// Source field name (matched case-insensitively) → schema field name or `doc_id`.
    pub aliases: BTreeMap<String, String>,
    /// chrono formats tried after RFC 3339, naive values read as UTC.
    pub datetime_formats: Vec<String>,
    pub unknown_fields: UnknownFields,
}

impl Default for CanonicalizeConfig {
    fn default() -> Self {
        use names::*;
        let pairs: &[(&str, &str)] = &[
            ("id", DOC_ID),
            ("accession", DOC_ID),
            ("accession_number", DOC_ID),
            ("accessionnumber", DOC_ID),
            ("report_id", DOC_ID),
            ("pid", PATIENT_ID),
            ("patient_id", PATIENT_ID),
            ("mrn", PATIENT_ID),
            ("patient_name", PATIENT_NAME),
            ("dob", PATIENT_DOB),
            ("patient_dob", PATIENT_DOB),
            ("study_description", STUDY_DESCRIPTION),
            ("description", STUDY_DESCRIPTION),
            ("title", STUDY_DESCRIPTION),
            ("radiologist", AUTHOR),
            ("body", FINDINGS),
            ("study_datetime", STUDY_DATETIME),
            ("study_date", STUDY_DATETIME),
            ("upload_datetime", REPORT_UPLOAD_DATETIME),
            ("report_upload_datetime", REPORT_UPLOAD_DATETIME),
        ];
        CanonicalizeConfig {
            aliases: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            datetime_formats: [
                "%Y-%m-%d %H:%M:%S",
                "%Y-%m-%dT%H:%M:%S",
                "%Y-%m-%d %H:%M",
                "%Y%m%d%H%M%S",
                "%m/%d/%Y %H:%M",
                "%Y-%m-%d",
                "%Y%m%d",
                "%m/%d/%Y",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            unknown_fields: UnknownFields::Drop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    MalformedJson,
    NotObject,
    MissingId,
    BadDatetime,
    BadValue,
    InvalidDocument,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCode::MalformedJson => "malformed_json",
            RejectCode::NotObject => "not_object",
            RejectCode::MissingId => "missing_id",
            RejectCode::BadDatetime => "bad_datetime",
            RejectCode::BadValue => "bad_value",
            RejectCode::InvalidDocument => "invalid_document",
        }
    }
}

/// A canonical document plus fields that must be registered before it can be stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canonical {
    pub doc: ReportDocument,
    pub new_fields: Vec<FieldDef>,
}

/// Parses RFC 3339 first, then each format in order. Naive values are UTC;
/// bare dates are midnight. Integers are Unix seconds.
pub fn parse_datetime(value: &Value, formats: &[String]) -> Option<DateTime<Utc>> {
    match value {
        Value::Number(n) => n.as_i64().and_then(|s| Utc.timestamp_opt(s, 0).single()),
        Value::String(s) => {
            let s = s.trim();
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                return Some(dt.with_timezone(&Utc));
            }
            formats.iter().find_map(|f| {
                NaiveDateTime::parse_from_str(s, f)
                    .ok()
                    .or_else(|| NaiveDate::parse_from_str(s, f).ok().and_then(|d| d.and_hms_opt(0, 0, 0)))
                    .map(|naive| Utc.from_utc_datetime(&naive))
            })
        }
        _ => None,
    }
}

fn scalar_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Maps a raw record onto the schema.
pub fn canonicalize(
    record: &RawRecord,
    schema: &Schema,
    cfg: &CanonicalizeConfig,
    batch_id: &str,
    received_at: DateTime<Utc>,
) -> Result<Canonical, RejectCode> {
    let object = match record {
        RawRecord::Malformed { .. } => return Err(RejectCode::MalformedJson),
        RawRecord::Json(Value::Object(map)) => map,
        RawRecord::Json(_) => return Err(RejectCode::NotObject),
    };
    let mut doc_id = None;
    let mut fields = BTreeMap::new();
    let mut new_fields: Vec<FieldDef> = Vec::new();
    for (raw_name, value) in object {
        let target = cfg
            .aliases
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(raw_name))
            .map_or(raw_name.as_str(), |(_, v)| v.as_str());
        if target.eq_ignore_ascii_case(DOC_ID) {
            doc_id = scalar_text(value).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            continue;
        }
        if value.is_null() {
            continue;
        }
        let (name, kind) = match schema.lookup(target) {
            Some((_, def)) => (def.name.clone(), def.kind),
            None => match cfg.unknown_fields {
                UnknownFields::Register if is_identifier(target) => {
                    if !new_fields.iter().any(|d| d.name.eq_ignore_ascii_case(target)) {
                        new_fields.push(FieldDef::text(target));
                    }
                    (target.to_string(), FieldKind::AnalyzedText)
                }
                _ => continue,
            },
        };
        let value = match kind {
            FieldKind::Datetime => FieldValue::Datetime(parse_datetime(value, &cfg.datetime_formats).ok_or(RejectCode::BadDatetime)?),
            FieldKind::Identifier => FieldValue::Identifier(scalar_text(value).ok_or(RejectCode::BadValue)?),
            FieldKind::AnalyzedText | FieldKind::ExactKeyword => FieldValue::Text(scalar_text(value).ok_or(RejectCode::BadValue)?),
        };
        fields.insert(name, value);
    }
    let doc_id = doc_id.ok_or(RejectCode::MissingId)?;
    let mut doc = ReportDocument::new(doc_id);
    doc.fields = fields;
    doc.ingest_time = received_at;
    doc.source_batch = batch_id.to_string();
    Ok(Canonical { doc, new_fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn canon(v: Value) -> Result<Canonical, RejectCode> {
        canonicalize(&RawRecord::Json(v), &Schema::radiology(), &CanonicalizeConfig::default(), "b1", Utc::now())
    }

    #[test]
    fn aliases_map_to_schema() {
        let c = canon(json!({"id": "A1", "PID": "123", "body": "IVC filter", "study_date": "2023-05-01"})).unwrap();
        assert_eq!(c.doc.doc_id, "A1");
        assert_eq!(c.doc.get(names::PATIENT_ID), Some(&FieldValue::Identifier("123".into())));
        assert_eq!(c.doc.text(names::FINDINGS), Some("IVC filter"));
        assert_eq!(c.doc.datetime(names::STUDY_DATETIME), Some(Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap()));
        assert_eq!(c.doc.source_batch, "b1");
    }

    #[test]
    fn schema_names_case_insensitive() {
        let c = canon(json!({"ACCESSION": 77, "findings": "x", "patientid": 5})).unwrap();
        assert_eq!(c.doc.doc_id, "77");
        assert!(c.doc.get("Findings").is_some());
        assert_eq!(c.doc.get(names::PATIENT_ID), Some(&FieldValue::Identifier("5".into())));
    }

    #[test]
    fn rejections() {
        assert_eq!(canon(json!({"body": "x"})).unwrap_err(), RejectCode::MissingId);
        assert_eq!(canon(json!({"id": "  "})).unwrap_err(), RejectCode::MissingId);
        assert_eq!(canon(json!({"id": "a", "study_date": "yesterday"})).unwrap_err(), RejectCode::BadDatetime);
        assert_eq!(canon(json!({"id": "a", "body": ["x"]})).unwrap_err(), RejectCode::BadValue);
        assert_eq!(canon(json!([1, 2])).unwrap_err(), RejectCode::NotObject);
    }

    #[test]
    fn unknown_fields_dropped_or_registered() {
        let c = canon(json!({"id": "a", "Laterality": "left"})).unwrap();
        assert!(c.doc.get("Laterality").is_none());
        let cfg = CanonicalizeConfig { unknown_fields: UnknownFields::Register, ..Default::default() };
        let c = canonicalize(&RawRecord::Json(json!({"id": "a", "Laterality": "left"})), &Schema::radiology(), &cfg, "b", Utc::now()).unwrap();
        assert_eq!(c.new_fields, vec![FieldDef::text("Laterality")]);
        assert_eq!(c.doc.text("Laterality"), Some("left"));
    }

    #[test]
    fn datetime_formats() {
        let f = CanonicalizeConfig::default().datetime_formats;
        let want = Utc.with_ymd_and_hms(2021, 3, 4, 5, 6, 7).unwrap();
        for s in ["2021-03-04T05:06:07Z", "2021-03-04T07:06:07+02:00", "2021-03-04 05:06:07", "20210304050607"] {
            assert_eq!(parse_datetime(&json!(s), &f), Some(want), "{s}");
        }
        assert_eq!(parse_datetime(&json!("03/04/2021"), &f), Some(Utc.with_ymd_and_hms(2021, 3, 4, 0, 0, 0).unwrap()));
        assert_eq!(parse_datetime(&json!(0), &f), Some(DateTime::<Utc>::UNIX_EPOCH));
    }
}
