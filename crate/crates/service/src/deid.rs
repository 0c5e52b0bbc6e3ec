//! Keyed surrogates for PHI fields and scrubbing of PHI echoes in free text.

use std::collections::BTreeSet;

use hmac::{Hmac, KeyInit, Mac};
use radsearch_core::schema::{FieldValue, ReportDocument};
use rand::RngCore;
use regex::RegexBuilder;
use sha2::Sha256;

pub const DEID_KEY_ENV: &str = "RADSEARCH_DEID_KEY";
pub const REDACTED: &str = "[REDACTED]";

type HmacSha256 = Hmac<Sha256>;

fn mac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut m = <HmacSha256 as KeyInit>::new_from_slice(key).expect("hmac takes any key length");
    for p in parts {
        m.update(&(p.len() as u64).to_le_bytes());
        m.update(p);
    }
    m.finalize().into_bytes().into()
}

/// Deployment secret all export keys derive from.
#[derive(Clone)]
pub struct MasterKey(Vec<u8>);

impl std::fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MasterKey(..)")
    }
}

impl MasterKey {
    pub const MIN_LEN: usize = 16;

    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, String> {
        let bytes = bytes.into();
        if bytes.len() < Self::MIN_LEN {
            return Err(format!("de-identification key must be at least {} bytes", Self::MIN_LEN));
        }
        Ok(MasterKey(bytes))
    }

    /// Reads the key from the environment; `None` when unset.
    pub fn from_env() -> Result<Option<Self>, String> {
        match std::env::var(DEID_KEY_ENV) {
            Ok(v) => Self::new(v.into_bytes()).map(Some),
            Err(std::env::VarError::NotPresent) => Ok(None),
            Err(e) => Err(format!("{DEID_KEY_ENV}: {e}")),
        }
    }

    /// A fresh per-export key, so surrogates cannot be joined across exports.
    pub fn export_key(&self) -> (String, ExportKey) {
        let mut nonce = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut nonce);
        (hex::encode(nonce), self.export_key_for(&nonce))
    }

    pub fn export_key_for(&self, nonce: &[u8]) -> ExportKey {
        ExportKey(mac(&self.0, &[b"radsearch-export", nonce]))
    }
}

#[derive(Clone)]
pub struct ExportKey([u8; 32]);

pub struct Deidentifier {
    key: ExportKey,
    phi_fields: Vec<String>,
}

impl Deidentifier {
    pub fn new(key: ExportKey, phi_fields: &[String]) -> Self {
        Deidentifier { key, phi_fields: phi_fields.to_vec() }
    }

    fn is_phi(&self, field: &str) -> bool {
        self.phi_fields.iter().any(|p| p.eq_ignore_ascii_case(field))
    }

    /// Stable within one export key; not invertible without it.
    pub fn surrogate(&self, field: &str, value: &str) -> String {
        let digest = mac(&self.key.0, &[field.to_lowercase().as_bytes(), value.as_bytes()]);
        format!("anon-{}", &hex::encode(digest)[..20])
    }

    /// Every string form of the document's PHI that must not survive export.
    pub fn needles(&self, doc: &ReportDocument) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut whole = BTreeSet::new();
        let mut words = BTreeSet::new();
        for (field, value) in &doc.fields {
            if !self.is_phi(field) {
                continue;
            }
            match value {
                FieldValue::Datetime(dt) => {
                    whole.insert(value.render());
                    whole.insert(dt.format("%Y-%m-%d").to_string());
                    whole.insert(dt.format("%m/%d/%Y").to_string());
                }
                FieldValue::Text(s) | FieldValue::Identifier(s) => {
                    let s = s.trim();
                    if !s.is_empty() {
                        whole.insert(s.to_string());
                    }
                    let parts: Vec<&str> = s.split(|c: char| !c.is_alphanumeric()).filter(|p| p.chars().count() >= 2).collect();
                    if parts.len() > 1 {
                        words.extend(parts.into_iter().map(str::to_string));
                    }
                }
            }
        }
        (whole, words)
    }

    pub fn deidentify(&self, doc: &ReportDocument) -> ReportDocument {
        let (whole, words) = self.needles(doc);
        let mut out = doc.clone();
        for (field, value) in out.fields.iter_mut() {
            if self.is_phi(field) {
                *value = FieldValue::Identifier(self.surrogate(field, &value.render()));
            } else if let FieldValue::Text(s) | FieldValue::Identifier(s) = value {
                *s = scrub(s, &whole, &words);
            }
        }
        out
    }
}

/// Case-insensitive removal of whole values anywhere and of name parts at word
/// boundaries, repeated until nothing matches.
pub fn scrub(text: &str, whole: &BTreeSet<String>, words: &BTreeSet<String>) -> String {
    let mut alternatives: Vec<String> = whole.iter().map(|w| regex::escape(w)).collect();
    alternatives.extend(words.iter().map(|w| format!(r"\b{}\b", regex::escape(w))));
    if alternatives.is_empty() {
        return text.to_string();
    }
    // longest first so a full name wins over its parts
    alternatives.sort_by_key(|a| std::cmp::Reverse(a.len()));
    let re = RegexBuilder::new(&alternatives.join("|")).case_insensitive(true).build().expect("escaped pattern");
    let mut current = text.to_string();
    loop {
        let next = re.replace_all(&current, REDACTED).into_owned();
        if next == current {
            return current;
        }
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use radsearch_core::schema::names;

    fn phi() -> Vec<String> {
        [names::PATIENT_ID, names::PATIENT_NAME, names::PATIENT_DOB].map(String::from).into()
    }

    fn doc(id: &str, mrn: &str, name: &str, findings: &str) -> ReportDocument {
        ReportDocument::new(id)
            .with_identifier(names::PATIENT_ID, mrn)
            .with_text(names::PATIENT_NAME, name)
            .with_datetime(names::PATIENT_DOB, chrono::Utc.with_ymd_and_hms(1950, 3, 4, 0, 0, 0).unwrap())
            .with_text(names::FINDINGS, findings)
    }

    fn key() -> MasterKey {
        MasterKey::new(b"0123456789abcdef0123".to_vec()).unwrap()
    }

    #[test]
    fn surrogates_are_stable_per_export_and_rotate_across() {
        let (_, k1) = key().export_key();
        let (_, k2) = key().export_key();
        let d1 = Deidentifier::new(k1, &phi());
        let d2 = Deidentifier::new(k2, &phi());
        let a = doc("1", "MRN1", "Lee, Ann", "x");
        let b = doc("2", "MRN1", "Lee, Ann", "y");
        let (a1, b1, a2) = (d1.deidentify(&a), d1.deidentify(&b), d2.deidentify(&a));
        assert_eq!(a1.get(names::PATIENT_ID), b1.get(names::PATIENT_ID));
        assert_ne!(a1.get(names::PATIENT_ID), a2.get(names::PATIENT_ID));
        assert_eq!(key().export_key_for(b"n").0, key().export_key_for(b"n").0);
    }

    #[test]
    fn text_echoes_are_scrubbed() {
        let (_, k) = key().export_key();
        let d = Deidentifier::new(k, &phi());
        let src = doc(
            "1",
            "MRN0042",
            "Okafor, Priya",
            "Patient PRIYA OKAFOR (mrn0042, DOB 1950-03-04) seen. Compared with Okafor, Priya prior. Okaforish stays.",
        );
        let out = d.deidentify(&src);
        let text = out.text(names::FINDINGS).unwrap().to_lowercase();
        for needle in ["okafor, priya", "mrn0042", "1950-03-04", "priya"] {
            assert!(!text.contains(needle), "{needle} in {text}");
        }
        assert!(text.contains("okaforish"));
        assert!(out.text(names::PATIENT_NAME).unwrap().starts_with("anon-"));
        assert_eq!(out.doc_id, "1");
    }

    #[test]
    fn short_keys_are_rejected() {
        assert!(MasterKey::new(b"short".to_vec()).is_err());
    }
}
