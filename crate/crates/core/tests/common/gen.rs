//! Seeded random corpora and Boolean queries over a small clinical vocabulary.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use radsearch_core::schema::{names, ReportDocument};

pub const VOCAB: &[&str] = &[
    "filter", "filters", "stent", "stents", "anoxic", "hypoxic", "injury", "liver", "lesion", "lesions",
    "pump", "hepatic", "infusion", "ivc", "removal", "placement", "no", "evidence", "of", "the",
    "brain", "mri", "lumbar", "spine", "palmaz", "retrieval", "normal", "mass",
];
pub const NAMES: &[&str] = &["john", "smith", "maria", "garcia", "lee", "chen", "anna", "jones"];
pub const MODALITIES: &[&str] = &["CT", "MRI", "US", "XR", "IR"];

fn words<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

pub fn random_doc<R: Rng>(rng: &mut R, id: usize) -> ReportDocument {
    let name = format!("{} {}", NAMES.choose(rng).unwrap(), NAMES.choose(rng).unwrap());
    let mut doc = ReportDocument::new(format!("D{id:05}"))
        .with_identifier(names::PATIENT_ID, format!("P{}", rng.gen_range(0..40)))
        .with_text(names::PATIENT_NAME, name)
        .with_text(names::STUDY_DESCRIPTION, words(rng, 1, 4))
        .with_text(names::FINDINGS, words(rng, 0, 25))
        .with_text(names::MODALITY, *MODALITIES.choose(rng).unwrap())
        .with_datetime(names::STUDY_DATETIME, base_time() - Duration::days(rng.gen_range(0..3000)));
    if rng.gen_bool(0.7) {
        doc = doc.with_text(names::IMPRESSION, words(rng, 1, 10));
    }
    if rng.gen_bool(0.5) {
        doc = doc.with_text(names::AUTHOR, format!("{} {}", NAMES.choose(rng).unwrap(), NAMES.choose(rng).unwrap()));
    }
    doc
}

pub fn random_corpus<R: Rng>(rng: &mut R, n: usize) -> Vec<ReportDocument> {
    (0..n).map(|i| random_doc(rng, i)).collect()
}

fn leaf<R: Rng>(rng: &mut R) -> String {
    let w = *VOCAB.choose(rng).unwrap();
    match rng.gen_range(0..10) {
        0 => format!("\"{} {}\"", w, VOCAB.choose(rng).unwrap()),
        1 if w.len() > 3 => format!("{}*", &w[..rng.gen_range(2..w.len())]),
        2 if w.len() > 3 => {
            let i = rng.gen_range(1..w.len() - 1);
            format!("{}?{}", &w[..i], &w[i + 1..])
        }
        3 => format!("Findings:{w}"),
        4 => format!("PatientName:{}", NAMES.choose(rng).unwrap()),
        5 => format!("PatientID:P{}", rng.gen_range(0..40)),
        6 => format!("StudyDescription:\"{} {}\"", w, VOCAB.choose(rng).unwrap()),
        _ => w.to_string(),
    }
}

/// A Boolean query with up to `depth` levels of nesting.
pub fn random_query<R: Rng>(rng: &mut R, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        return leaf(rng);
    }
    let a = random_query(rng, depth - 1);
    let b = random_query(rng, depth - 1);
    match rng.gen_range(0..8) {
        0 => format!("{a} AND {b}"),
        1 => format!("{a} OR {b}"),
        2 => format!("({a}) OR ({b})"),
        3 => format!("({a}) AND NOT ({b})"),
        4 => format!("{a} | {b}"),
        5 => format!("{a} & -{}", leaf(rng)),
        6 => format!("NOT ({a})"),
        _ => format!("({a}) {b} OR {}", leaf(rng)),
    }
}
