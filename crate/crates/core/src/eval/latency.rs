//! Response time versus result count.

use std::io::{self, Write};
use std::time::Instant;

use chrono::{DateTime, TimeDelta, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{EvalError, SearchEngine};
use crate::schema::{names, ReportDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub query: String,
    pub result_count: usize,
    pub elapsed_ms: f64,
}

/// Ordinary least squares of y on x with a two-sided t-test on the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub r_squared: f64,
}

impl LinearFit {
    /// Two-sided confidence interval for the slope.
    pub fn slope_interval(&self, level: f64) -> (f64, f64) {
        let t = StudentsT::new(0.0, 1.0, (self.n - 2) as f64).expect("n > 2");
        let q = t.inverse_cdf(0.5 + level / 2.0);
        (self.slope - q * self.slope_se, self.slope + q * self.slope_se)
    }
}

pub fn ols(points: &[(f64, f64)]) -> Result<LinearFit, EvalError> {
    let n = points.len();
    if n < 3 {
        return Err(EvalError::DegenerateFit);
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(EvalError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let df = nf - 2.0;
    let slope_se = (sse / df / sxx).sqrt();
    let t_stat = if slope_se > 0.0 { slope / slope_se } else if slope == 0.0 { 0.0 } else { f64::INFINITY.copysign(slope) };
    let p_value = if t_stat.is_infinite() {
        0.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * (1.0 - dist.cdf(t_stat.abs()))
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit { n, slope, intercept, slope_se, t_stat, p_value, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub samples: Vec<LatencySample>,
    pub fit: LinearFit,
    pub mean_ms: f64,
    pub sem_ms: f64,
    pub p50_ms: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Times page 1 of every workload query after `warmup` untimed runs.
pub fn latency_benchmark(engine: &dyn SearchEngine, workload: &[String], warmup: usize) -> Result<LatencyReport, EvalError> {
    if workload.is_empty() {
        return Err(EvalError::EmptyWorkload);
    }
    let wrap = |q: &String, source| EvalError::Search { query: q.clone(), source };
    for q in workload.iter().cycle().take(warmup) {
        engine.page(q, 1).map_err(|e| wrap(q, e))?;
    }
    let mut samples = Vec::with_capacity(workload.len());
    for q in workload {
        let start = Instant::now();
        let page = engine.page(q, 1).map_err(|e| wrap(q, e))?;
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        samples.push(LatencySample { query: q.clone(), result_count: page.total_hits, elapsed_ms });
    }
    summarize(samples)
}

pub fn summarize(samples: Vec<LatencySample>) -> Result<LatencyReport, EvalError> {
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.result_count as f64, s.elapsed_ms)).collect();
    let fit = ols(&points)?;
    let n = samples.len() as f64;
    let mean_ms = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var = points.iter().map(|p| (p.1 - mean_ms).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted: Vec<f64> = points.iter().map(|p| p.1).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(LatencyReport { fit, mean_ms, sem_ms: (var / n).sqrt(), p50_ms: median(&sorted), samples })
}

pub fn write_latency_csv(report: &LatencyReport, out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["result_count", "elapsed_ms", "query"])?;
    for s in &report.samples {
        w.write_record([s.result_count.to_string(), format!("{:.4}", s.elapsed_ms), s.query.clone()])?;
    }
    w.flush()
}

pub fn write_latency_dat(report: &LatencyReport, mut out: impl Write) -> io::Result<()> {
    let f = &report.fit;
    writeln!(out, "# fit: y = {:.6e} x + {:.4} (p = {:.3e}, r2 = {:.4})", f.slope, f.intercept, f.p_value, f.r_squared)?;
    writeln!(out, "# mean {:.3} ms, sem {:.3} ms, p50 {:.3} ms", report.mean_ms, report.sem_ms, report.p50_ms)?;
    writeln!(out, "# result_count elapsed_ms")?;
    for s in &report.samples {
        writeln!(out, "{} {:.4}", s.result_count, s.elapsed_ms)?;
    }
    Ok(())
}

const BENCH_VOCAB: usize = 5000;

fn bench_word(rank: usize) -> String {
    const C: &[u8] = b"bdkmnrt";
    const V: &[u8] = b"aiou";
    let mut w = String::with_capacity(8);
    let mut r = rank;
    for _ in 0..3 {
        w.push(C[r % C.len()] as char);
        r /= C.len();
        w.push(V[r % V.len()] as char);
        r /= V.len();
    }
    // (7 * 4)^3 = 21952 distinct words
    format!("q{w}")
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| 1.0 / k as f64)).expect("positive weights")
}

/// Reports whose words follow a Zipf law, so term document frequencies span several
/// orders of magnitude.
pub fn bench_corpus(n: usize, seed: u64, start: DateTime<Utc>) -> Vec<ReportDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = zipf(BENCH_VOCAB);
    let words = |rng: &mut ChaCha8Rng, len: usize| -> String {
        (0..len).map(|_| bench_word(dist.sample(rng))).collect::<Vec<_>>().join(" ")
    };
    (0..n)
        .map(|i| {
            let (findings_len, impression_len) = (rng.gen_range(20..60), rng.gen_range(4..12));
            let study = start - TimeDelta::minutes(rng.gen_range(0..10 * 365 * 1440));
            ReportDocument::new(format!("B{i:07}"))
                .with_identifier(names::PATIENT_ID, format!("MRN{:07}", rng.gen_range(0..n as u32 / 3 + 1)))
                .with_text(names::STUDY_DESCRIPTION, words(&mut rng, 3))
                .with_text(names::FINDINGS, words(&mut rng, findings_len))
                .with_text(names::IMPRESSION, words(&mut rng, impression_len))
                .with_identifier(names::MODALITY, ["CT", "MR", "CR", "US"][i % 4])
                .with_datetime(names::STUDY_DATETIME, study)
        })
        .collect()
}

/// Queries over the bench vocabulary with ranks drawn log-uniformly, mixing single
/// terms, conjunctions and disjunctions.
pub fn bench_workload(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = (BENCH_VOCAB as f64).ln();
    let word = |rng: &mut ChaCha8Rng| bench_word((rng.gen_range(0.0..max)).exp() as usize - 1);
    (0..count)
        .map(|i| match i % 3 {
            0 => word(&mut rng),
            1 => format!("{} OR {}", word(&mut rng), word(&mut rng)),
            _ => format!("{} {}", word(&mut rng), word(&mut rng)),
        })
        .collect()
}
