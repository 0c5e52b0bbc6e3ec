//! Pass/fail thresholds for the validation sweep and the latency benchmark.

use std::fmt;

use radsearch_core::eval::{LatencyReport, ScenarioReport};

pub const SENSITIVITY_OPS: usize = 4;
pub const SPECIFICITY_OPS: usize = 15;
pub const EARLY_THRESHOLD: f64 = 0.90;
pub const MEAN_FINAL_SPECIFICITY: f64 = 0.95;
pub const P50_LIMIT_MS: f64 = 250.0;
pub const SLOPE_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.3}"))
}

/// Final sensitivity exactly 1, early sensitivity and specificity above 0.9,
/// and the mean final specificity.
pub fn trend_checks(reports: &[ScenarioReport]) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut finals = Vec::new();
    for r in reports {
        let last = r.final_point();
        checks.push(Check::new(
            format!("{} final sensitivity", r.name),
            last.sensitivity == Some(1.0),
            format!("{} at {} operators", show(last.sensitivity), last.operator_count),
        ));
        let sens = r.best_within(SENSITIVITY_OPS, |p| p.sensitivity);
        checks.push(Check::new(
            format!("{} sensitivity within {SENSITIVITY_OPS} operators", r.name),
            sens.is_some_and(|s| s > EARLY_THRESHOLD),
            format!("best {} (> {EARLY_THRESHOLD})", show(sens)),
        ));
        let spec = r.best_within(SPECIFICITY_OPS, |p| p.specificity);
        checks.push(Check::new(
            format!("{} specificity within {SPECIFICITY_OPS} operators", r.name),
            spec.is_some_and(|s| s > EARLY_THRESHOLD),
            format!("best {} (> {EARLY_THRESHOLD})", show(spec)),
        ));
        finals.push(last.specificity);
    }
    let defined: Vec<f64> = finals.iter().flatten().copied().collect();
    let mean = (!defined.is_empty() && defined.len() == finals.len()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    checks.push(Check::new(
        "mean final specificity",
        mean.is_some_and(|m| m >= MEAN_FINAL_SPECIFICITY),
        format!("{} over {} scenarios (>= {MEAN_FINAL_SPECIFICITY})", show(mean), finals.len()),
    ));
    checks
}

/// Positive, significant slope of latency on result count and a p50 bound.
pub fn latency_checks(report: &LatencyReport) -> Vec<Check> {
    let fit = &report.fit;
    let (lo, hi) = fit.slope_interval(0.95);
    vec![
        Check::new(
            "latency slope positive and significant",
            fit.slope > 0.0 && fit.p_value < SLOPE_ALPHA,
            format!("slope {:.3e} ms/hit, 95% CI [{lo:.3e}, {hi:.3e}], p = {:.2e}, n = {}", fit.slope, fit.p_value, fit.n),
        ),
        Check::new(
            format!("p50 latency under {P50_LIMIT_MS} ms"),
            report.p50_ms < P50_LIMIT_MS,
            format!("p50 {:.2} ms, mean {:.2} ± {:.2} ms (SEM)", report.p50_ms, report.mean_ms, report.sem_ms),
        ),
    ]
}
