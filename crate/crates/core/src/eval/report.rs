use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::exec::ExVerdict;
use super::metrics::SchemaLinkingScore;
use crate::dataset::Difficulty;

/// Outcome of one example as fed to [`corpus_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub example_id: String,
    pub difficulty: Difficulty,
    pub verdict: ExVerdict,
    /// Why the example is wrong or was skipped, if known.
    pub message: Option<String>,
    /// Schema linking fell back to the full catalog.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub ex: f64,
    pub correct: usize,
    pub total: usize,
}

impl BucketScore {
    fn new(correct: usize, total: usize) -> Self {
        let ex = if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 };
        Self { ex, correct, total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingSummary {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub n_examples: usize,
}

impl From<&SchemaLinkingScore> for LinkingSummary {
    fn from(s: &SchemaLinkingScore) -> Self {
        Self { recall: s.recall, precision: s.precision, f1: s.f1, n_examples: s.n_examples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportError {
    pub example_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percentage over gold-valid examples.
    pub total_ex: f64,
    pub correct: usize,
    pub scored: usize,
    pub gold_invalid: usize,
    pub fallbacks: usize,
    pub by_difficulty: BTreeMap<Difficulty, BucketScore>,
    pub schema_linking: Option<LinkingSummary>,
    pub errors: Vec<ReportError>,
}

/// EX per difficulty and overall. Examples whose gold query fails are
/// excluded from every denominator and listed under `errors`.
pub fn corpus_report(results: &[ExampleResult], linking: Option<&SchemaLinkingScore>) -> EvalReport {
    let mut buckets: BTreeMap<Difficulty, (usize, usize)> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut gold_invalid = 0;
    for r in results {
        if let Some(m) = &r.message {
            errors.push(ReportError { example_id: r.example_id.clone(), message: m.clone() });
        }
        if r.verdict == ExVerdict::GoldInvalid {
            gold_invalid += 1;
            continue;
        }
        let b = buckets.entry(r.difficulty).or_default();
        b.1 += 1;
        if r.verdict == ExVerdict::Correct {
            b.0 += 1;
        }
    }
    let correct = buckets.values().map(|b| b.0).sum();
    let scored = buckets.values().map(|b| b.1).sum();
    EvalReport {
        total_ex: BucketScore::new(correct, scored).ex,
        correct,
        scored,
        gold_invalid,
        fallbacks: results.iter().filter(|r| r.fallback).count(),
        by_difficulty: buckets.into_iter().map(|(d, (c, t))| (d, BucketScore::new(c, t))).collect(),
        schema_linking: linking.map(LinkingSummary::from),
        errors,
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, one row per difficulty then the total.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<[String; 3]> = vec![["difficulty".into(), "count".into(), "EX (%)".into()]];
        for (d, b) in &self.by_difficulty {
            rows.push([d.to_string(), b.total.to_string(), format!("{:.1}", b.ex)]);
        }
        rows.push(["total".into(), self.scored.to_string(), format!("{:.1}", self.total_ex)]);
        let w0 = rows.iter().map(|r| r[0].len()).max().unwrap_or(0);
        let w1 = rows.iter().map(|r| r[1].len()).max().unwrap_or(0);
        let w2 = rows.iter().map(|r| r[2].len()).max().unwrap_or(0);
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", r[0], r[1], r[2]);
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(w0 + w1 + w2 + 4));
            }
        }
        if let Some(s) = &self.schema_linking {
            let _ = writeln!(
                out,
                "\nschema linking over {} examples: recall {:.4}  precision {:.4}  F1 {:.4}",
                s.n_examples, s.recall, s.precision, s.f1
            );
        }
        let _ = writeln!(out, "gold invalid: {}  linking fallbacks: {}", self.gold_invalid, self.fallbacks);
        out
    }
}
