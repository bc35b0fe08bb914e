//! Schema-linking recall, precision and F1.
//!
//! For example n with gold set S and predicted set Ŝ:
//! the indicator is 1 when Ŝ ⊇ S; p_n = |Ŝ ∩ S| / |Ŝ|, taken as 0 when Ŝ is
//! empty. Recall is the mean indicator, precision the mean p_n, and F1 their
//! harmonic mean (0 when both are 0).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::sql::LinkedSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleLinkScore {
    pub indicator: u8,
    pub precision: f64,
    /// |S|
    pub gold_len: usize,
    /// |Ŝ|
    pub pred_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaLinkingScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub n_examples: usize,
    pub per_example: Vec<ExampleLinkScore>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// What counts as an element of S and Ŝ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkScope {
    /// Also count table names alongside columns. Off by default.
    pub include_tables: bool,
}

/// Keys of the elements scored for one linked schema.
pub fn scored_keys(schema: &LinkedSchema, scope: LinkScope) -> BTreeSet<String> {
    let mut keys = schema.column_keys();
    if scope.include_tables {
        // Table names never contain the `table.column` separator after
        // canonicalisation, so a prefix keeps the two kinds apart.
        keys.extend(schema.tables.iter().map(|t| format!("table:{}", t.canonical())));
    }
    keys
}

pub fn score_example(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> ExampleLinkScore {
    let hits = pred.intersection(gold).count();
    ExampleLinkScore {
        indicator: u8::from(hits == gold.len()),
        precision: if pred.is_empty() { 0.0 } else { hits as f64 / pred.len() as f64 },
        gold_len: gold.len(),
        pred_len: pred.len(),
    }
}

/// Scores `(predicted, gold)` key-set pairs.
pub fn score_key_sets(pairs: &[(BTreeSet<String>, BTreeSet<String>)]) -> Result<SchemaLinkingScore, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Precondition("no examples to score".into()));
    }
    let per_example: Vec<ExampleLinkScore> = pairs.iter().map(|(p, g)| score_example(p, g)).collect();
    let n = per_example.len() as f64;
    let recall = per_example.iter().map(|e| f64::from(e.indicator)).sum::<f64>() / n;
    let precision = per_example.iter().map(|e| e.precision).sum::<f64>() / n;
    Ok(SchemaLinkingScore { recall, precision, f1: f1(precision, recall), n_examples: pairs.len(), per_example })
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Scores `(Ŝ_n, S_n)` pairs over column keys, or columns and tables.
pub fn schema_linking_scores(
    pairs: &[(LinkedSchema, LinkedSchema)],
    scope: LinkScope,
) -> Result<SchemaLinkingScore, MetricError> {
    let keyed: Vec<_> = pairs.iter().map(|(p, g)| (scored_keys(p, scope), scored_keys(g, scope))).collect();
    score_key_sets(&keyed)
}
