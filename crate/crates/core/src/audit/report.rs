use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detect::*;
use crate::schema::SchemaCatalog;
use crate::sql::{extract_schema_entities, parse_sql};

/// One predicted query with its gold counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditPair {
    pub example_id: String,
    pub db_id: String,
    /// `None` when the system produced no SQL for the example.
    pub pred_sql: Option<String>,
    pub gold_sql: String,
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub whitelist: FunctionWhitelist,
    pub clauses: Vec<AbusableClause>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { whitelist: FunctionWhitelist::sqlite().clone(), clauses: vec![AbusableClause::GroupBy] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExampleAudit {
    pub example_id: String,
    /// Category → justification.
    pub labels: BTreeMap<Category, String>,
    /// Detectors that could not run, and why.
    pub warnings: Vec<String>,
    /// Set when the pair could not be audited at all.
    pub error: Option<String>,
}

impl ExampleAudit {
    pub fn has(&self, c: Category) -> bool {
        self.labels.contains_key(&c)
    }
}

pub struct AuditContext<'a> {
    pub catalogs: &'a BTreeMap<String, SchemaCatalog>,
    pub db_files: &'a BTreeMap<String, PathBuf>,
    pub config: &'a AuditConfig,
}

/// Runs all six detectors on one pair.
pub fn audit_pair(pair: &AuditPair, ctx: &AuditContext<'_>) -> ExampleAudit {
    let mut out = ExampleAudit { example_id: pair.example_id.clone(), ..Default::default() };
    let Some(pred_sql) = pair.pred_sql.as_deref() else {
        out.error = Some("no predicted SQL".into());
        return out;
    };
    if let Some(e) = detect_mathematical_delusion(pred_sql, &ctx.config.whitelist) {
        out.labels.insert(Category::MathematicalDelusion, e);
    }
    let Some(catalog) = ctx.catalogs.get(&pair.db_id) else {
        out.error = Some(format!("no schema for database `{}`", pair.db_id));
        return out;
    };
    let gold_ast = match parse_sql(&pair.gold_sql) {
        Ok(a) => a,
        Err(e) => {
            out.error = Some(format!("gold SQL does not parse: {e}"));
            return out;
        }
    };
    let pred_ast = match parse_sql(pred_sql) {
        Ok(a) => a,
        Err(e) => {
            out.warnings.push(format!("predicted SQL does not parse ({e}); only the function check ran"));
            return out;
        }
    };
    let gold = extract_schema_entities(&gold_ast, catalog);
    let pred = extract_schema_entities(&pred_ast, catalog);
    if let Some(e) = detect_schema_contradiction(&pred) {
        out.labels.insert(Category::SchemaContradiction, e);
    }
    if let Some(e) = detect_attribute_overanalysis(&pred, &gold) {
        out.labels.insert(Category::AttributeOveranalysis, e);
    }
    if let Some(e) = detect_join_redundancy(&pred, &gold) {
        out.labels.insert(Category::JoinRedundancy, e);
    }
    if let Some(e) = detect_clause_abuse(&pred_ast, &gold_ast, &ctx.config.clauses) {
        out.labels.insert(Category::ClauseAbuse, e);
    }
    let probed = ctx
        .db_files
        .get(&pair.db_id)
        .ok_or_else(|| format!("no database file for `{}`", pair.db_id))
        .and_then(|path| ValueProbe::open(path))
        .and_then(|mut probe| detect_value_misrepresentation(&pred, &gold, &mut probe));
    match probed {
        Ok(Some(e)) => {
            out.labels.insert(Category::ValueMisrepresentation, e);
        }
        Ok(None) => {}
        Err(e) => {
            log::warn!("example {}: value probe skipped: {e}", pair.example_id);
            out.warnings.push(format!("value check skipped: {e}"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub category: Category,
    pub family: Family,
    pub count: usize,
    /// Percent of examples with at least one label in the same family.
    pub share_of_family: f64,
    /// Percent of examples with at least one label of any kind.
    pub share_of_flagged: f64,
    /// Percent of all audited examples.
    pub share_of_audited: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub audited: usize,
    pub failed: usize,
    pub flagged: usize,
    pub flagged_by_family: BTreeMap<Family, usize>,
    pub categories: Vec<CategoryStat>,
    pub examples: Vec<ExampleAudit>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

impl AuditReport {
    pub fn from_examples(examples: Vec<ExampleAudit>) -> Self {
        let audited = examples.iter().filter(|e| e.error.is_none()).count();
        let flagged = examples.iter().filter(|e| !e.labels.is_empty()).count();
        let mut flagged_by_family = BTreeMap::new();
        for fam in [Family::SchemaBased, Family::LogicBased] {
            let n = examples.iter().filter(|e| e.labels.keys().any(|c| c.family() == fam)).count();
            flagged_by_family.insert(fam, n);
        }
        let categories = Category::ALL
            .iter()
            .map(|&c| {
                let count = examples.iter().filter(|e| e.has(c)).count();
                CategoryStat {
                    category: c,
                    family: c.family(),
                    count,
                    share_of_family: pct(count, flagged_by_family[&c.family()]),
                    share_of_flagged: pct(count, flagged),
                    share_of_audited: pct(count, audited),
                }
            })
            .collect();
        Self { audited, failed: examples.len() - audited, flagged, flagged_by_family, categories, examples }
    }

    pub fn count(&self, c: Category) -> usize {
        self.categories.iter().find(|s| s.category == c).map_or(0, |s| s.count)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>10} {:>10} {:>10}",
            "category", "count", "family %", "flagged %", "audited %"
        );
        for s in &self.categories {
            let _ = writeln!(
                out,
                "{:<24} {:>6} {:>10.1} {:>10.1} {:>10.1}",
                s.category.label(),
                s.count,
                s.share_of_family,
                s.share_of_flagged,
                s.share_of_audited
            );
        }
        let _ = writeln!(out, "audited {}  flagged {}  not audited {}", self.audited, self.flagged, self.failed);
        out
    }
}

/// Audits every pair in parallel; order of `examples` follows `pairs`.
pub fn audit_corpus(pairs: &[AuditPair], ctx: &AuditContext<'_>) -> AuditReport {
    let examples: Vec<ExampleAudit> = pairs.par_iter().map(|p| audit_pair(p, ctx)).collect();
    AuditReport::from_examples(examples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDelta {
    pub category: Category,
    pub baseline: usize,
    pub candidate: usize,
    /// `candidate - baseline`
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditComparison {
    pub baseline: AuditReport,
    pub candidate: AuditReport,
    pub deltas: Vec<CategoryDelta>,
}

pub fn compare_reports(baseline: AuditReport, candidate: AuditReport) -> AuditComparison {
    let deltas = Category::ALL
        .iter()
        .map(|&c| {
            let (b, n) = (baseline.count(c), candidate.count(c));
            CategoryDelta { category: c, baseline: b, candidate: n, delta: n as i64 - b as i64 }
        })
        .collect();
    AuditComparison { baseline, candidate, deltas }
}

impl AuditComparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<24} {:>9} {:>9} {:>7}\n", "category", "baseline", "candidate", "delta");
        for d in &self.deltas {
            let _ = writeln!(out, "{:<24} {:>9} {:>9} {:>+7}", d.category.label(), d.baseline, d.candidate, d.delta);
        }
        out
    }
}
