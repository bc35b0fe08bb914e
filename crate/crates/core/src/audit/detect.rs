//! Structural rules for the six hallucination categories.
//!
//! Each rule is a necessary condition, not a judgment: it fires on a visible
//! symptom in the predicted SQL compared with the gold SQL.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use rusqlite::{Connection, OpenFlags, OptionalExtension};
use serde::{Deserialize, Serialize};

use crate::schema::ColumnRef;
use crate::sql::ast::Query;
use crate::sql::lexer::{tokenize, TokenKind};
use crate::sql::{ConditionLiteral, ConditionOp, Extraction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SchemaContradiction,
    AttributeOveranalysis,
    ValueMisrepresentation,
    JoinRedundancy,
    ClauseAbuse,
    MathematicalDelusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SchemaBased,
    LogicBased,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::SchemaContradiction,
        Category::AttributeOveranalysis,
        Category::ValueMisrepresentation,
        Category::JoinRedundancy,
        Category::ClauseAbuse,
        Category::MathematicalDelusion,
    ];

    pub fn family(self) -> Family {
        match self {
            Category::SchemaContradiction | Category::AttributeOveranalysis | Category::ValueMisrepresentation => {
                Family::SchemaBased
            }
            _ => Family::LogicBased,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::SchemaContradiction => "schema contradiction",
            Category::AttributeOveranalysis => "attribute overanalysis",
            Category::ValueMisrepresentation => "value misrepresentation",
            Category::JoinRedundancy => "join redundancy",
            Category::ClauseAbuse => "clause abuse",
            Category::MathematicalDelusion => "mathematical delusion",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Fires when the prediction references something the catalog lacks.
pub fn detect_schema_contradiction(pred: &Extraction) -> Option<String> {
    if pred.unresolved.is_empty() {
        return None;
    }
    let refs: Vec<String> = pred.unresolved.iter().map(|u| format!("{} ({})", u.reference, u.reason)).collect();
    Some(format!("unresolved references: {}", refs.join(", ")))
}

/// Fires when the predicted projection strictly contains the gold one.
pub fn detect_attribute_overanalysis(pred: &Extraction, gold: &Extraction) -> Option<String> {
    let p: BTreeSet<&String> = pred.projection.iter().collect();
    let g: BTreeSet<&String> = gold.projection.iter().collect();
    if p.len() > g.len() && p.is_superset(&g) {
        let extra: Vec<&str> = p.difference(&g).map(|s| s.as_str()).collect();
        Some(format!("extra projected items: {}", extra.join(", ")))
    } else {
        None
    }
}

/// Fires when the predicted tables strictly contain the gold tables.
pub fn detect_join_redundancy(pred: &Extraction, gold: &Extraction) -> Option<String> {
    let p = &pred.linked.tables;
    let g = &gold.linked.tables;
    if p.len() > g.len() && p.is_superset(g) {
        let extra: Vec<&str> = p.difference(g).map(|t| t.as_str()).collect();
        Some(format!("extra joined tables: {}", extra.join(", ")))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbusableClause {
    GroupBy,
    Having,
    Distinct,
}

impl AbusableClause {
    fn present(self, q: &Query) -> bool {
        q.selects().iter().any(|s| match self {
            AbusableClause::GroupBy => !s.group_by.is_empty(),
            AbusableClause::Having => s.having.is_some(),
            AbusableClause::Distinct => s.distinct,
        })
    }

    fn sql(self) -> &'static str {
        match self {
            AbusableClause::GroupBy => "GROUP BY",
            AbusableClause::Having => "HAVING",
            AbusableClause::Distinct => "DISTINCT",
        }
    }
}

/// Fires when the prediction adds one of `clauses` that gold lacks, while
/// either query orders or limits its result.
pub fn detect_clause_abuse(pred: &Query, gold: &Query, clauses: &[AbusableClause]) -> Option<String> {
    let ordered = |q: &Query| !q.order_by.is_empty() || q.limit.is_some();
    if !(ordered(pred) || ordered(gold)) {
        return None;
    }
    let added: Vec<&str> = clauses.iter().filter(|c| c.present(pred) && !c.present(gold)).map(|c| c.sql()).collect();
    (!added.is_empty()).then(|| format!("{} added where the gold query has none, next to ORDER BY/LIMIT", added.join(", ")))
}

/// Function names the target engine knows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionWhitelist {
    names: BTreeSet<String>,
}

const SHIPPED_WHITELIST: &str = include_str!("../../data/sqlite_functions.txt");

impl FunctionWhitelist {
    pub fn parse(text: &str) -> Self {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_ascii_lowercase)
            .collect();
        Self { names }
    }

    pub fn sqlite() -> &'static Self {
        static W: OnceLock<FunctionWhitelist> = OnceLock::new();
        W.get_or_init(|| Self::parse(SHIPPED_WHITELIST))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(&name.to_ascii_lowercase())
    }
}

/// Names used in call position: a bare word directly followed by `(`.
/// Works on raw text so that unparsable predictions are covered too.
pub fn called_functions(sql: &str) -> Vec<String> {
    match tokenize(sql) {
        Ok(tokens) => {
            let mut out = Vec::new();
            for (i, t) in tokens.iter().enumerate() {
                let TokenKind::Word { value, quote: None } = &t.kind else { continue };
                if !matches!(tokens.get(i + 1).map(|n| &n.kind), Some(TokenKind::LParen)) {
                    continue;
                }
                let prev = i.checked_sub(1).map(|p| &tokens[p].kind);
                // `CAST(x AS VARCHAR(10))` and `WITH c(x) AS (...)`
                if prev.is_some_and(|p| p.is_keyword("AS") || p.is_keyword("WITH") || matches!(p, TokenKind::Dot)) {
                    continue;
                }
                if crate::sql::is_reserved(value) && !value.eq_ignore_ascii_case("CAST") {
                    continue;
                }
                if closes_before_as(&tokens, i + 1) {
                    continue;
                }
                out.push(value.clone());
            }
            out
        }
        Err(_) => {
            static CALL: OnceLock<Regex> = OnceLock::new();
            static STRINGS: OnceLock<Regex> = OnceLock::new();
            let strings = STRINGS.get_or_init(|| Regex::new(r#"'(?:[^']|'')*'|"[^"]*"|`[^`]*`"#).expect("valid regex"));
            let call = CALL.get_or_init(|| Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\s*\(").expect("valid regex"));
            let bare = strings.replace_all(sql, "''");
            call.captures_iter(&bare)
                .map(|c| c[1].to_string())
                .filter(|w| !crate::sql::is_reserved(w) || w.eq_ignore_ascii_case("CAST"))
                .collect()
        }
    }
}

/// `name(cols) AS (` inside a WITH list.
fn closes_before_as(tokens: &[crate::sql::lexer::Token], open: usize) -> bool {
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(open) {
        match t.kind {
            TokenKind::LParen => depth += 1,
            TokenKind::RParen => {
                depth -= 1;
                if depth == 0 {
                    return tokens.get(j + 1).is_some_and(|n| n.kind.is_keyword("AS"))
                        && tokens.get(j + 2).is_some_and(|n| matches!(n.kind, TokenKind::LParen));
                }
            }
            _ => {}
        }
    }
    false
}

/// Fires on any called function outside the whitelist.
pub fn detect_mathematical_delusion(pred_sql: &str, whitelist: &FunctionWhitelist) -> Option<String> {
    let unknown: BTreeSet<String> =
        called_functions(pred_sql).into_iter().filter(|f| !whitelist.contains(f)).map(|f| f.to_ascii_uppercase()).collect();
    (!unknown.is_empty()).then(|| format!("functions unknown to the engine: {}", unknown.into_iter().collect::<Vec<_>>().join(", ")))
}

/// Above this many distinct values a column is probed per literal.
pub const DISTINCT_PROBE_CAP: u64 = 10_000;

/// Looks up whether literals occur in a column, caching per column.
pub struct ValueProbe {
    conn: Connection,
    cache: BTreeMap<String, Option<BTreeSet<String>>>,
}

impl ValueProbe {
    pub fn open(db_file: &Path) -> Result<Self, String> {
        if !db_file.is_file() {
            return Err(format!("database file {} not found", db_file.display()));
        }
        let conn = Connection::open_with_flags(db_file, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
            .map_err(|e| e.to_string())?;
        Ok(Self { conn, cache: BTreeMap::new() })
    }

    fn quoted(name: &str) -> String {
        format!("\"{}\"", name.replace('"', "\"\""))
    }

    /// Whether `value` is stored in `column`, compared as text.
    pub fn contains(&mut self, column: &ColumnRef, value: &str) -> Result<bool, String> {
        let key = column.canonical_key();
        let table = Self::quoted(column.table.as_str());
        let col = Self::quoted(column.column.as_str());
        if !self.cache.contains_key(&key) {
            let distinct: u64 = self
                .conn
                .query_row(&format!("SELECT COUNT(DISTINCT {col}) FROM {table}"), [], |r| r.get(0))
                .map_err(|e| e.to_string())?;
            let values = if distinct <= DISTINCT_PROBE_CAP {
                let mut stmt = self
                    .conn
                    .prepare(&format!("SELECT DISTINCT CAST({col} AS TEXT) FROM {table} WHERE {col} IS NOT NULL"))
                    .map_err(|e| e.to_string())?;
                let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(|e| e.to_string())?;
                Some(rows.collect::<Result<BTreeSet<_>, _>>().map_err(|e| e.to_string())?)
            } else {
                None
            };
            self.cache.insert(key.clone(), values);
        }
        match &self.cache[&key] {
            Some(values) => Ok(values.contains(value)),
            None => self
                .conn
                .query_row(&format!("SELECT 1 FROM {table} WHERE CAST({col} AS TEXT) = ?1 LIMIT 1"), [value], |_| Ok(()))
                .optional()
                .map(|r| r.is_some())
                .map_err(|e| e.to_string()),
        }
    }
}

/// Text literals compared by equality or IN, grouped by column.
fn equality_literals(ex: &Extraction) -> BTreeMap<String, (ColumnRef, BTreeSet<String>)> {
    let mut out: BTreeMap<String, (ColumnRef, BTreeSet<String>)> = BTreeMap::new();
    for cv in &ex.linked.condition_values {
        if let (ConditionOp::Eq | ConditionOp::In, ConditionLiteral::Text(v)) = (cv.op, &cv.value) {
            out.entry(cv.column.canonical_key())
                .or_insert_with(|| (cv.column.clone(), BTreeSet::new()))
                .1
                .insert(v.clone());
        }
    }
    out
}

/// Fires when a predicted text literal on column c is absent from the
/// database while the gold literal on c is present.
pub fn detect_value_misrepresentation(
    pred: &Extraction,
    gold: &Extraction,
    probe: &mut ValueProbe,
) -> Result<Option<String>, String> {
    let gold_lits = equality_literals(gold);
    let mut findings = Vec::new();
    for (key, (column, pred_values)) in equality_literals(pred) {
        let Some((_, gold_values)) = gold_lits.get(&key) else { continue };
        let mut gold_present = Vec::new();
        for g in gold_values {
            if probe.contains(&column, g)? {
                gold_present.push(g.as_str());
            }
        }
        if gold_present.is_empty() {
            continue;
        }
        for p in pred_values.difference(gold_values) {
            if !probe.contains(&column, p)? {
                findings.push(format!("{column} = '{p}' matches no stored value (gold uses '{}')", gold_present.join("', '")));
            }
        }
    }
    Ok((!findings.is_empty()).then(|| findings.join("; ")))
}
