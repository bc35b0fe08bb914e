//! Resolves every column and table a query touches against a catalog.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::{parse_sql, GoldSchemaError};
use crate::schema::{ColumnRef, Name, SchemaCatalog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionOp {
    Eq,
    In,
    Like,
}

/// Literal operand of a predicate, stored verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ConditionLiteral {
    Text(String),
    Number(String),
}

impl ConditionLiteral {
    pub fn as_str(&self) -> &str {
        match self {
            ConditionLiteral::Text(s) | ConditionLiteral::Number(s) => s,
        }
    }

    pub fn to_sql(&self) -> Expr {
        match self {
            ConditionLiteral::Text(s) => Expr::Literal(Literal::String(s.clone())),
            ConditionLiteral::Number(n) => Expr::Literal(Literal::Number(n.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionValue {
    pub column: ColumnRef,
    pub op: ConditionOp,
    pub value: ConditionLiteral,
}

/// Columns, tables and condition values selected for one question.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkedSchema {
    pub columns: BTreeSet<ColumnRef>,
    pub tables: BTreeSet<Name>,
    pub condition_values: BTreeSet<ConditionValue>,
}

impl LinkedSchema {
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty() && self.tables.is_empty()
    }

    /// Every column and table of the catalog.
    pub fn full_catalog(catalog: &SchemaCatalog) -> Self {
        Self {
            columns: catalog.column_refs().into_iter().collect(),
            tables: catalog.tables.iter().map(|t| t.name.clone()).collect(),
            condition_values: BTreeSet::new(),
        }
    }

    pub fn column_keys(&self) -> BTreeSet<String> {
        self.columns.iter().map(ColumnRef::canonical_key).collect()
    }

    pub fn insert_column(&mut self, column: ColumnRef) {
        self.tables.insert(column.table.clone());
        self.columns.insert(column);
    }
}

/// A reference that matches nothing in the catalog.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnresolvedRef {
    pub reference: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub linked: LinkedSchema,
    pub unresolved: Vec<UnresolvedRef>,
    /// Normalized projection items of the outermost query, one per item
    /// (wildcards expanded to column keys).
    pub projection: Vec<String>,
}

impl Extraction {
    pub fn unresolved_keys(&self) -> Vec<String> {
        self.unresolved.iter().map(|u| u.reference.clone()).collect()
    }
}

pub fn extract_schema_entities(ast: &Query, catalog: &SchemaCatalog) -> Extraction {
    let mut ex = Extractor { catalog, frames: Vec::new(), out: Extraction::default(), query_depth: 0 };
    ex.query(ast, None);
    ex.out.unresolved.sort();
    ex.out.unresolved.dedup();
    ex.out
}

/// Linked schema of a gold query; any unresolved reference is an error.
pub fn ground_truth_schema(gold_sql: &str, catalog: &SchemaCatalog) -> Result<LinkedSchema, GoldSchemaError> {
    let ast = parse_sql(gold_sql)?;
    let ex = extract_schema_entities(&ast, catalog);
    if !ex.unresolved.is_empty() {
        return Err(GoldSchemaError::Unresolved(ex.unresolved_keys()));
    }
    Ok(ex.linked)
}

#[derive(Debug, Clone)]
enum SourceKind {
    /// Index into `catalog.tables`.
    Base(usize),
    Missing(String),
    Derived(Vec<String>),
}

#[derive(Debug, Clone)]
struct Source {
    alias: Option<String>,
    name: String,
    kind: SourceKind,
}

#[derive(Debug, Default)]
struct Frame {
    sources: Vec<Source>,
    ctes: Vec<(String, Vec<String>)>,
    select_aliases: Vec<String>,
}

enum Resolution {
    Column(ColumnRef),
    /// Output column of a derived table or CTE.
    Derived,
    /// Reference to a projection alias.
    Alias,
    /// Unmatched double-quoted identifier, which SQLite reads as a string.
    StringLiteral(String),
    Unresolved(UnresolvedRef),
}

struct Extractor<'a> {
    catalog: &'a SchemaCatalog,
    frames: Vec<Frame>,
    out: Extraction,
    query_depth: usize,
}

impl<'a> Extractor<'a> {
    fn query(&mut self, q: &Query, outer_order: Option<&[OrderItem]>) -> Vec<String> {
        self.query_depth += 1;
        self.frames.push(Frame::default());
        for cte in &q.with {
            let cols = self.query(&cte.query, None);
            let cols = if cte.columns.is_empty() { cols } else { cte.columns.iter().map(|c| c.value.clone()).collect() };
            self.frames.last_mut().expect("frame").ctes.push((cte.name.value.to_lowercase(), cols));
        }
        let order = if q.order_by.is_empty() { outer_order } else { Some(q.order_by.as_slice()) };
        let outputs = self.set_expr(&q.body, order);
        if let Some(limit) = &q.limit {
            self.expr(&limit.count);
            if let Some(off) = &limit.offset {
                self.expr(off);
            }
        }
        self.frames.pop();
        self.query_depth -= 1;
        outputs
    }

    fn set_expr(&mut self, body: &SetExpr, order: Option<&[OrderItem]>) -> Vec<String> {
        match body {
            SetExpr::Select(s) => self.select(s, order),
            SetExpr::SetOp { left, right, .. } => {
                let out = self.set_expr(left, order);
                self.set_expr(right, None);
                out
            }
        }
    }

    fn select(&mut self, s: &Select, order: Option<&[OrderItem]>) -> Vec<String> {
        self.frames.push(Frame::default());
        for twj in &s.from {
            self.table_with_joins(twj);
        }
        let aliases: Vec<String> = s
            .projection
            .iter()
            .filter_map(|item| match item {
                SelectItem::Expr { alias: Some(a), .. } => Some(a.value.to_lowercase()),
                _ => None,
            })
            .collect();
        self.top().select_aliases = aliases;

        let mut outputs = Vec::new();
        let capture_projection = self.query_depth == 1;
        for item in &s.projection {
            match item {
                SelectItem::Wildcard => {
                    let sources = self.top().sources.clone();
                    for src in &sources {
                        self.expand_source(src, &mut outputs, capture_projection);
                    }
                }
                SelectItem::QualifiedWildcard(q) => {
                    let found = self.top().sources.iter().find(|src| source_matches(src, &q.value)).cloned();
                    match found {
                        Some(src) => self.expand_source(&src, &mut outputs, capture_projection),
                        None => self.push_unresolved(format!("{}.*", q.value), "no such table in scope"),
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    self.expr(expr);
                    if capture_projection {
                        let normalized = self.normalize(expr);
                        self.out.projection.push(normalized);
                    }
                    outputs.push(match (alias, expr.unnested()) {
                        (Some(a), _) => a.value.clone(),
                        (None, Expr::Column { name, .. }) => name.value.clone(),
                        (None, e) => e.to_string(),
                    });
                }
            }
        }
        if let Some(w) = &s.selection {
            self.expr(w);
        }
        for g in &s.group_by {
            self.expr(g);
        }
        if let Some(h) = &s.having {
            self.expr(h);
        }
        if let Some(items) = order {
            for item in items {
                self.expr(&item.expr);
            }
        }
        self.frames.pop();
        outputs
    }

    fn top(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("frame")
    }

    fn expand_source(&mut self, src: &Source, outputs: &mut Vec<String>, capture: bool) {
        match &src.kind {
            SourceKind::Base(idx) => {
                let table = &self.catalog.tables[*idx];
                for col in &table.columns {
                    let r = ColumnRef { table: table.name.clone(), column: col.name.clone() };
                    if capture {
                        self.out.projection.push(r.canonical_key());
                    }
                    outputs.push(col.name.as_str().to_string());
                    self.out.linked.insert_column(r);
                }
            }
            SourceKind::Derived(cols) => {
                if capture {
                    self.out.projection.extend(cols.iter().map(|c| format!("{}.{}", src.name, c.to_lowercase())));
                }
                outputs.extend(cols.iter().cloned());
            }
            SourceKind::Missing(_) => {}
        }
    }

    fn table_with_joins(&mut self, twj: &TableWithJoins) {
        self.table_factor(&twj.relation);
        for join in &twj.joins {
            let before = self.top().sources.len();
            self.table_factor(&join.relation);
            match &join.constraint {
                JoinConstraint::On(e) => self.expr(e),
                JoinConstraint::Using(cols) => {
                    for c in cols {
                        self.using_column(&c.value, before);
                    }
                }
                JoinConstraint::None if join.kind == JoinKind::Natural => {
                    let sources = self.top().sources.clone();
                    let right_cols: Vec<String> = sources[before..].iter().flat_map(|s| self.source_columns(s)).collect();
                    let left_cols: Vec<String> = sources[..before].iter().flat_map(|s| self.source_columns(s)).collect();
                    for c in right_cols {
                        if left_cols.iter().any(|l| l.eq_ignore_ascii_case(&c)) {
                            self.using_column(&c, before);
                        }
                    }
                }
                JoinConstraint::None => {}
            }
        }
    }

    fn source_columns(&self, src: &Source) -> Vec<String> {
        match &src.kind {
            SourceKind::Base(idx) => self.catalog.tables[*idx].columns.iter().map(|c| c.name.as_str().to_string()).collect(),
            SourceKind::Derived(cols) => cols.clone(),
            SourceKind::Missing(_) => Vec::new(),
        }
    }

    fn using_column(&mut self, column: &str, right_start: usize) {
        let sources = self.top().sources.clone();
        let mut found_left = false;
        let mut found_right = false;
        for (i, src) in sources.iter().enumerate() {
            let owns = match &src.kind {
                SourceKind::Base(idx) => self.catalog.tables[*idx].column(column).is_some(),
                SourceKind::Derived(cols) => cols.iter().any(|c| c.eq_ignore_ascii_case(column)),
                SourceKind::Missing(_) => true,
            };
            if !owns {
                continue;
            }
            if i < right_start {
                found_left = true;
            } else {
                found_right = true;
            }
            if let SourceKind::Base(idx) = &src.kind {
                let table = &self.catalog.tables[*idx];
                let col = table.column(column).expect("owner has column");
                self.out.linked.insert_column(ColumnRef { table: table.name.clone(), column: col.name.clone() });
            }
        }
        if !(found_left && found_right) {
            self.push_unresolved(column.to_string(), "USING column missing on one side");
        }
    }

    fn table_factor(&mut self, tf: &TableFactor) {
        match tf {
            TableFactor::Table { name, alias } => {
                let lc = name.value.to_lowercase();
                let cte = self.frames.iter().rev().find_map(|f| f.ctes.iter().find(|(n, _)| *n == lc).map(|(_, c)| c.clone()));
                let kind = if let Some(cols) = cte {
                    SourceKind::Derived(cols)
                } else if let Some(idx) = self.catalog.tables.iter().position(|t| t.name.as_str().eq_ignore_ascii_case(&name.value)) {
                    self.out.linked.tables.insert(self.catalog.tables[idx].name.clone());
                    SourceKind::Base(idx)
                } else {
                    self.push_unresolved(name.value.clone(), "no such table");
                    SourceKind::Missing(name.value.clone())
                };
                let display = match &kind {
                    SourceKind::Base(idx) => self.catalog.tables[*idx].name.as_str().to_string(),
                    _ => name.value.clone(),
                };
                self.top().sources.push(Source { alias: alias.as_ref().map(|a| a.value.to_lowercase()), name: display, kind });
            }
            TableFactor::Derived { subquery, alias } => {
                let cols = self.query(subquery, None);
                let name = alias.as_ref().map(|a| a.value.clone()).unwrap_or_default();
                self.top().sources.push(Source {
                    alias: alias.as_ref().map(|a| a.value.to_lowercase()),
                    name,
                    kind: SourceKind::Derived(cols),
                });
            }
            TableFactor::Nested(inner) => self.table_with_joins(inner),
        }
    }

    fn push_unresolved(&mut self, reference: String, reason: &str) {
        self.out.unresolved.push(UnresolvedRef { reference, reason: reason.to_string() });
    }

    fn lookup(&self, qualifier: Option<&Ident>, name: &Ident) -> Resolution {
        if let Some(q) = qualifier {
            for frame in self.frames.iter().rev() {
                let Some(src) = find_qualified(frame, &q.value) else { continue };
                return match &src.kind {
                    SourceKind::Base(idx) => {
                        let table = &self.catalog.tables[*idx];
                        match table.column(&name.value) {
                            Some(col) => Resolution::Column(ColumnRef { table: table.name.clone(), column: col.name.clone() }),
                            None => Resolution::Unresolved(UnresolvedRef {
                                reference: format!("{}.{}", table.name, name.value),
                                reason: "no such column".into(),
                            }),
                        }
                    }
                    SourceKind::Missing(t) => Resolution::Unresolved(UnresolvedRef {
                        reference: format!("{t}.{}", name.value),
                        reason: "no such table".into(),
                    }),
                    SourceKind::Derived(cols) => {
                        if cols.iter().any(|c| c.eq_ignore_ascii_case(&name.value)) || cols.is_empty() {
                            Resolution::Derived
                        } else {
                            Resolution::Unresolved(UnresolvedRef {
                                reference: format!("{}.{}", src.name, name.value),
                                reason: "no such column in derived table".into(),
                            })
                        }
                    }
                };
            }
            return Resolution::Unresolved(UnresolvedRef {
                reference: format!("{}.{}", q.value, name.value),
                reason: "table not in scope".into(),
            });
        }

        for frame in self.frames.iter().rev() {
            let mut owners: Vec<ColumnRef> = Vec::new();
            let mut derived = false;
            let mut missing = false;
            for src in &frame.sources {
                match &src.kind {
                    SourceKind::Base(idx) => {
                        let table = &self.catalog.tables[*idx];
                        if let Some(col) = table.column(&name.value) {
                            owners.push(ColumnRef { table: table.name.clone(), column: col.name.clone() });
                        }
                    }
                    SourceKind::Derived(cols) => derived |= cols.iter().any(|c| c.eq_ignore_ascii_case(&name.value)),
                    SourceKind::Missing(_) => missing = true,
                }
            }
            owners.dedup();
            if derived && owners.is_empty() {
                return Resolution::Derived;
            }
            match owners.len() {
                0 => {}
                1 if !derived => return Resolution::Column(owners.remove(0)),
                _ => {
                    return Resolution::Unresolved(UnresolvedRef {
                        reference: name.value.clone(),
                        reason: "ambiguous column".into(),
                    })
                }
            }
            if frame.select_aliases.iter().any(|a| a.eq_ignore_ascii_case(&name.value)) {
                return Resolution::Alias;
            }
            if missing {
                break;
            }
        }
        if name.quote == Some('"') {
            return Resolution::StringLiteral(name.value.clone());
        }
        let innermost = self.frames.iter().rev().find(|f| !f.sources.is_empty());
        let reference = match innermost.map(|f| f.sources.as_slice()) {
            Some([only]) => format!("{}.{}", only.name, name.value),
            _ => name.value.clone(),
        };
        Resolution::Unresolved(UnresolvedRef { reference, reason: "no such column".into() })
    }

    fn record(&mut self, resolution: Resolution) -> Option<ColumnRef> {
        match resolution {
            Resolution::Column(c) => {
                self.out.linked.insert_column(c.clone());
                Some(c)
            }
            Resolution::Unresolved(u) => {
                self.out.unresolved.push(u);
                None
            }
            Resolution::Derived | Resolution::Alias | Resolution::StringLiteral(_) => None,
        }
    }

    /// Column behind an operand, without recording anything.
    fn operand_column(&self, e: &Expr) -> Option<ColumnRef> {
        match e.unnested() {
            Expr::Column { qualifier, name } => match self.lookup(qualifier.as_ref(), name) {
                Resolution::Column(c) => Some(c),
                _ => None,
            },
            Expr::Collate { expr, .. } => self.operand_column(expr),
            _ => None,
        }
    }

    fn operand_literal(&self, e: &Expr) -> Option<ConditionLiteral> {
        match e.unnested() {
            Expr::Literal(Literal::String(s)) => Some(ConditionLiteral::Text(s.clone())),
            Expr::Literal(Literal::Number(n)) => Some(ConditionLiteral::Number(n.clone())),
            Expr::Unary { op: UnaryOp::Neg, expr } => match expr.unnested() {
                Expr::Literal(Literal::Number(n)) => Some(ConditionLiteral::Number(format!("-{n}"))),
                _ => None,
            },
            Expr::Column { qualifier: None, name } if name.quote == Some('"') => match self.lookup(None, name) {
                Resolution::StringLiteral(s) => Some(ConditionLiteral::Text(s)),
                _ => None,
            },
            _ => None,
        }
    }

    fn condition(&mut self, column: &Expr, op: ConditionOp, literal: &Expr) {
        if let (Some(c), Some(v)) = (self.operand_column(column), self.operand_literal(literal)) {
            self.out.linked.condition_values.insert(ConditionValue { column: c, op, value: v });
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Column { qualifier, name } => {
                let r = self.lookup(qualifier.as_ref(), name);
                self.record(r);
            }
            Expr::Literal(_) | Expr::Parameter(_) => {}
            Expr::Unary { expr, .. } => self.expr(expr),
            Expr::Binary { left, op, right } => {
                if op.is_equality() {
                    self.condition(left, ConditionOp::Eq, right);
                    self.condition(right, ConditionOp::Eq, left);
                }
                self.expr(left);
                self.expr(right);
            }
            Expr::Like { expr, pattern, escape, .. } => {
                self.condition(expr, ConditionOp::Like, pattern);
                self.expr(expr);
                self.expr(pattern);
                if let Some(esc) = escape {
                    self.expr(esc);
                }
            }
            Expr::InList { expr, list, .. } => {
                for item in list {
                    self.condition(expr, ConditionOp::In, item);
                }
                self.expr(expr);
                for item in list {
                    self.expr(item);
                }
            }
            Expr::InSubquery { expr, subquery, .. } => {
                self.expr(expr);
                self.query(subquery, None);
            }
            Expr::Between { expr, low, high, .. } => {
                self.expr(expr);
                self.expr(low);
                self.expr(high);
            }
            Expr::IsNull { expr, .. } => self.expr(expr),
            Expr::Function { args, over, .. } => {
                for a in args {
                    self.expr(a);
                }
                if let Some(w) = over {
                    for p in &w.partition_by {
                        self.expr(p);
                    }
                    for o in &w.order_by {
                        self.expr(&o.expr);
                    }
                }
            }
            Expr::Case { operand, branches, else_result } => {
                if let Some(op) = operand {
                    self.expr(op);
                    for (when, _) in branches {
                        self.condition(op, ConditionOp::Eq, when);
                    }
                }
                for (when, then) in branches {
                    self.expr(when);
                    self.expr(then);
                }
                if let Some(e) = else_result {
                    self.expr(e);
                }
            }
            Expr::Cast { expr, .. } => self.expr(expr),
            Expr::Subquery(q) => {
                self.query(q, None);
            }
            Expr::Exists { subquery, .. } => {
                self.query(subquery, None);
            }
            Expr::Nested(inner) => self.expr(inner),
            Expr::Collate { expr, .. } => self.expr(expr),
        }
    }

    /// Projection item with columns rewritten to canonical keys and
    /// function names uppercased.
    fn normalize(&self, e: &Expr) -> String {
        let rewritten = self.rewrite(e.unnested());
        match rewritten {
            Expr::Column { qualifier: Some(q), name } => format!("{}.{}", q.value, name.value),
            other => other.to_string(),
        }
    }

    fn rewrite(&self, e: &Expr) -> Expr {
        let r = |x: &Expr| Box::new(self.rewrite(x));
        match e {
            Expr::Column { qualifier, name } => match self.lookup(qualifier.as_ref(), name) {
                Resolution::Column(c) => Expr::Column {
                    qualifier: Some(Ident::new(c.table.canonical())),
                    name: Ident::new(c.column.canonical()),
                },
                _ => Expr::Column { qualifier: None, name: Ident::new(name.value.to_lowercase()) },
            },
            Expr::Unary { op, expr } => Expr::Unary { op: *op, expr: r(expr) },
            Expr::Binary { left, op, right } => Expr::Binary { left: r(left), op: *op, right: r(right) },
            Expr::Function { name, distinct, args, star, over } => Expr::Function {
                name: Ident::new(name.value.to_uppercase()),
                distinct: *distinct,
                args: args.iter().map(|a| self.rewrite(a)).collect(),
                star: *star,
                over: over.clone(),
            },
            Expr::Case { operand, branches, else_result } => Expr::Case {
                operand: operand.as_ref().map(|o| r(o)),
                branches: branches.iter().map(|(w, t)| (self.rewrite(w), self.rewrite(t))).collect(),
                else_result: else_result.as_ref().map(|x| r(x)),
            },
            Expr::Cast { expr, type_name } => Expr::Cast { expr: r(expr), type_name: type_name.to_uppercase() },
            Expr::Nested(inner) => Expr::Nested(r(inner)),
            other => other.clone(),
        }
    }
}

fn source_matches(src: &Source, qualifier: &str) -> bool {
    match &src.alias {
        Some(a) => a.eq_ignore_ascii_case(qualifier),
        None => src.name.eq_ignore_ascii_case(qualifier),
    }
}

fn find_qualified<'f>(frame: &'f Frame, qualifier: &str) -> Option<&'f Source> {
    frame
        .sources
        .iter()
        .find(|s| source_matches(s, qualifier))
        .or_else(|| frame.sources.iter().find(|s| s.name.eq_ignore_ascii_case(qualifier)))
}
