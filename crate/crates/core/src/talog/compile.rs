//! Plan to SQL.
//!
//! Each binding is a frame state: filters, grouping, ordering, limit and an
//! optional projection. `res` is rendered as one SELECT whose FROM clause
//! joins exactly the tables its lineage touches. An aggregate over some other
//! frame becomes a scalar subquery that repeats that frame's FROM and WHERE.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::join::{infer_join_path, JoinInferenceError, JoinPath};
use super::plan::*;
use super::validate::{validate_plan, Severity};
use crate::schema::{JoinGraph, Name, SchemaCatalog};
use crate::sql::ast::{
    BinaryOp, Expr, Join, JoinConstraint, JoinKind, Limit, LikeKind, Literal, OrderItem, Query, Select, SelectItem,
    SortDirection, TableFactor, TableWithJoins, UnaryOp,
};
use crate::sql::ast::Ident;
use crate::sql::{parse_sql, LinkedSchema, SqlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledQuery {
    pub sql: String,
    pub join_path: JoinPath,
}

impl CompiledQuery {
    pub fn tables(&self) -> Vec<Name> {
        self.join_path.tables()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("step {step}: {message}")]
    Unsupported { step: usize, message: String },
    #[error(transparent)]
    Join(#[from] JoinInferenceError),
    #[error("compiled SQL does not reparse: {0}")]
    Reparse(SqlError),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct FrameState {
    wheres: Vec<Expr>,
    group_by: Vec<Expr>,
    havings: Vec<Expr>,
    order: Vec<OrderItem>,
    limit: Option<u64>,
    projection: Option<Vec<Expr>>,
    /// Tables named by filters and grouping.
    core_tables: BTreeSet<Name>,
    /// Every table the frame's own clauses touch.
    tables: BTreeSet<Name>,
}

impl FrameState {
    fn same_core(&self, other: &FrameState) -> bool {
        self.wheres == other.wheres && self.group_by == other.group_by && self.havings == other.havings
    }

    fn grouped(&self) -> bool {
        !self.group_by.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Clause {
    /// Row filter before grouping; aggregates must be subqueries.
    Where,
    /// Group filter; aggregates over the same frame are inline.
    Having,
    /// Projection and ordering.
    Output,
}

struct Compiler<'a> {
    catalog: &'a SchemaCatalog,
    graph: &'a JoinGraph,
    frames: BTreeMap<String, FrameState>,
    all_tables: BTreeSet<Name>,
    step: usize,
}

pub fn compile_plan(plan: &SymbolicPlan, catalog: &SchemaCatalog, graph: &JoinGraph) -> Result<CompiledQuery, CompileError> {
    let issues: Vec<String> = validate_plan(plan, &LinkedSchema::full_catalog(catalog), catalog)
        .into_iter()
        .filter(|i| i.severity == Severity::Error)
        .map(|i| format!("step {}: {}", i.step, i.message))
        .collect();
    if !issues.is_empty() {
        return Err(CompileError::Invalid(issues.join("; ")));
    }

    let mut all_tables = BTreeSet::new();
    for step in &plan.steps {
        for op in &step.ops {
            op.walk(&mut |e| {
                if let PlanExpr::Column(c) = e {
                    all_tables.insert(catalog.table(c.table.as_str()).expect("validated").name.clone());
                }
            });
        }
    }
    let mut c = Compiler { catalog, graph, frames: BTreeMap::new(), all_tables, step: 0 };
    c.frames.insert(ROOT_FRAME.to_string(), FrameState::default());

    for (i, step) in plan.steps.iter().enumerate() {
        c.step = i + 1;
        let mut state = c.frames[&step.source].clone();
        if let Some(base) = rebase_target(plan, i) {
            state = c.frames[base].clone();
        }
        for op in &step.ops {
            c.apply(&mut state, op)?;
        }
        c.frames.insert(step.binding.clone(), state);
    }

    let result = &c.frames[RESULT_FRAME];
    let Some(projection) = result.projection.clone() else {
        return Err(CompileError::Invalid("`res` never selects or counts anything".into()));
    };
    let tables = if result.tables.is_empty() { c.all_tables.clone() } else { result.tables.clone() };
    if tables.is_empty() {
        return Err(CompileError::Invalid("plan references no tables".into()));
    }
    let join_path = infer_join_path(&tables, graph)?;
    let select = Select {
        distinct: false,
        projection: projection.into_iter().map(|expr| SelectItem::Expr { expr, alias: None }).collect(),
        from: vec![c.join_clause(&join_path)],
        selection: conjoin(&result.wheres),
        group_by: result.group_by.clone(),
        having: conjoin(&result.havings),
    };
    let mut query = Query::from_select(select);
    query.order_by = result.order.clone();
    query.limit = result.limit.map(|n| Limit { count: Expr::Literal(Literal::Number(n.to_string())), offset: None });
    let sql = query.to_string();
    parse_sql(&sql).map_err(CompileError::Reparse)?;
    Ok(CompiledQuery { sql, join_path })
}

/// `res = df.select(...)` whose items aggregate over named frames is read
/// against the most recently defined of those frames, so that
/// `df.select(cast(df2.count(), real) / df1.count())` counts df2's rows
/// inline and df1's rows in a subquery.
fn rebase_target(plan: &SymbolicPlan, index: usize) -> Option<&str> {
    let step = &plan.steps[index];
    if step.binding != RESULT_FRAME || step.source != ROOT_FRAME {
        return None;
    }
    let [StepOp::Select(items)] = step.ops.as_slice() else { return None };
    let mut referenced = BTreeSet::new();
    for item in items {
        item.walk(&mut |e| {
            if let PlanExpr::Aggregate { frame: Some(f), .. } = e {
                if f != ROOT_FRAME {
                    referenced.insert(f.as_str());
                }
            }
        });
    }
    plan.steps[..index].iter().rev().map(|s| s.binding.as_str()).find(|b| referenced.contains(b))
}

fn conjoin(parts: &[Expr]) -> Option<Expr> {
    parts.iter().cloned().reduce(|a, b| Expr::binary(a, BinaryOp::And, b))
}

impl Compiler<'_> {
    fn unsupported<T>(&self, message: impl Into<String>) -> Result<T, CompileError> {
        Err(CompileError::Unsupported { step: self.step, message: message.into() })
    }

    fn apply(&mut self, state: &mut FrameState, op: &StepOp) -> Result<(), CompileError> {
        match op {
            StepOp::Where { element, filter } => {
                if state.limit.is_some() {
                    return self.unsupported("where after limit cannot be expressed in one query");
                }
                let clause = if state.grouped() { Clause::Having } else { Clause::Where };
                let mut tables = BTreeSet::new();
                let e = self.lower(element, clause, state, &mut tables)?;
                let cond = self.lower_predicate(e, filter, clause, state, &mut tables)?;
                state.core_tables.extend(tables.iter().cloned());
                state.tables.extend(tables);
                match clause {
                    Clause::Having => state.havings.push(cond),
                    _ => state.wheres.push(cond),
                }
            }
            StepOp::GroupBy(keys) => {
                if state.limit.is_some() {
                    return self.unsupported("groupby after limit cannot be expressed in one query");
                }
                let mut tables = BTreeSet::new();
                for k in keys {
                    let e = self.lower(k, Clause::Where, state, &mut tables)?;
                    state.group_by.push(e);
                }
                state.core_tables.extend(tables.iter().cloned());
                state.tables.extend(tables);
            }
            StepOp::OrderBy { by, direction } => {
                if state.limit.is_some() {
                    return self.unsupported("orderby after limit cannot be expressed in one query");
                }
                let mut tables = BTreeSet::new();
                let expr = self.lower(by, Clause::Output, state, &mut tables)?;
                state.tables.extend(tables);
                let direction = Some(match direction {
                    Direction::Asc => SortDirection::Asc,
                    Direction::Desc => SortDirection::Desc,
                });
                state.order.push(OrderItem { expr, direction });
            }
            StepOp::Limit(n) => state.limit = Some(state.limit.map_or(*n, |m| m.min(*n))),
            StepOp::Select(items) => {
                let mut tables = BTreeSet::new();
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.lower(item, Clause::Output, state, &mut tables)?);
                }
                state.tables.extend(tables);
                state.projection = Some(out);
            }
            StepOp::Count => state.projection = Some(vec![Expr::count_star()]),
        }
        Ok(())
    }

    fn column(&self, table: &str, column: &str, tables: &mut BTreeSet<Name>) -> Expr {
        let r = self.catalog.resolve_column(table, column).expect("validated");
        tables.insert(r.table.clone());
        Expr::column(r.table.as_str(), r.column.as_str())
    }

    fn lower(
        &self,
        e: &PlanExpr,
        clause: Clause,
        current: &FrameState,
        tables: &mut BTreeSet<Name>,
    ) -> Result<Expr, CompileError> {
        Ok(match e {
            PlanExpr::Column(c) => self.column(c.table.as_str(), c.column.as_str(), tables),
            PlanExpr::Number(n) => match n.strip_prefix('-') {
                Some(abs) => Expr::Unary { op: UnaryOp::Neg, expr: Box::new(Expr::Literal(Literal::Number(abs.into()))) },
                None => Expr::Literal(Literal::Number(n.clone())),
            },
            PlanExpr::Text(t) => Expr::Literal(Literal::String(t.clone())),
            PlanExpr::Cast { expr, ty } => {
                Expr::Cast { expr: Box::new(self.lower(expr, clause, current, tables)?), type_name: ty.sql().into() }
            }
            PlanExpr::Arith { left, op, right } => {
                let op = match op {
                    ArithOp::Add => BinaryOp::Plus,
                    ArithOp::Sub => BinaryOp::Minus,
                    ArithOp::Mul => BinaryOp::Mul,
                    ArithOp::Div => BinaryOp::Div,
                };
                Expr::binary(self.lower(left, clause, current, tables)?, op, self.lower(right, clause, current, tables)?)
            }
            PlanExpr::CaseWhen { condition, then, otherwise } => Expr::Case {
                operand: None,
                branches: vec![(
                    self.lower_condition(condition, clause, current, tables)?,
                    self.lower(then, clause, current, tables)?,
                )],
                else_result: Some(Box::new(self.lower(otherwise, clause, current, tables)?)),
            },
            PlanExpr::Aggregate { func, distinct, arg, frame } => {
                let target = match frame {
                    None => {
                        if clause == Clause::Where {
                            return self.unsupported(format!(
                                "{}() over the frame being filtered needs a groupby first",
                                func.name()
                            ));
                        }
                        return self.aggregate(*func, *distinct, arg.as_deref(), clause, current, tables);
                    }
                    Some(f) => &self.frames[f.as_str()],
                };
                if target.limit.is_some() {
                    return self.unsupported(format!(
                        "aggregate over `{}` which has a limit cannot be expressed",
                        frame.as_deref().unwrap_or_default()
                    ));
                }
                if clause != Clause::Where && target.same_core(current) {
                    return self.aggregate(*func, *distinct, arg.as_deref(), clause, current, tables);
                }
                if target.grouped() {
                    return self.unsupported(format!(
                        "aggregate over grouped frame `{}` from a different frame",
                        frame.as_deref().unwrap_or_default()
                    ));
                }
                self.frame_subquery(*func, *distinct, arg.as_deref(), target)?
            }
        })
    }

    fn aggregate(
        &self,
        func: AggFunc,
        distinct: bool,
        arg: Option<&PlanExpr>,
        clause: Clause,
        current: &FrameState,
        tables: &mut BTreeSet<Name>,
    ) -> Result<Expr, CompileError> {
        let name = Ident::new(func.name().to_ascii_uppercase());
        Ok(match arg {
            None => Expr::Function { name, distinct, args: Vec::new(), star: true, over: None },
            Some(a) => {
                // nested aggregates are not valid SQL; a frame aggregate
                // inside an argument must come from another frame
                let inner = self.lower(a, clause, current, tables)?;
                Expr::Function { name, distinct, args: vec![inner], star: false, over: None }
            }
        })
    }

    /// `(SELECT AGG(arg) FROM <frame tables> WHERE <frame filters>)`
    fn frame_subquery(
        &self,
        func: AggFunc,
        distinct: bool,
        arg: Option<&PlanExpr>,
        frame: &FrameState,
    ) -> Result<Expr, CompileError> {
        let mut tables = frame.core_tables.clone();
        let agg = self.aggregate(func, distinct, arg, Clause::Output, frame, &mut tables)?;
        if tables.is_empty() {
            tables = self.all_tables.clone();
        }
        let path = infer_join_path(&tables, self.graph)?;
        let select = Select {
            distinct: false,
            projection: vec![SelectItem::Expr { expr: agg, alias: None }],
            from: vec![self.join_clause(&path)],
            selection: conjoin(&frame.wheres),
            group_by: Vec::new(),
            having: None,
        };
        Ok(Expr::Subquery(Box::new(Query::from_select(select))))
    }

    fn lower_predicate(
        &self,
        element: Expr,
        p: &Predicate,
        clause: Clause,
        current: &FrameState,
        tables: &mut BTreeSet<Name>,
    ) -> Result<Expr, CompileError> {
        let b = Box::new(element);
        Ok(match p {
            Predicate::Compare { op, value } => {
                let op = match op {
                    CompareOp::Eq => BinaryOp::Eq,
                    CompareOp::NotEq => BinaryOp::NotEq,
                    CompareOp::Lt => BinaryOp::Lt,
                    CompareOp::LtEq => BinaryOp::LtEq,
                    CompareOp::Gt => BinaryOp::Gt,
                    CompareOp::GtEq => BinaryOp::GtEq,
                };
                Expr::Binary { left: b, op, right: Box::new(self.lower(value, clause, current, tables)?) }
            }
            Predicate::Like { negated, pattern } => Expr::Like {
                negated: *negated,
                kind: LikeKind::Like,
                expr: b,
                pattern: Box::new(self.lower(pattern, clause, current, tables)?),
                escape: None,
            },
            Predicate::In { negated, values } => Expr::InList {
                expr: b,
                list: values.iter().map(|v| self.lower(v, clause, current, tables)).collect::<Result<_, _>>()?,
                negated: *negated,
            },
            Predicate::IsNull { negated } => Expr::IsNull { expr: b, negated: *negated },
            Predicate::Between { low, high } => Expr::Between {
                expr: b,
                negated: false,
                low: Box::new(self.lower(low, clause, current, tables)?),
                high: Box::new(self.lower(high, clause, current, tables)?),
            },
        })
    }

    fn lower_condition(
        &self,
        c: &Condition,
        clause: Clause,
        current: &FrameState,
        tables: &mut BTreeSet<Name>,
    ) -> Result<Expr, CompileError> {
        Ok(match c {
            Condition::Test { element, predicate } => {
                let e = self.lower(element, clause, current, tables)?;
                self.lower_predicate(e, predicate, clause, current, tables)?
            }
            Condition::And(a, b) => Expr::binary(
                self.lower_condition(a, clause, current, tables)?,
                BinaryOp::And,
                self.lower_condition(b, clause, current, tables)?,
            ),
            Condition::Or(a, b) => Expr::binary(
                self.lower_condition(a, clause, current, tables)?,
                BinaryOp::Or,
                self.lower_condition(b, clause, current, tables)?,
            ),
        })
    }

    fn join_clause(&self, path: &JoinPath) -> TableWithJoins {
        let table = |n: &Name| TableFactor::Table { name: Ident::quoted_if_needed(n.as_str()), alias: None };
        TableWithJoins {
            relation: table(&path.anchor),
            joins: path
                .joins
                .iter()
                .map(|(t, link)| Join {
                    kind: JoinKind::Inner,
                    relation: table(t),
                    constraint: JoinConstraint::On(Expr::binary(
                        Expr::column(link.from.table.as_str(), link.from.column.as_str()),
                        BinaryOp::Eq,
                        Expr::column(link.to.table.as_str(), link.to.column.as_str()),
                    )),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::test_support::*;
    use crate::schema::fk_join_graph;
    use crate::talog::parse_symbolic;

    fn compile(text: &str, cat: &SchemaCatalog) -> Result<CompiledQuery, CompileError> {
        compile_plan(&parse_symbolic(text).unwrap(), cat, &fk_join_graph(cat))
    }

    #[test]
    fn worked_case_one_shape() {
        let cat = schools_catalog();
        let q = compile(
            "df1 = df.where(element = schools.StatusType, filter = 'Active')\n\
             df2 = df1.orderby(by = satscores.AvgScrRead, desc).limit(1)\n\
             res = df2.select(schools.District)",
            &cat,
        )
        .unwrap();
        assert_eq!(
            q.sql,
            "SELECT schools.District FROM satscores INNER JOIN schools ON satscores.cds = schools.CDSCode \
             WHERE schools.StatusType = 'Active' ORDER BY satscores.AvgScrRead DESC LIMIT 1"
        );
    }

    #[test]
    fn single_table_select() {
        let cat = SchemaCatalog::new("x", vec![table("t", &["a"], &[])], vec![]).unwrap();
        assert_eq!(compile("res = df.select(t.a)", &cat).unwrap().sql, "SELECT t.a FROM t");
    }

    #[test]
    fn frame_aggregate_becomes_subquery() {
        let cat = SchemaCatalog::new(
            "debit",
            vec![table("customers", &["CustomerID", "Currency"], &["CustomerID"]), table("transactions_1k", &["TransactionID", "Date", "CustomerID"], &[])],
            vec![fk("transactions_1k.CustomerID", "customers.CustomerID")],
        )
        .unwrap();
        let q = compile(
            "df1 = df.where(element = transactions_1k.Date, filter = '2012-08-25')\n\
             df2 = df1.where(element = customers.Currency, filter = 'EUR')\n\
             res = df.select(cast(df2.count(), real) * 100 / df1.count())",
            &cat,
        )
        .unwrap();
        assert_eq!(
            q.sql,
            "SELECT CAST(COUNT(*) AS REAL) * 100 / (SELECT COUNT(*) FROM transactions_1k WHERE transactions_1k.Date = '2012-08-25') \
             FROM customers INNER JOIN transactions_1k ON transactions_1k.CustomerID = customers.CustomerID \
             WHERE transactions_1k.Date = '2012-08-25' AND customers.Currency = 'EUR'"
        );
    }

    #[test]
    fn grouping_and_having() {
        let cat = schools_catalog();
        let q = compile(
            "df1 = df.groupby(schools.County).where(element = count(), filter = > 1)\n\
             res = df1.orderby(by = count(), desc).limit(2).select(schools.County, count())",
            &cat,
        )
        .unwrap();
        assert_eq!(
            q.sql,
            "SELECT schools.County, COUNT(*) FROM schools GROUP BY schools.County HAVING COUNT(*) > 1 \
             ORDER BY COUNT(*) DESC LIMIT 2"
        );
    }

    #[test]
    fn where_against_an_average_uses_a_subquery() {
        let cat = schools_catalog();
        let q = compile(
            "df1 = df.where(element = satscores.AvgScrRead, filter = > df.avg(satscores.AvgScrRead))\nres = df1.count()",
            &cat,
        )
        .unwrap();
        assert_eq!(
            q.sql,
            "SELECT COUNT(*) FROM satscores WHERE satscores.AvgScrRead > (SELECT AVG(satscores.AvgScrRead) FROM satscores)"
        );
    }

    #[test]
    fn arithmetic_grouping_is_preserved() {
        let cat = SchemaCatalog::new("x", vec![table("t", &["a", "b", "c"], &[])], vec![]).unwrap();
        let q = compile("res = df.select(t.a - (t.b - t.c), (t.a + t.b) * -2)", &cat).unwrap();
        assert_eq!(q.sql, "SELECT t.a - (t.b - t.c), (t.a + t.b) * -2 FROM t");
    }

    #[test]
    fn rejected_shapes() {
        let cat = schools_catalog();
        assert!(matches!(
            compile("df1 = df.limit(3)\nres = df1.where(element = schools.County, filter = 'x').select(schools.School)", &cat),
            Err(CompileError::Unsupported { .. })
        ));
        assert!(matches!(compile("res = df9.select(schools.School)", &cat), Err(CompileError::Invalid(_))));
        assert!(matches!(compile("res = df.where(element = schools.County, filter = 'x')", &cat), Err(CompileError::Invalid(_))));
        assert!(matches!(
            compile("df1 = df.groupby(schools.County)\nres = df.where(element = schools.School, filter = 'x').select(df1.count())", &cat),
            Err(CompileError::Unsupported { .. })
        ));
    }

    #[test]
    fn quoted_names_are_escaped() {
        let cat = SchemaCatalog::new("x", vec![table("frpm", &["County Name", "Free Meal Count (K-12)"], &[])], vec![]).unwrap();
        let q = compile("res = df.where(element = frpm.`County Name`, filter = 'Alameda').select(frpm.`Free Meal Count (K-12)`)", &cat).unwrap();
        assert_eq!(q.sql, "SELECT frpm.`Free Meal Count (K-12)` FROM frpm WHERE frpm.`County Name` = 'Alameda'");
    }
}
