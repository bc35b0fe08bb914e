//! Symbolic plan tree and its canonical text form.

use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::schema::ColumnRef;

/// Name of the implicit frame holding every table.
pub const ROOT_FRAME: &str = "df";
/// Binding that holds the answer.
pub const RESULT_FRAME: &str = "res";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicPlan {
    pub steps: Vec<Step>,
}

impl SymbolicPlan {
    pub fn result_step(&self) -> Option<&Step> {
        self.steps.last().filter(|s| s.binding == RESULT_FRAME)
    }

    /// Canonical text, one assignment per line.
    pub fn render(&self) -> String {
        render_symbolic(self)
    }
}

/// `binding = source.op(...).op(...)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub binding: String,
    pub source: String,
    pub ops: Vec<StepOp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOp {
    Where { element: PlanExpr, filter: Predicate },
    OrderBy { by: PlanExpr, direction: Direction },
    Limit(u64),
    GroupBy(Vec<PlanExpr>),
    Select(Vec<PlanExpr>),
    Count,
}

impl StepOp {
    pub fn name(&self) -> &'static str {
        match self {
            StepOp::Where { .. } => "where",
            StepOp::OrderBy { .. } => "orderby",
            StepOp::Limit(_) => "limit",
            StepOp::GroupBy(_) => "groupby",
            StepOp::Select(_) => "select",
            StepOp::Count => "count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::NotEq => "!=",
            CompareOp::Lt => "<",
            CompareOp::LtEq => "<=",
            CompareOp::Gt => ">",
            CompareOp::GtEq => ">=",
        }
    }
}

/// Right-hand side of a filter. A bare literal filter is `Compare(Eq, _)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Compare { op: CompareOp, value: PlanExpr },
    Like { negated: bool, pattern: PlanExpr },
    In { negated: bool, values: Vec<PlanExpr> },
    IsNull { negated: bool },
    Between { low: PlanExpr, high: PlanExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Test { element: PlanExpr, predicate: Predicate },
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "count" => AggFunc::Count,
            "sum" => AggFunc::Sum,
            "avg" | "mean" => AggFunc::Avg,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CastType {
    Real,
    Integer,
    Text,
}

impl CastType {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "real" | "float" | "double" => CastType::Real,
            "int" | "integer" => CastType::Integer,
            "text" | "str" | "string" => CastType::Text,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            CastType::Real => "real",
            CastType::Integer => "integer",
            CastType::Text => "text",
        }
    }

    pub fn sql(self) -> &'static str {
        match self {
            CastType::Real => "REAL",
            CastType::Integer => "INTEGER",
            CastType::Text => "TEXT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanExpr {
    Column(ColumnRef),
    /// Numeric literal in source spelling, sign included.
    Number(String),
    Text(String),
    /// `frame.func(arg)`; `frame` is `None` for the bare form, which means
    /// the frame being transformed. `arg` is `None` for `count()`.
    Aggregate { func: AggFunc, distinct: bool, arg: Option<Box<PlanExpr>>, frame: Option<String> },
    Cast { expr: Box<PlanExpr>, ty: CastType },
    CaseWhen { condition: Box<Condition>, then: Box<PlanExpr>, otherwise: Box<PlanExpr> },
    Arith { left: Box<PlanExpr>, op: ArithOp, right: Box<PlanExpr> },
}

impl PlanExpr {
    pub fn column(table: &str, column: &str) -> Self {
        PlanExpr::Column(ColumnRef::new(table, column))
    }

    pub fn text(value: &str) -> Self {
        PlanExpr::Text(value.to_string())
    }

    pub fn number(value: impl ToString) -> Self {
        PlanExpr::Number(value.to_string())
    }

    pub fn count_of(frame: &str) -> Self {
        PlanExpr::Aggregate { func: AggFunc::Count, distinct: false, arg: None, frame: Some(frame.to_string()) }
    }

    pub fn arith(left: PlanExpr, op: ArithOp, right: PlanExpr) -> Self {
        PlanExpr::Arith { left: Box::new(left), op, right: Box::new(right) }
    }

    fn precedence(&self) -> u8 {
        match self {
            PlanExpr::Arith { op, .. } => op.precedence(),
            _ => 3,
        }
    }

    /// Calls `f` on this expression and every sub-expression, including
    /// those inside conditions.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a PlanExpr)) {
        f(self);
        match self {
            PlanExpr::Column(_) | PlanExpr::Number(_) | PlanExpr::Text(_) => {}
            PlanExpr::Aggregate { arg, .. } => {
                if let Some(a) = arg {
                    a.walk(f);
                }
            }
            PlanExpr::Cast { expr, .. } => expr.walk(f),
            PlanExpr::CaseWhen { condition, then, otherwise } => {
                condition.walk(f);
                then.walk(f);
                otherwise.walk(f);
            }
            PlanExpr::Arith { left, right, .. } => {
                left.walk(f);
                right.walk(f);
            }
        }
    }
}

impl Predicate {
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a PlanExpr)) {
        match self {
            Predicate::Compare { value, .. } => value.walk(f),
            Predicate::Like { pattern, .. } => pattern.walk(f),
            Predicate::In { values, .. } => values.iter().for_each(|v| v.walk(f)),
            Predicate::IsNull { .. } => {}
            Predicate::Between { low, high } => {
                low.walk(f);
                high.walk(f);
            }
        }
    }
}

impl Condition {
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a PlanExpr)) {
        match self {
            Condition::Test { element, predicate } => {
                element.walk(f);
                predicate.walk(f);
            }
            Condition::And(a, b) | Condition::Or(a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }
}

impl StepOp {
    /// Every expression the operation mentions.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a PlanExpr)) {
        match self {
            StepOp::Where { element, filter } => {
                element.walk(f);
                filter.walk(f);
            }
            StepOp::OrderBy { by, .. } => by.walk(f),
            StepOp::GroupBy(keys) | StepOp::Select(keys) => keys.iter().for_each(|k| k.walk(f)),
            StepOp::Limit(_) | StepOp::Count => {}
        }
    }
}

fn is_plain_word(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic()) && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

fn write_ident(out: &mut String, s: &str) {
    if is_plain_word(s) {
        out.push_str(s);
    } else {
        out.push('`');
        out.push_str(&s.replace('`', "``"));
        out.push('`');
    }
}

fn write_text(out: &mut String, s: &str) {
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out.push('\'');
}

fn write_expr(out: &mut String, e: &PlanExpr) {
    match e {
        PlanExpr::Column(c) => {
            write_ident(out, c.table.as_str());
            out.push('.');
            write_ident(out, c.column.as_str());
        }
        PlanExpr::Number(n) => out.push_str(n),
        PlanExpr::Text(t) => write_text(out, t),
        PlanExpr::Aggregate { func, distinct, arg, frame } => {
            if let Some(f) = frame {
                out.push_str(f);
                out.push('.');
            }
            out.push_str(func.name());
            out.push('(');
            if *distinct {
                out.push_str("distinct ");
            }
            if let Some(a) = arg {
                write_expr(out, a);
            }
            out.push(')');
        }
        PlanExpr::Cast { expr, ty } => {
            out.push_str("cast(");
            write_expr(out, expr);
            let _ = write!(out, ", {})", ty.name());
        }
        PlanExpr::CaseWhen { condition, then, otherwise } => {
            out.push_str("case_when(");
            write_condition(out, condition, 0);
            out.push_str(", ");
            write_expr(out, then);
            out.push_str(", ");
            write_expr(out, otherwise);
            out.push(')');
        }
        PlanExpr::Arith { left, op, right } => {
            let p = op.precedence();
            write_operand(out, left, left.precedence() < p);
            let _ = write!(out, " {} ", op.symbol());
            write_operand(out, right, right.precedence() <= p);
        }
    }
}

fn write_operand(out: &mut String, e: &PlanExpr, parens: bool) {
    if parens {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_predicate(out: &mut String, p: &Predicate, bare_eq: bool) {
    match p {
        Predicate::Compare { op: CompareOp::Eq, value } if bare_eq => write_expr(out, value),
        Predicate::Compare { op, value } => {
            let _ = write!(out, "{} ", op.symbol());
            write_expr(out, value);
        }
        Predicate::Like { negated, pattern } => {
            out.push_str(if *negated { "not like " } else { "like " });
            write_expr(out, pattern);
        }
        Predicate::In { negated, values } => {
            out.push_str(if *negated { "not in (" } else { "in (" });
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, v);
            }
            out.push(')');
        }
        Predicate::IsNull { negated } => out.push_str(if *negated { "is not null" } else { "is null" }),
        Predicate::Between { low, high } => {
            out.push_str("between ");
            write_expr(out, low);
            out.push_str(" and ");
            write_expr(out, high);
        }
    }
}

/// `min_prec`: 0 top level, 1 inside `or`, 2 inside `and`.
fn write_condition(out: &mut String, c: &Condition, min_prec: u8) {
    match c {
        Condition::Test { element, predicate } => {
            write_expr(out, element);
            out.push(' ');
            write_predicate(out, predicate, false);
        }
        Condition::Or(a, b) | Condition::And(a, b) => {
            let (p, word) = if matches!(c, Condition::Or(..)) { (1, "or") } else { (2, "and") };
            let parens = p < min_prec;
            if parens {
                out.push('(');
            }
            write_condition(out, a, p);
            let _ = write!(out, " {word} ");
            write_condition(out, b, p + 1);
            if parens {
                out.push(')');
            }
        }
    }
}

fn write_op(out: &mut String, op: &StepOp) {
    out.push_str(op.name());
    out.push('(');
    match op {
        StepOp::Where { element, filter } => {
            out.push_str("element = ");
            write_expr(out, element);
            out.push_str(", filter = ");
            write_predicate(out, filter, true);
        }
        StepOp::OrderBy { by, direction } => {
            out.push_str("by = ");
            write_expr(out, by);
            out.push_str(match direction {
                Direction::Asc => ", asc",
                Direction::Desc => ", desc",
            });
        }
        StepOp::Limit(n) => {
            let _ = write!(out, "{n}");
        }
        StepOp::GroupBy(items) | StepOp::Select(items) => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, item);
            }
        }
        StepOp::Count => {}
    }
    out.push(')');
}

pub fn render_symbolic(plan: &SymbolicPlan) -> String {
    let mut out = String::new();
    for step in &plan.steps {
        let _ = write!(out, "{} = {}", step.binding, step.source);
        for op in &step.ops {
            out.push('.');
            write_op(&mut out, op);
        }
        out.push('\n');
    }
    out
}

impl fmt::Display for PlanExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self);
        f.write_str(&s)
    }
}

impl fmt::Display for SymbolicPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_symbolic(self))
    }
}
