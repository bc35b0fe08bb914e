//! Statement tree for the supported SELECT subset, with a renderer that
//! emits SQLite-compatible text.

use std::fmt::{self, Write};

/// An identifier as written, including its quoting style.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ident {
    pub value: String,
    pub quote: Option<char>,
}

impl Ident {
    pub fn new(value: impl Into<String>) -> Self {
        Self { value: value.into(), quote: None }
    }

    /// Builds an identifier, backtick-quoting it when it is not a plain word.
    pub fn quoted_if_needed(value: impl Into<String>) -> Self {
        let value = value.into();
        let quote = if needs_quoting(&value) { Some('`') } else { None };
        Self { value, quote }
    }

    pub fn eq_ignore_case(&self, other: &str) -> bool {
        self.value.eq_ignore_ascii_case(other)
    }
}

fn needs_quoting(value: &str) -> bool {
    let mut chars = value.chars();
    let Some(first) = chars.next() else { return true };
    if !(first == '_' || first.is_ascii_alphabetic()) {
        return true;
    }
    if !value.chars().all(|c| c == '_' || c.is_ascii_alphanumeric()) {
        return true;
    }
    super::parser::is_reserved(value)
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.quote {
            None => f.write_str(&self.value),
            Some('[') => write!(f, "[{}]", self.value),
            Some(q) => {
                let escaped = self.value.replace(q, &format!("{q}{q}"));
                write!(f, "{q}{escaped}{q}")
            }
        }
    }
}

/// A full query: optional CTEs, a (possibly compound) body, and the
/// trailing ORDER BY / LIMIT that apply to the whole body.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub with: Vec<Cte>,
    pub body: SetExpr,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<Limit>,
}

impl Query {
    pub fn from_select(select: Select) -> Self {
        Self { with: Vec::new(), body: SetExpr::Select(Box::new(select)), order_by: Vec::new(), limit: None }
    }

    /// The leftmost simple SELECT of the body.
    pub fn first_select(&self) -> &Select {
        self.body.first_select()
    }

    /// All simple SELECTs of a compound body, left to right.
    pub fn selects(&self) -> Vec<&Select> {
        let mut out = Vec::new();
        self.body.collect_selects(&mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cte {
    pub name: Ident,
    pub columns: Vec<Ident>,
    pub query: Box<Query>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetExpr {
    Select(Box<Select>),
    SetOp { op: SetOperator, all: bool, left: Box<SetExpr>, right: Box<SetExpr> },
}

impl SetExpr {
    pub fn first_select(&self) -> &Select {
        match self {
            SetExpr::Select(s) => s,
            SetExpr::SetOp { left, .. } => left.first_select(),
        }
    }

    fn collect_selects<'a>(&'a self, out: &mut Vec<&'a Select>) {
        match self {
            SetExpr::Select(s) => out.push(s),
            SetExpr::SetOp { left, right, .. } => {
                left.collect_selects(out);
                right.collect_selects(out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOperator {
    Union,
    Intersect,
    Except,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Select {
    pub distinct: bool,
    pub projection: Vec<SelectItem>,
    pub from: Vec<TableWithJoins>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    QualifiedWildcard(Ident),
    Expr { expr: Expr, alias: Option<Ident> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableWithJoins {
    pub relation: TableFactor,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableFactor {
    Table { name: Ident, alias: Option<Ident> },
    Derived { subquery: Box<Query>, alias: Option<Ident> },
    Nested(Box<TableWithJoins>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub kind: JoinKind,
    pub relation: TableFactor,
    pub constraint: JoinConstraint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    /// `JOIN` written without a qualifier.
    Plain,
    Left,
    Right,
    Full,
    Cross,
    /// `a, b` inside a join chain is represented at the FROM-list level;
    /// this variant covers `NATURAL JOIN`.
    Natural,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinConstraint {
    On(Expr),
    Using(Vec<Ident>),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub expr: Expr,
    pub direction: Option<SortDirection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SortDirection {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Limit {
    pub count: Expr,
    pub offset: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    /// Numeric literal kept in its source spelling.
    Number(String),
    String(String),
    Null,
    /// `TRUE`, `FALSE`, `CURRENT_DATE` and friends.
    Keyword(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Plus,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Eq,
    DoubleEq,
    NotEq,
    LtGt,
    Is,
    IsNot,
    Lt,
    LtEq,
    Gt,
    GtEq,
    BitAnd,
    BitOr,
    ShiftLeft,
    ShiftRight,
    Plus,
    Minus,
    Mul,
    Div,
    Mod,
    Concat,
}

impl BinaryOp {
    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Or => 1,
            And => 2,
            Eq | DoubleEq | NotEq | LtGt | Is | IsNot => 4,
            Lt | LtEq | Gt | GtEq => 5,
            BitAnd | BitOr | ShiftLeft | ShiftRight => 6,
            Plus | Minus => 7,
            Mul | Div | Mod => 8,
            Concat => 9,
        }
    }

    pub fn as_str(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Or => "OR",
            And => "AND",
            Eq => "=",
            DoubleEq => "==",
            NotEq => "!=",
            LtGt => "<>",
            Is => "IS",
            IsNot => "IS NOT",
            Lt => "<",
            LtEq => "<=",
            Gt => ">",
            GtEq => ">=",
            BitAnd => "&",
            BitOr => "|",
            ShiftLeft => "<<",
            ShiftRight => ">>",
            Plus => "+",
            Minus => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Concat => "||",
        }
    }

    pub fn is_equality(self) -> bool {
        matches!(self, BinaryOp::Eq | BinaryOp::DoubleEq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikeKind {
    Like,
    Glob,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    pub partition_by: Vec<Expr>,
    pub order_by: Vec<OrderItem>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column { qualifier: Option<Ident>, name: Ident },
    Literal(Literal),
    Parameter(String),
    Unary { op: UnaryOp, expr: Box<Expr> },
    Binary { left: Box<Expr>, op: BinaryOp, right: Box<Expr> },
    Like { negated: bool, kind: LikeKind, expr: Box<Expr>, pattern: Box<Expr>, escape: Option<Box<Expr>> },
    InList { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
    InSubquery { expr: Box<Expr>, subquery: Box<Query>, negated: bool },
    Between { expr: Box<Expr>, negated: bool, low: Box<Expr>, high: Box<Expr> },
    IsNull { expr: Box<Expr>, negated: bool },
    Function { name: Ident, distinct: bool, args: Vec<Expr>, star: bool, over: Option<WindowSpec> },
    Case { operand: Option<Box<Expr>>, branches: Vec<(Expr, Expr)>, else_result: Option<Box<Expr>> },
    Cast { expr: Box<Expr>, type_name: String },
    Subquery(Box<Query>),
    Exists { subquery: Box<Query>, negated: bool },
    Nested(Box<Expr>),
    Collate { expr: Box<Expr>, collation: Ident },
}

impl Expr {
    pub fn column(table: &str, column: &str) -> Self {
        Expr::Column { qualifier: Some(Ident::quoted_if_needed(table)), name: Ident::quoted_if_needed(column) }
    }

    pub fn binary(left: Expr, op: BinaryOp, right: Expr) -> Self {
        Expr::Binary { left: Box::new(left), op, right: Box::new(right) }
    }

    pub fn function(name: &str, args: Vec<Expr>) -> Self {
        Expr::Function { name: Ident::new(name), distinct: false, args, star: false, over: None }
    }

    pub fn count_star() -> Self {
        Expr::Function { name: Ident::new("COUNT"), distinct: false, args: Vec::new(), star: true, over: None }
    }

    /// Strips redundant parentheses.
    pub fn unnested(&self) -> &Expr {
        match self {
            Expr::Nested(inner) => inner.unnested(),
            other => other,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { op: UnaryOp::Not, .. } => 3,
            Expr::Like { .. } | Expr::InList { .. } | Expr::InSubquery { .. } | Expr::Between { .. } => 4,
            Expr::IsNull { .. } => 4,
            Expr::Unary { .. } => 10,
            Expr::Collate { .. } => 11,
            _ => 12,
        }
    }
}

/// Renders an expression, parenthesising children that bind looser than
/// their context.
fn write_expr(out: &mut String, expr: &Expr, min_prec: u8) -> fmt::Result {
    let prec = expr.precedence();
    let wrap = prec < min_prec;
    if wrap {
        out.push('(');
    }
    match expr {
        Expr::Column { qualifier, name } => {
            if let Some(q) = qualifier {
                write!(out, "{q}.")?;
            }
            write!(out, "{name}")?;
        }
        Expr::Literal(lit) => write_literal(out, lit)?,
        Expr::Parameter(p) => out.push_str(p),
        Expr::Unary { op, expr } => {
            match op {
                UnaryOp::Neg => out.push('-'),
                UnaryOp::Plus => out.push('+'),
                UnaryOp::BitNot => out.push('~'),
                UnaryOp::Not => out.push_str("NOT "),
            }
            let inner_prec = if *op == UnaryOp::Not { 3 } else { 10 };
            // `- -1` must not collapse into a comment marker
            if *op == UnaryOp::Neg && matches!(expr.as_ref(), Expr::Unary { op: UnaryOp::Neg, .. }) {
                out.push(' ');
            }
            write_expr(out, expr, inner_prec)?;
        }
        Expr::Binary { left, op, right } => {
            let p = op.precedence();
            write_expr(out, left, p)?;
            write!(out, " {} ", op.as_str())?;
            write_expr(out, right, p + 1)?;
        }
        Expr::Like { negated, kind, expr, pattern, escape } => {
            write_expr(out, expr, 5)?;
            if *negated {
                out.push_str(" NOT");
            }
            out.push_str(match kind {
                LikeKind::Like => " LIKE ",
                LikeKind::Glob => " GLOB ",
            });
            write_expr(out, pattern, 5)?;
            if let Some(e) = escape {
                out.push_str(" ESCAPE ");
                write_expr(out, e, 5)?;
            }
        }
        Expr::InList { expr, list, negated } => {
            write_expr(out, expr, 5)?;
            out.push_str(if *negated { " NOT IN (" } else { " IN (" });
            write_list(out, list)?;
            out.push(')');
        }
        Expr::InSubquery { expr, subquery, negated } => {
            write_expr(out, expr, 5)?;
            out.push_str(if *negated { " NOT IN (" } else { " IN (" });
            write!(out, "{subquery}")?;
            out.push(')');
        }
        Expr::Between { expr, negated, low, high } => {
            write_expr(out, expr, 5)?;
            out.push_str(if *negated { " NOT BETWEEN " } else { " BETWEEN " });
            write_expr(out, low, 5)?;
            out.push_str(" AND ");
            write_expr(out, high, 5)?;
        }
        Expr::IsNull { expr, negated } => {
            write_expr(out, expr, 5)?;
            out.push_str(if *negated { " IS NOT NULL" } else { " IS NULL" });
        }
        Expr::Function { name, distinct, args, star, over } => {
            write!(out, "{name}(")?;
            if *distinct {
                out.push_str("DISTINCT ");
            }
            if *star {
                out.push('*');
            } else {
                write_list(out, args)?;
            }
            out.push(')');
            if let Some(w) = over {
                out.push_str(" OVER (");
                let mut sep = "";
                if !w.partition_by.is_empty() {
                    out.push_str("PARTITION BY ");
                    write_list(out, &w.partition_by)?;
                    sep = " ";
                }
                if !w.order_by.is_empty() {
                    out.push_str(sep);
                    out.push_str("ORDER BY ");
                    write_order(out, &w.order_by)?;
                }
                out.push(')');
            }
        }
        Expr::Case { operand, branches, else_result } => {
            out.push_str("CASE");
            if let Some(op) = operand {
                out.push(' ');
                write_expr(out, op, 0)?;
            }
            for (when, then) in branches {
                out.push_str(" WHEN ");
                write_expr(out, when, 0)?;
                out.push_str(" THEN ");
                write_expr(out, then, 0)?;
            }
            if let Some(e) = else_result {
                out.push_str(" ELSE ");
                write_expr(out, e, 0)?;
            }
            out.push_str(" END");
        }
        Expr::Cast { expr, type_name } => {
            out.push_str("CAST(");
            write_expr(out, expr, 0)?;
            write!(out, " AS {type_name})")?;
        }
        Expr::Subquery(q) => write!(out, "({q})")?,
        Expr::Exists { subquery, negated } => {
            if *negated {
                out.push_str("NOT ");
            }
            write!(out, "EXISTS ({subquery})")?;
        }
        Expr::Nested(inner) => {
            out.push('(');
            write_expr(out, inner, 0)?;
            out.push(')');
        }
        Expr::Collate { expr, collation } => {
            write_expr(out, expr, 11)?;
            write!(out, " COLLATE {collation}")?;
        }
    }
    if wrap {
        out.push(')');
    }
    Ok(())
}

fn write_literal(out: &mut String, lit: &Literal) -> fmt::Result {
    match lit {
        Literal::Number(n) => out.push_str(n),
        Literal::String(s) => write!(out, "'{}'", s.replace('\'', "''"))?,
        Literal::Null => out.push_str("NULL"),
        Literal::Keyword(k) => out.push_str(k),
    }
    Ok(())
}

fn write_list(out: &mut String, list: &[Expr]) -> fmt::Result {
    for (i, e) in list.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, e, 0)?;
    }
    Ok(())
}

fn write_order(out: &mut String, items: &[OrderItem]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, &item.expr, 0)?;
        match item.direction {
            Some(SortDirection::Asc) => out.push_str(" ASC"),
            Some(SortDirection::Desc) => out.push_str(" DESC"),
            None => {}
        }
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self, 0)?;
        f.write_str(&s)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_literal(&mut s, self)?;
        f.write_str(&s)
    }
}

impl fmt::Display for TableFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableFactor::Table { name, alias } => {
                write!(f, "{name}")?;
                if let Some(a) = alias {
                    write!(f, " AS {a}")?;
                }
            }
            TableFactor::Derived { subquery, alias } => {
                write!(f, "({subquery})")?;
                if let Some(a) = alias {
                    write!(f, " AS {a}")?;
                }
            }
            TableFactor::Nested(inner) => write!(f, "({inner})")?,
        }
        Ok(())
    }
}

impl fmt::Display for TableWithJoins {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.relation)?;
        for join in &self.joins {
            let kw = match join.kind {
                JoinKind::Inner => "INNER JOIN",
                JoinKind::Plain => "JOIN",
                JoinKind::Left => "LEFT JOIN",
                JoinKind::Right => "RIGHT JOIN",
                JoinKind::Full => "FULL JOIN",
                JoinKind::Cross => "CROSS JOIN",
                JoinKind::Natural => "NATURAL JOIN",
            };
            write!(f, " {kw} {}", join.relation)?;
            match &join.constraint {
                JoinConstraint::On(e) => write!(f, " ON {e}")?,
                JoinConstraint::Using(cols) => {
                    f.write_str(" USING (")?;
                    for (i, c) in cols.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{c}")?;
                    }
                    f.write_str(")")?;
                }
                JoinConstraint::None => {}
            }
        }
        Ok(())
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        for (i, item) in self.projection.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match item {
                SelectItem::Wildcard => f.write_str("*")?,
                SelectItem::QualifiedWildcard(q) => write!(f, "{q}.*")?,
                SelectItem::Expr { expr, alias } => {
                    write!(f, "{expr}")?;
                    if let Some(a) = alias {
                        write!(f, " AS {a}")?;
                    }
                }
            }
        }
        if !self.from.is_empty() {
            f.write_str(" FROM ")?;
            for (i, t) in self.from.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{t}")?;
            }
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            let mut s = String::new();
            write_list(&mut s, &self.group_by)?;
            write!(f, " GROUP BY {s}")?;
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        Ok(())
    }
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Select(s) => write!(f, "{s}"),
            SetExpr::SetOp { op, all, left, right } => {
                let kw = match op {
                    SetOperator::Union => "UNION",
                    SetOperator::Intersect => "INTERSECT",
                    SetOperator::Except => "EXCEPT",
                };
                write!(f, "{left} {kw}{} {right}", if *all { " ALL" } else { "" })
            }
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.with.is_empty() {
            f.write_str("WITH ")?;
            for (i, cte) in self.with.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", cte.name)?;
                if !cte.columns.is_empty() {
                    f.write_str("(")?;
                    for (j, c) in cte.columns.iter().enumerate() {
                        if j > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{c}")?;
                    }
                    f.write_str(")")?;
                }
                write!(f, " AS ({})", cte.query)?;
            }
            f.write_str(" ")?;
        }
        write!(f, "{}", self.body)?;
        if !self.order_by.is_empty() {
            let mut s = String::new();
            write_order(&mut s, &self.order_by)?;
            write!(f, " ORDER BY {s}")?;
        }
        if let Some(limit) = &self.limit {
            write!(f, " LIMIT {}", limit.count)?;
            if let Some(off) = &limit.offset {
                write!(f, " OFFSET {off}")?;
            }
        }
        Ok(())
    }
}
