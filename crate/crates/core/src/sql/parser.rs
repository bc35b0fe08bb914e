//! Recursive-descent parser for SELECT statements.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::SqlError;

const RESERVED: &[&str] = &[
    "ALL", "AND", "AS", "ASC", "BETWEEN", "BY", "CASE", "CAST", "COLLATE", "CROSS", "DESC", "DISTINCT", "ELSE",
    "END", "ESCAPE", "EXCEPT", "EXISTS", "FROM", "FULL", "GLOB", "GROUP", "HAVING", "IN", "INNER", "INTERSECT",
    "IS", "ISNULL", "JOIN", "LEFT", "LIKE", "LIMIT", "NATURAL", "NOT", "NOTNULL", "NULL", "OFFSET", "ON", "OR",
    "ORDER", "OUTER", "RIGHT", "SELECT", "THEN", "UNION", "USING", "WHEN", "WHERE", "WITH",
];

const UNSUPPORTED_STATEMENTS: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "CREATE", "DROP", "ALTER", "REPLACE", "PRAGMA", "ATTACH", "DETACH", "VACUUM",
    "BEGIN", "COMMIT", "ROLLBACK", "ANALYZE", "REINDEX", "EXPLAIN", "SAVEPOINT", "RELEASE", "UPSERT",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Parses a single SELECT (or WITH ... SELECT) statement.
pub fn parse_sql(sql: &str) -> Result<Query, SqlError> {
    let tokens = tokenize(sql).map_err(|e| SqlError::Parse { message: e.message, offset: e.offset })?;
    let mut parser = Parser { tokens, pos: 0, end_offset: sql.len() };
    parser.skip_semicolons();
    match parser.peek() {
        None => return Err(parser.error("empty statement")),
        Some(TokenKind::Word { value, quote: None }) if UNSUPPORTED_STATEMENTS.iter().any(|k| k.eq_ignore_ascii_case(value)) => {
            return Err(SqlError::Unsupported(value.to_ascii_uppercase()));
        }
        _ => {}
    }
    let query = parser.parse_query()?;
    parser.skip_semicolons();
    if parser.peek().is_some() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(query)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end_offset: usize,
}

impl Parser {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, n: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + n).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end_offset, |t| t.offset)
    }

    fn error(&self, message: &str) -> SqlError {
        let found = match self.peek() {
            Some(tok) => format!("{message}, found `{tok}`"),
            None => format!("{message}, found end of input"),
        };
        SqlError::Parse { message: found, offset: self.offset() }
    }

    fn advance(&mut self) -> Option<TokenKind> {
        let tok = self.tokens.get(self.pos).map(|t| t.kind.clone());
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn at_keyword_n(&self, n: usize, kw: &str) -> bool {
        self.peek_at(n).is_some_and(|t| t.is_keyword(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {kw}")))
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind) -> Result<(), SqlError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{kind}`")))
        }
    }

    fn skip_semicolons(&mut self) {
        while self.eat(&TokenKind::Semicolon) {}
    }

    fn parse_ident(&mut self) -> Result<Ident, SqlError> {
        match self.peek() {
            Some(TokenKind::Word { value, quote }) if quote.is_some() || !is_reserved(value) => {
                let ident = Ident { value: value.clone(), quote: *quote };
                self.pos += 1;
                Ok(ident)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn parse_optional_alias(&mut self) -> Result<Option<Ident>, SqlError> {
        if self.eat_keyword("AS") {
            if let Some(TokenKind::String(s)) = self.peek() {
                let ident = Ident { value: s.clone(), quote: Some('\'') };
                self.pos += 1;
                return Ok(Some(ident));
            }
            return self.parse_ident().map(Some);
        }
        match self.peek() {
            Some(TokenKind::Word { value, quote }) if quote.is_some() || !is_reserved(value) => {
                let ident = Ident { value: value.clone(), quote: *quote };
                self.pos += 1;
                Ok(Some(ident))
            }
            Some(TokenKind::String(s)) => {
                let ident = Ident { value: s.clone(), quote: Some('\'') };
                self.pos += 1;
                Ok(Some(ident))
            }
            _ => Ok(None),
        }
    }

    fn parse_query(&mut self) -> Result<Query, SqlError> {
        let mut with = Vec::new();
        if self.eat_keyword("WITH") {
            if self.at_keyword("RECURSIVE") {
                return Err(SqlError::Unsupported("WITH RECURSIVE".into()));
            }
            loop {
                let name = self.parse_ident()?;
                let mut columns = Vec::new();
                if self.eat(&TokenKind::LParen) {
                    loop {
                        columns.push(self.parse_ident()?);
                        if !self.eat(&TokenKind::Comma) {
                            break;
                        }
                    }
                    self.expect(&TokenKind::RParen)?;
                }
                self.expect_keyword("AS")?;
                self.expect(&TokenKind::LParen)?;
                let query = self.parse_query()?;
                self.expect(&TokenKind::RParen)?;
                with.push(Cte { name, columns, query: Box::new(query) });
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let body = self.parse_set_expr()?;
        let mut order_by = Vec::new();
        if self.at_keyword("ORDER") {
            self.pos += 1;
            self.expect_keyword("BY")?;
            order_by = self.parse_order_items()?;
        }
        let mut limit = None;
        if self.eat_keyword("LIMIT") {
            let first = self.parse_expr()?;
            if self.eat_keyword("OFFSET") {
                let offset = self.parse_expr()?;
                limit = Some(Limit { count: first, offset: Some(offset) });
            } else if self.eat(&TokenKind::Comma) {
                // LIMIT offset, count
                let count = self.parse_expr()?;
                limit = Some(Limit { count, offset: Some(first) });
            } else {
                limit = Some(Limit { count: first, offset: None });
            }
        }
        Ok(Query { with, body, order_by, limit })
    }

    fn parse_order_items(&mut self) -> Result<Vec<OrderItem>, SqlError> {
        let mut items = Vec::new();
        loop {
            let expr = self.parse_expr()?;
            let direction = if self.eat_keyword("ASC") {
                Some(SortDirection::Asc)
            } else if self.eat_keyword("DESC") {
                Some(SortDirection::Desc)
            } else {
                None
            };
            if self.at_keyword("NULLS") {
                return Err(SqlError::Unsupported("NULLS FIRST/LAST".into()));
            }
            items.push(OrderItem { expr, direction });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(items)
    }

    fn parse_set_expr(&mut self) -> Result<SetExpr, SqlError> {
        let mut left = SetExpr::Select(Box::new(self.parse_select()?));
        loop {
            let op = if self.at_keyword("UNION") {
                SetOperator::Union
            } else if self.at_keyword("INTERSECT") {
                SetOperator::Intersect
            } else if self.at_keyword("EXCEPT") {
                SetOperator::Except
            } else {
                break;
            };
            self.pos += 1;
            let all = self.eat_keyword("ALL");
            let right = SetExpr::Select(Box::new(self.parse_select()?));
            left = SetExpr::SetOp { op, all, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn parse_select(&mut self) -> Result<Select, SqlError> {
        self.expect_keyword("SELECT")?;
        let distinct = if self.eat_keyword("DISTINCT") {
            true
        } else {
            self.eat_keyword("ALL");
            false
        };
        let mut projection = Vec::new();
        loop {
            projection.push(self.parse_select_item()?);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        let mut from = Vec::new();
        if self.eat_keyword("FROM") {
            loop {
                from.push(self.parse_table_with_joins()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let selection = if self.eat_keyword("WHERE") { Some(self.parse_expr()?) } else { None };
        let mut group_by = Vec::new();
        let mut having = None;
        if self.at_keyword("GROUP") {
            self.pos += 1;
            self.expect_keyword("BY")?;
            loop {
                group_by.push(self.parse_expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        if self.eat_keyword("HAVING") {
            having = Some(self.parse_expr()?);
        }
        Ok(Select { distinct, projection, from, selection, group_by, having })
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, SqlError> {
        if self.eat(&TokenKind::Star) {
            return Ok(SelectItem::Wildcard);
        }
        if let (Some(TokenKind::Word { .. }), Some(TokenKind::Dot), Some(TokenKind::Star)) =
            (self.peek(), self.peek_at(1), self.peek_at(2))
        {
            let q = self.parse_ident()?;
            self.pos += 2;
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        let expr = self.parse_expr()?;
        let alias = self.parse_optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn parse_table_with_joins(&mut self) -> Result<TableWithJoins, SqlError> {
        let relation = self.parse_table_factor()?;
        let mut joins = Vec::new();
        loop {
            let natural = self.at_keyword("NATURAL");
            let start = self.pos;
            if natural {
                self.pos += 1;
            }
            let kind = if self.eat_keyword("INNER") {
                JoinKind::Inner
            } else if self.eat_keyword("LEFT") {
                self.eat_keyword("OUTER");
                JoinKind::Left
            } else if self.eat_keyword("RIGHT") {
                self.eat_keyword("OUTER");
                JoinKind::Right
            } else if self.eat_keyword("FULL") {
                self.eat_keyword("OUTER");
                JoinKind::Full
            } else if self.eat_keyword("CROSS") {
                JoinKind::Cross
            } else if self.at_keyword("JOIN") {
                JoinKind::Plain
            } else {
                self.pos = start;
                break;
            };
            self.expect_keyword("JOIN")?;
            let kind = if natural { JoinKind::Natural } else { kind };
            let relation = self.parse_table_factor()?;
            let constraint = if self.eat_keyword("ON") {
                JoinConstraint::On(self.parse_expr()?)
            } else if self.eat_keyword("USING") {
                self.expect(&TokenKind::LParen)?;
                let mut cols = Vec::new();
                loop {
                    cols.push(self.parse_ident()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(&TokenKind::RParen)?;
                JoinConstraint::Using(cols)
            } else {
                JoinConstraint::None
            };
            joins.push(Join { kind, relation, constraint });
        }
        Ok(TableWithJoins { relation, joins })
    }

    fn parse_table_factor(&mut self) -> Result<TableFactor, SqlError> {
        if self.eat(&TokenKind::LParen) {
            if self.at_keyword("SELECT") || self.at_keyword("WITH") {
                let subquery = self.parse_query()?;
                self.expect(&TokenKind::RParen)?;
                let alias = self.parse_optional_alias()?;
                return Ok(TableFactor::Derived { subquery: Box::new(subquery), alias });
            }
            let inner = self.parse_table_with_joins()?;
            self.expect(&TokenKind::RParen)?;
            return Ok(TableFactor::Nested(Box::new(inner)));
        }
        let mut name = self.parse_ident()?;
        if self.peek() == Some(&TokenKind::Dot) {
            // schema-qualified table: keep the table part
            self.pos += 1;
            name = self.parse_ident()?;
        }
        let alias = self.parse_optional_alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    pub(crate) fn parse_expr(&mut self) -> Result<Expr, SqlError> {
        self.parse_or()
    }

    fn parse_or(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_and()?;
        while self.eat_keyword("OR") {
            let right = self.parse_and()?;
            left = Expr::binary(left, BinaryOp::Or, right);
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_not()?;
        while self.eat_keyword("AND") {
            let right = self.parse_not()?;
            left = Expr::binary(left, BinaryOp::And, right);
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<Expr, SqlError> {
        if self.at_keyword("NOT") && !self.at_keyword_n(1, "EXISTS") {
            self.pos += 1;
            let inner = self.parse_not()?;
            return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(inner) });
        }
        self.parse_equality()
    }

    fn parse_equality(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_comparison()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Eq) => Some(BinaryOp::Eq),
                Some(TokenKind::DoubleEq) => Some(BinaryOp::DoubleEq),
                Some(TokenKind::NotEq) => Some(BinaryOp::NotEq),
                Some(TokenKind::LtGt) => Some(BinaryOp::LtGt),
                _ => None,
            };
            if let Some(op) = op {
                self.pos += 1;
                let right = self.parse_comparison()?;
                left = Expr::binary(left, op, right);
                continue;
            }
            if self.at_keyword("IS") {
                self.pos += 1;
                let negated = self.eat_keyword("NOT");
                if self.eat_keyword("NULL") {
                    left = Expr::IsNull { expr: Box::new(left), negated };
                } else {
                    let right = self.parse_comparison()?;
                    let op = if negated { BinaryOp::IsNot } else { BinaryOp::Is };
                    left = Expr::binary(left, op, right);
                }
                continue;
            }
            if self.eat_keyword("ISNULL") {
                left = Expr::IsNull { expr: Box::new(left), negated: false };
                continue;
            }
            if self.eat_keyword("NOTNULL") {
                left = Expr::IsNull { expr: Box::new(left), negated: true };
                continue;
            }
            let negated = self.at_keyword("NOT");
            let lookahead = if negated { 1 } else { 0 };
            if negated && self.at_keyword_n(1, "NULL") {
                self.pos += 2;
                left = Expr::IsNull { expr: Box::new(left), negated: true };
                continue;
            }
            if self.at_keyword_n(lookahead, "IN") {
                self.pos += lookahead + 1;
                self.expect(&TokenKind::LParen)?;
                if self.at_keyword("SELECT") || self.at_keyword("WITH") {
                    let q = self.parse_query()?;
                    self.expect(&TokenKind::RParen)?;
                    left = Expr::InSubquery { expr: Box::new(left), subquery: Box::new(q), negated };
                } else {
                    let mut list = Vec::new();
                    if self.peek() != Some(&TokenKind::RParen) {
                        loop {
                            list.push(self.parse_expr()?);
                            if !self.eat(&TokenKind::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(&TokenKind::RParen)?;
                    left = Expr::InList { expr: Box::new(left), list, negated };
                }
                continue;
            }
            let like_kind = if self.at_keyword_n(lookahead, "LIKE") {
                Some(LikeKind::Like)
            } else if self.at_keyword_n(lookahead, "GLOB") {
                Some(LikeKind::Glob)
            } else {
                None
            };
            if let Some(kind) = like_kind {
                self.pos += lookahead + 1;
                let pattern = self.parse_comparison()?;
                let escape =
                    if self.eat_keyword("ESCAPE") { Some(Box::new(self.parse_comparison()?)) } else { None };
                left = Expr::Like { negated, kind, expr: Box::new(left), pattern: Box::new(pattern), escape };
                continue;
            }
            if self.at_keyword_n(lookahead, "BETWEEN") {
                self.pos += lookahead + 1;
                let low = self.parse_comparison()?;
                self.expect_keyword("AND")?;
                let high = self.parse_comparison()?;
                left = Expr::Between { expr: Box::new(left), negated, low: Box::new(low), high: Box::new(high) };
                continue;
            }
            break;
        }
        Ok(left)
    }

    fn parse_comparison(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_bitwise()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Lt) => BinaryOp::Lt,
                Some(TokenKind::LtEq) => BinaryOp::LtEq,
                Some(TokenKind::Gt) => BinaryOp::Gt,
                Some(TokenKind::GtEq) => BinaryOp::GtEq,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_bitwise()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn parse_bitwise(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_additive()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Ampersand) => BinaryOp::BitAnd,
                Some(TokenKind::Pipe) => BinaryOp::BitOr,
                Some(TokenKind::ShiftLeft) => BinaryOp::ShiftLeft,
                Some(TokenKind::ShiftRight) => BinaryOp::ShiftRight,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_additive()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn parse_additive(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Plus) => BinaryOp::Plus,
                Some(TokenKind::Minus) => BinaryOp::Minus,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_multiplicative()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_concat()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Star) => BinaryOp::Mul,
                Some(TokenKind::Slash) => BinaryOp::Div,
                Some(TokenKind::Percent) => BinaryOp::Mod,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_concat()?;
            left = Expr::binary(left, op, right);
        }
        Ok(left)
    }

    fn parse_concat(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.parse_unary()?;
        while self.eat(&TokenKind::Concat) {
            let right = self.parse_unary()?;
            left = Expr::binary(left, BinaryOp::Concat, right);
        }
        Ok(left)
    }

    fn parse_unary(&mut self) -> Result<Expr, SqlError> {
        let op = match self.peek() {
            Some(TokenKind::Minus) => Some(UnaryOp::Neg),
            Some(TokenKind::Plus) => Some(UnaryOp::Plus),
            Some(TokenKind::Tilde) => Some(UnaryOp::BitNot),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Unary { op, expr: Box::new(inner) });
        }
        let mut expr = self.parse_primary()?;
        while self.eat_keyword("COLLATE") {
            let collation = self.parse_ident()?;
            expr = Expr::Collate { expr: Box::new(expr), collation };
        }
        Ok(expr)
    }

    fn parse_primary(&mut self) -> Result<Expr, SqlError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("expected expression"));
        };
        match tok {
            TokenKind::Number(n) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Number(n)))
            }
            TokenKind::String(s) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::String(s)))
            }
            TokenKind::Parameter(p) => {
                self.pos += 1;
                Ok(Expr::Parameter(p))
            }
            TokenKind::LParen => {
                self.pos += 1;
                if self.at_keyword("SELECT") || self.at_keyword("WITH") {
                    let q = self.parse_query()?;
                    self.expect(&TokenKind::RParen)?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let inner = self.parse_expr()?;
                if self.peek() == Some(&TokenKind::Comma) {
                    return Err(SqlError::Unsupported("row values".into()));
                }
                self.expect(&TokenKind::RParen)?;
                Ok(Expr::Nested(Box::new(inner)))
            }
            TokenKind::Word { ref value, quote: None } => {
                let upper = value.to_ascii_uppercase();
                match upper.as_str() {
                    "NULL" => {
                        self.pos += 1;
                        Ok(Expr::Literal(Literal::Null))
                    }
                    "TRUE" | "FALSE" | "CURRENT_DATE" | "CURRENT_TIME" | "CURRENT_TIMESTAMP"
                        if self.peek_at(1) != Some(&TokenKind::LParen) =>
                    {
                        self.pos += 1;
                        Ok(Expr::Literal(Literal::Keyword(upper)))
                    }
                    "CASE" => self.parse_case(),
                    "CAST" => self.parse_cast(),
                    "EXISTS" => {
                        self.pos += 1;
                        self.parse_exists(false)
                    }
                    "NOT" if self.at_keyword_n(1, "EXISTS") => {
                        self.pos += 2;
                        self.parse_exists(true)
                    }
                    _ if is_reserved(value) => Err(self.error("unexpected keyword")),
                    _ => self.parse_name_expr(),
                }
            }
            TokenKind::Word { .. } => self.parse_name_expr(),
            _ => Err(self.error("expected expression")),
        }
    }

    fn parse_exists(&mut self, negated: bool) -> Result<Expr, SqlError> {
        self.expect(&TokenKind::LParen)?;
        let q = self.parse_query()?;
        self.expect(&TokenKind::RParen)?;
        Ok(Expr::Exists { subquery: Box::new(q), negated })
    }

    fn parse_case(&mut self) -> Result<Expr, SqlError> {
        self.expect_keyword("CASE")?;
        let operand = if self.at_keyword("WHEN") { None } else { Some(Box::new(self.parse_expr()?)) };
        let mut branches = Vec::new();
        while self.eat_keyword("WHEN") {
            let when = self.parse_expr()?;
            self.expect_keyword("THEN")?;
            let then = self.parse_expr()?;
            branches.push((when, then));
        }
        if branches.is_empty() {
            return Err(self.error("expected WHEN"));
        }
        let else_result = if self.eat_keyword("ELSE") { Some(Box::new(self.parse_expr()?)) } else { None };
        self.expect_keyword("END")?;
        Ok(Expr::Case { operand, branches, else_result })
    }

    fn parse_cast(&mut self) -> Result<Expr, SqlError> {
        self.expect_keyword("CAST")?;
        self.expect(&TokenKind::LParen)?;
        let expr = self.parse_expr()?;
        self.expect_keyword("AS")?;
        let mut words = Vec::new();
        while let Some(TokenKind::Word { value, .. }) = self.peek() {
            words.push(value.clone());
            self.pos += 1;
        }
        if words.is_empty() {
            return Err(self.error("expected type name"));
        }
        let mut type_name = words.join(" ");
        if self.eat(&TokenKind::LParen) {
            let mut parts = Vec::new();
            loop {
                match self.advance() {
                    Some(TokenKind::Number(n)) => parts.push(n),
                    _ => return Err(self.error("expected type size")),
                }
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(&TokenKind::RParen)?;
            type_name = format!("{type_name}({})", parts.join(", "));
        }
        self.expect(&TokenKind::RParen)?;
        Ok(Expr::Cast { expr: Box::new(expr), type_name })
    }

    fn parse_name_expr(&mut self) -> Result<Expr, SqlError> {
        let first = self.parse_ident()?;
        if self.peek() == Some(&TokenKind::LParen) && first.quote.is_none() {
            return self.parse_function(first);
        }
        if self.eat(&TokenKind::Dot) {
            let second = self.parse_ident()?;
            if self.eat(&TokenKind::Dot) {
                // schema.table.column
                let third = self.parse_ident()?;
                return Ok(Expr::Column { qualifier: Some(second), name: third });
            }
            return Ok(Expr::Column { qualifier: Some(first), name: second });
        }
        Ok(Expr::Column { qualifier: None, name: first })
    }

    fn parse_function(&mut self, name: Ident) -> Result<Expr, SqlError> {
        self.expect(&TokenKind::LParen)?;
        let mut distinct = false;
        let mut star = false;
        let mut args = Vec::new();
        if self.eat(&TokenKind::Star) {
            star = true;
        } else if self.peek() != Some(&TokenKind::RParen) {
            distinct = self.eat_keyword("DISTINCT");
            loop {
                args.push(self.parse_expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(&TokenKind::RParen)?;
        if self.at_keyword("FILTER") {
            return Err(SqlError::Unsupported("aggregate FILTER clause".into()));
        }
        let over = if self.eat_keyword("OVER") {
            self.expect(&TokenKind::LParen)?;
            let mut partition_by = Vec::new();
            let mut order_by = Vec::new();
            if self.eat_keyword("PARTITION") {
                self.expect_keyword("BY")?;
                loop {
                    partition_by.push(self.parse_expr()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
            }
            if self.at_keyword("ORDER") {
                self.pos += 1;
                self.expect_keyword("BY")?;
                order_by = self.parse_order_items()?;
            }
            self.expect(&TokenKind::RParen)?;
            Some(WindowSpec { partition_by, order_by })
        } else {
            None
        };
        Ok(Expr::Function { name, distinct, args, star, over })
    }
}
