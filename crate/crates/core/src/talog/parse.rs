//! Reader for the symbolic plan language.
//!
//! Only lines shaped like `name = frame.call(` are treated as plan lines.
//! Everything else (prose, fences, comments) is skipped, and text after the
//! `res` line is ignored.

use std::sync::OnceLock;

use regex::Regex;

use super::plan::*;
use crate::schema::ColumnRef;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanParseError {
    #[error("no symbolic plan line found")]
    NoPlan,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown function `{name}`")]
    UnknownFunction { line: usize, name: String },
    #[error("plan never binds `res`")]
    MissingResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPlan {
    pub plan: SymbolicPlan,
    pub warnings: Vec<String>,
}

pub fn parse_symbolic(text: &str) -> Result<SymbolicPlan, PlanParseError> {
    parse_symbolic_with_warnings(text).map(|p| p.plan)
}

fn line_shape() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*[A-Za-z_]\w*\s*=\s*[A-Za-z_]\w*\s*\.\s*[A-Za-z_]\w*\s*\(").expect("valid regex"))
}

pub fn parse_symbolic_with_warnings(text: &str) -> Result<ParsedPlan, PlanParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut steps = Vec::new();
    let mut warnings = Vec::new();
    let mut i = 0;
    let mut finished = false;
    while i < lines.len() {
        let line_no = i + 1;
        let line = lines[i];
        i += 1;
        let trimmed = line.trim();
        if finished {
            if !trimmed.is_empty() && !trimmed.starts_with("```") {
                warnings.push(format!("line {line_no}: ignored text after `res`"));
            }
            continue;
        }
        if !line_shape().is_match(line) {
            if !(trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("```")) {
                warnings.push(format!("line {line_no}: not a plan line, skipped"));
            }
            continue;
        }
        // A call may wrap onto following lines; join until parentheses balance.
        let mut source = line.to_string();
        while paren_depth(&source) > 0 && i < lines.len() {
            source.push(' ');
            source.push_str(lines[i]);
            i += 1;
        }
        let tokens = lex(&source).map_err(|message| PlanParseError::Syntax { line: line_no, message })?;
        let mut p = Parser { tokens, pos: 0, line: line_no };
        let step = p.step()?;
        finished = step.binding == RESULT_FRAME;
        steps.push(step);
    }
    if steps.is_empty() {
        return Err(PlanParseError::NoPlan);
    }
    if !finished {
        return Err(PlanParseError::MissingResult);
    }
    Ok(ParsedPlan { plan: SymbolicPlan { steps }, warnings })
}

fn paren_depth(text: &str) -> i32 {
    let mut depth = 0;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in text.chars() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' && q != '`' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' | '`' => quote = Some(c),
            '(' => depth += 1,
            ')' => depth -= 1,
            '#' => break,
            _ => {}
        }
    }
    depth
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    /// Backtick-quoted identifier.
    Quoted(String),
    Str(String),
    Num(String),
    Sym(&'static str),
}

const SYMBOLS: [&str; 17] = ["==", "!=", "<>", "<=", ">=", "(", ")", ",", ".", "=", "<", ">", "+", "-", "*", "/", "%"];

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c == '_' || c.is_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i] == '_' || chars[i].is_alphanumeric()) {
                i += 1;
            }
            out.push(Tok::Word(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit) && !prev_is_operand(&out)) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Tok::Num(chars[start..i].iter().collect()));
        } else if c == '\'' || c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                let Some(&ch) = chars.get(i) else { return Err("unterminated string".into()) };
                i += 1;
                if ch == c {
                    break;
                }
                if ch == '\\' {
                    let Some(&esc) = chars.get(i) else { return Err("unterminated string".into()) };
                    i += 1;
                    s.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                } else {
                    s.push(ch);
                }
            }
            out.push(Tok::Str(s));
        } else if c == '`' {
            let mut s = String::new();
            i += 1;
            loop {
                let Some(&ch) = chars.get(i) else { return Err("unterminated quoted identifier".into()) };
                i += 1;
                if ch == '`' {
                    if chars.get(i) == Some(&'`') {
                        s.push('`');
                        i += 1;
                        continue;
                    }
                    break;
                }
                s.push(ch);
            }
            out.push(Tok::Quoted(s));
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                return Err(format!("unexpected character `{c}`"));
            };
            i += sym.chars().count();
            out.push(Tok::Sym(sym));
        }
    }
    Ok(out)
}

fn prev_is_operand(out: &[Tok]) -> bool {
    matches!(out.last(), Some(Tok::Word(_) | Tok::Quoted(_) | Tok::Sym(")")))
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    line: usize,
}

type PResult<T> = Result<T, PlanParseError>;

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(PlanParseError::Syntax { line: self.line, message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + n)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x.eq_ignore_ascii_case(w))
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of line".into(),
            Some(Tok::Word(w)) => format!("`{w}`"),
            Some(Tok::Quoted(w)) => format!("`{w}`"),
            Some(Tok::Str(s)) => format!("string '{s}'"),
            Some(Tok::Num(n)) => format!("number {n}"),
            Some(Tok::Sym(s)) => format!("`{s}`"),
        }
    }

    fn word(&mut self) -> PResult<String> {
        match self.next() {
            Some(Tok::Word(w)) => Ok(w),
            _ => {
                self.pos -= 1;
                self.err(format!("expected a name, found {}", self.describe()))
            }
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.next() {
            Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => Ok(w),
            _ => {
                self.pos -= 1;
                self.err(format!("expected an identifier, found {}", self.describe()))
            }
        }
    }

    fn step(&mut self) -> PResult<Step> {
        let binding = self.word()?;
        self.expect_sym("=")?;
        let source = self.word()?;
        let mut ops = Vec::new();
        while self.eat_sym(".") {
            ops.push(self.call()?);
        }
        if self.peek().is_some() {
            return self.err(format!("unexpected {} after the last call", self.describe()));
        }
        if ops.is_empty() {
            return self.err("expected at least one call");
        }
        Ok(Step { binding, source, ops })
    }

    /// True when the next tokens are `name =` but not `name ==`.
    fn at_named(&self, name: &str) -> bool {
        self.is_word(name) && matches!(self.peek_at(1), Some(Tok::Sym("=")))
    }

    fn call(&mut self) -> PResult<StepOp> {
        let name = self.word()?;
        self.expect_sym("(")?;
        let op = match name.to_ascii_lowercase().as_str() {
            "where" => self.where_args()?,
            "orderby" | "order_by" | "sort_values" => self.orderby_args()?,
            "limit" | "head" => {
                if self.at_named("n") {
                    self.pos += 2;
                }
                match self.next() {
                    Some(Tok::Num(n)) => match n.parse::<u64>() {
                        Ok(v) if v > 0 => StepOp::Limit(v),
                        _ => return self.err(format!("limit needs a positive integer, got {n}")),
                    },
                    _ => {
                        self.pos -= 1;
                        return self.err("limit needs a positive integer");
                    }
                }
            }
            "groupby" | "group_by" => {
                if self.at_named("by") {
                    self.pos += 2;
                }
                StepOp::GroupBy(self.expr_list()?)
            }
            "select" => StepOp::Select(self.expr_list()?),
            "count" => StepOp::Count,
            _ => return Err(PlanParseError::UnknownFunction { line: self.line, name }),
        };
        self.expect_sym(")")?;
        Ok(op)
    }

    fn expr_list(&mut self) -> PResult<Vec<PlanExpr>> {
        let mut items = vec![self.expr()?];
        while self.eat_sym(",") {
            items.push(self.expr()?);
        }
        Ok(items)
    }

    fn where_args(&mut self) -> PResult<StepOp> {
        let mut element = None;
        let mut filter = None;
        let mut positional = 0;
        loop {
            if self.at_named("element") {
                self.pos += 2;
                element = Some(self.expr()?);
            } else if self.at_named("filter") {
                self.pos += 2;
                filter = Some(self.predicate(true)?);
            } else if positional == 0 && element.is_none() {
                element = Some(self.expr()?);
                positional += 1;
            } else if filter.is_none() {
                filter = Some(self.predicate(true)?);
                positional += 1;
            } else {
                return self.err(format!("unexpected {} in where", self.describe()));
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        match (element, filter) {
            (Some(element), Some(filter)) => Ok(StepOp::Where { element, filter }),
            _ => self.err("where needs both element and filter"),
        }
    }

    fn orderby_args(&mut self) -> PResult<StepOp> {
        if self.at_named("by") {
            self.pos += 2;
        }
        let by = self.expr()?;
        let mut direction = Direction::Asc;
        while self.eat_sym(",") {
            if self.eat_word("desc") || self.eat_word("descending") {
                direction = Direction::Desc;
            } else if self.eat_word("asc") || self.eat_word("ascending") && !self.is_sym("=") {
                direction = Direction::Asc;
            } else if self.at_named("ascending") {
                self.pos += 2;
                let v = self.word()?;
                direction = if v.eq_ignore_ascii_case("false") { Direction::Desc } else { Direction::Asc };
            } else {
                return self.err(format!("expected asc or desc, found {}", self.describe()));
            }
        }
        Ok(StepOp::OrderBy { by, direction })
    }

    /// Predicate after an element. In a `filter =` position a bare value
    /// means equality.
    fn predicate(&mut self, bare_value_ok: bool) -> PResult<Predicate> {
        let compare = match self.peek() {
            Some(Tok::Sym("=" | "==")) => Some(CompareOp::Eq),
            Some(Tok::Sym("!=" | "<>")) => Some(CompareOp::NotEq),
            Some(Tok::Sym("<")) => Some(CompareOp::Lt),
            Some(Tok::Sym("<=")) => Some(CompareOp::LtEq),
            Some(Tok::Sym(">")) => Some(CompareOp::Gt),
            Some(Tok::Sym(">=")) => Some(CompareOp::GtEq),
            _ => None,
        };
        if let Some(op) = compare {
            self.pos += 1;
            return Ok(Predicate::Compare { op, value: self.expr()? });
        }
        let negated = self.is_word("not") && matches!(self.peek_at(1), Some(Tok::Word(w)) if w.eq_ignore_ascii_case("like") || w.eq_ignore_ascii_case("in"));
        if negated {
            self.pos += 1;
        }
        if self.eat_word("like") {
            return Ok(Predicate::Like { negated, pattern: self.expr()? });
        }
        if self.eat_word("in") {
            self.expect_sym("(")?;
            let values = self.expr_list()?;
            self.expect_sym(")")?;
            return Ok(Predicate::In { negated, values });
        }
        if self.eat_word("is") {
            let negated = self.eat_word("not");
            if !self.eat_word("null") && !self.eat_word("none") {
                return self.err("expected null after is");
            }
            return Ok(Predicate::IsNull { negated });
        }
        if self.eat_word("between") {
            let low = self.expr()?;
            if !self.eat_word("and") {
                return self.err("expected and in between");
            }
            let high = self.expr()?;
            return Ok(Predicate::Between { low, high });
        }
        if bare_value_ok {
            return Ok(Predicate::Compare { op: CompareOp::Eq, value: self.expr()? });
        }
        self.err(format!("expected a comparison, found {}", self.describe()))
    }

    fn condition(&mut self) -> PResult<Condition> {
        let mut left = self.condition_and()?;
        while self.eat_word("or") {
            let right = self.condition_and()?;
            left = Condition::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn condition_and(&mut self) -> PResult<Condition> {
        let mut left = self.condition_atom()?;
        while self.eat_word("and") {
            let right = self.condition_atom()?;
            left = Condition::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn condition_atom(&mut self) -> PResult<Condition> {
        if self.is_sym("(") {
            let saved = self.pos;
            self.pos += 1;
            if let Ok(inner) = self.condition() {
                if self.eat_sym(")") {
                    return Ok(inner);
                }
            }
            self.pos = saved;
        }
        let element = self.expr()?;
        let predicate = self.predicate(false)?;
        Ok(Condition::Test { element, predicate })
    }

    fn expr(&mut self) -> PResult<PlanExpr> {
        let mut left = self.term()?;
        loop {
            let op = if self.eat_sym("+") {
                ArithOp::Add
            } else if self.eat_sym("-") {
                ArithOp::Sub
            } else {
                break;
            };
            let right = self.term()?;
            left = PlanExpr::arith(left, op, right);
        }
        Ok(left)
    }

    fn term(&mut self) -> PResult<PlanExpr> {
        let mut left = self.primary()?;
        loop {
            let op = if self.eat_sym("*") {
                ArithOp::Mul
            } else if self.eat_sym("/") {
                ArithOp::Div
            } else {
                break;
            };
            let right = self.primary()?;
            left = PlanExpr::arith(left, op, right);
        }
        Ok(left)
    }

    fn primary(&mut self) -> PResult<PlanExpr> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(PlanExpr::Number(n)),
            Some(Tok::Sym("-")) => match self.next() {
                Some(Tok::Num(n)) => Ok(PlanExpr::Number(format!("-{n}"))),
                _ => {
                    self.pos -= 1;
                    self.err("unary minus only applies to numbers")
                }
            },
            Some(Tok::Str(s)) => Ok(PlanExpr::Text(s)),
            Some(Tok::Sym("(")) => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Word(w)) if self.is_sym("(") => {
                self.pos += 1;
                self.function(None, w)
            }
            Some(tok @ (Tok::Word(_) | Tok::Quoted(_))) => {
                let first = match tok {
                    Tok::Word(w) | Tok::Quoted(w) => w,
                    _ => unreachable!(),
                };
                if !self.eat_sym(".") {
                    return self.err(format!("expected table.column, found bare `{first}`"));
                }
                let second = self.ident()?;
                if self.eat_sym("(") {
                    return self.function(Some(first), second);
                }
                Ok(PlanExpr::Column(ColumnRef::new(first, second)))
            }
            _ => {
                self.pos -= 1;
                self.err(format!("expected an expression, found {}", self.describe()))
            }
        }
    }

    /// Called with the opening parenthesis consumed.
    fn function(&mut self, frame: Option<String>, name: String) -> PResult<PlanExpr> {
        if frame.is_none() {
            match name.to_ascii_lowercase().as_str() {
                "cast" => {
                    let expr = self.expr()?;
                    if !(self.eat_sym(",") || self.eat_word("as")) {
                        return self.err("expected `,` in cast");
                    }
                    let ty_name = self.word()?;
                    let Some(ty) = CastType::from_name(&ty_name) else {
                        return self.err(format!("unknown cast type `{ty_name}`"));
                    };
                    self.expect_sym(")")?;
                    return Ok(PlanExpr::Cast { expr: Box::new(expr), ty });
                }
                "case_when" => {
                    let condition = self.condition()?;
                    self.expect_sym(",")?;
                    let then = self.expr()?;
                    self.expect_sym(",")?;
                    let otherwise = self.expr()?;
                    self.expect_sym(")")?;
                    return Ok(PlanExpr::CaseWhen {
                        condition: Box::new(condition),
                        then: Box::new(then),
                        otherwise: Box::new(otherwise),
                    });
                }
                _ => {}
            }
        }
        let Some(func) = AggFunc::from_name(&name) else {
            return Err(PlanParseError::UnknownFunction { line: self.line, name });
        };
        let distinct = self.eat_word("distinct");
        let arg = if self.eat_sym(")") {
            None
        } else if self.is_sym("*") && matches!(self.peek_at(1), Some(Tok::Sym(")"))) {
            self.pos += 2;
            None
        } else {
            let a = self.expr()?;
            self.expect_sym(")")?;
            Some(Box::new(a))
        };
        if arg.is_none() && (func != AggFunc::Count || distinct) {
            return self.err(format!("{} needs an argument", func.name()));
        }
        Ok(PlanExpr::Aggregate { func, distinct, arg, frame })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CASE1: &str = "df1 = df.where(element = schools.StatusType, filter = 'Active')\n\
        df2 = df1.orderby(by = satscores.AvgScrRead, desc).limit(1)\n\
        res = df2.select(schools.District)";

    pub(crate) const CASE2: &str = "df1 = df.where(element = transactions_1k.Date, filter = '2012-08-25')\n\
        df2 = df1.where(element = customers.Currency, filter = 'EUR')\n\
        res = df.select(cast(df2.count(), real) * 100 / df1.count())";

    #[test]
    fn worked_case_one() {
        let plan = parse_symbolic(CASE1).unwrap();
        assert_eq!(plan.steps.len(), 3);
        assert_eq!(
            plan.steps[0].ops,
            [StepOp::Where {
                element: PlanExpr::column("schools", "StatusType"),
                filter: Predicate::Compare { op: CompareOp::Eq, value: PlanExpr::text("Active") },
            }]
        );
        assert_eq!(
            plan.steps[1].ops,
            [StepOp::OrderBy { by: PlanExpr::column("satscores", "AvgScrRead"), direction: Direction::Desc }, StepOp::Limit(1)]
        );
        assert_eq!(plan.steps[2].binding, "res");
        assert_eq!(plan.steps[2].ops, [StepOp::Select(vec![PlanExpr::column("schools", "District")])]);
    }

    #[test]
    fn worked_case_two() {
        let plan = parse_symbolic(CASE2).unwrap();
        let expected = PlanExpr::arith(
            PlanExpr::arith(
                PlanExpr::Cast { expr: Box::new(PlanExpr::count_of("df2")), ty: CastType::Real },
                ArithOp::Mul,
                PlanExpr::number(100),
            ),
            ArithOp::Div,
            PlanExpr::count_of("df1"),
        );
        assert_eq!(plan.steps[2].source, "df");
        assert_eq!(plan.steps[2].ops, [StepOp::Select(vec![expected])]);
    }

    #[test]
    fn unknown_call_is_named() {
        assert_eq!(
            parse_symbolic("df1 = df.explode(x)"),
            Err(PlanParseError::UnknownFunction { line: 1, name: "explode".into() })
        );
        assert!(matches!(
            parse_symbolic("res = df.select(divide(t.a, t.b))"),
            Err(PlanParseError::UnknownFunction { name, .. }) if name == "divide"
        ));
    }

    #[test]
    fn prose_only_has_no_plan() {
        assert_eq!(parse_symbolic("I think the answer is 42."), Err(PlanParseError::NoPlan));
        assert_eq!(parse_symbolic("df1 = df.where(element = t.a, filter = 1)"), Err(PlanParseError::MissingResult));
    }

    #[test]
    fn prose_fences_and_trailers_are_skipped() {
        let text = format!("Here is the plan:\n```python\n{CASE1}\n```\nSQL: SELECT DIVIDE(1, 2)\n");
        let parsed = parse_symbolic_with_warnings(&text).unwrap();
        assert_eq!(parsed.plan, parse_symbolic(CASE1).unwrap());
        assert!(parsed.warnings.iter().any(|w| w.contains("after `res`")));
    }

    #[test]
    fn operator_filters_and_wrapped_lines() {
        let plan = parse_symbolic(
            "df1 = df.where(element = t.a, filter = >= 10).where(element = t.b, filter = not in ('x', \"y\"))\n\
             res = df1.select(\n    t.a,\n    case_when(t.c like 'A%' and (t.d is null or t.e between 1 and 2), 1, 0)\n)",
        )
        .unwrap();
        assert_eq!(plan.steps.len(), 2);
        match &plan.steps[0].ops[1] {
            StepOp::Where { filter: Predicate::In { negated: true, values }, .. } => assert_eq!(values.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quoted_identifiers_and_render_round_trip() {
        let text = "df1 = df.where(element = frpm.`Free Meal Count (K-12)`, filter = > 0.5)\n\
                    df2 = df1.groupby(frpm.`County Name`).orderby(by = df1.sum(frpm.Enrollment), desc).limit(3)\n\
                    res = df2.select(frpm.`County Name`, count(distinct frpm.CDSCode), 2 - (3 - -1.5), 'it\\'s')\n";
        let plan = parse_symbolic(text).unwrap();
        let rendered = render_symbolic(&plan);
        let reparsed = parse_symbolic(&rendered).unwrap();
        assert_eq!(plan, reparsed);
        assert_eq!(render_symbolic(&reparsed), rendered);
    }

    #[test]
    fn bad_limit() {
        assert!(matches!(parse_symbolic("res = df.limit(0)"), Err(PlanParseError::Syntax { .. })));
    }
}
