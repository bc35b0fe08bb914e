//! Tokenizer for the SQLite-flavoured SELECT dialect.

use std::fmt;

/// A lexical token with the byte offset where it starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Bare or quoted word. `quote` is the opening quote character for
    /// `"x"`, `` `x` `` and `[x]` identifiers.
    Word { value: String, quote: Option<char> },
    Number(String),
    String(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Eq,
    DoubleEq,
    NotEq,
    LtGt,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Concat,
    Ampersand,
    Pipe,
    ShiftLeft,
    ShiftRight,
    Tilde,
    /// `?`, `?NNN`, `:name`, `@name`, `$name`
    Parameter(String),
}

impl TokenKind {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, TokenKind::Word { value, quote: None } if value.eq_ignore_ascii_case(kw))
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Word { value, quote: None } => write!(f, "{value}"),
            TokenKind::Word { value, quote: Some(q) } => {
                let close = if *q == '[' { ']' } else { *q };
                write!(f, "{q}{value}{close}")
            }
            TokenKind::Number(n) => write!(f, "{n}"),
            TokenKind::String(s) => write!(f, "'{}'", s.replace('\'', "''")),
            TokenKind::LParen => f.write_str("("),
            TokenKind::RParen => f.write_str(")"),
            TokenKind::Comma => f.write_str(","),
            TokenKind::Dot => f.write_str("."),
            TokenKind::Semicolon => f.write_str(";"),
            TokenKind::Star => f.write_str("*"),
            TokenKind::Plus => f.write_str("+"),
            TokenKind::Minus => f.write_str("-"),
            TokenKind::Slash => f.write_str("/"),
            TokenKind::Percent => f.write_str("%"),
            TokenKind::Eq => f.write_str("="),
            TokenKind::DoubleEq => f.write_str("=="),
            TokenKind::NotEq => f.write_str("!="),
            TokenKind::LtGt => f.write_str("<>"),
            TokenKind::Lt => f.write_str("<"),
            TokenKind::LtEq => f.write_str("<="),
            TokenKind::Gt => f.write_str(">"),
            TokenKind::GtEq => f.write_str(">="),
            TokenKind::Concat => f.write_str("||"),
            TokenKind::Ampersand => f.write_str("&"),
            TokenKind::Pipe => f.write_str("|"),
            TokenKind::ShiftLeft => f.write_str("<<"),
            TokenKind::ShiftRight => f.write_str(">>"),
            TokenKind::Tilde => f.write_str("~"),
            TokenKind::Parameter(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at byte {offset}")]
pub struct LexError {
    pub message: String,
    pub offset: usize,
}

/// Splits SQL text into tokens, dropping whitespace and comments.
pub fn tokenize(sql: &str) -> Result<Vec<Token>, LexError> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' | 0x0c => {
                i += 1;
                continue;
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        i = bytes.len();
                        break;
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
                continue;
            }
            b'\'' => {
                let (value, end) = read_quoted(sql, i, b'\'', b'\'')?;
                tokens.push(Token { kind: TokenKind::String(value), offset: start });
                i = end;
                continue;
            }
            b'"' | b'`' => {
                let (value, end) = read_quoted(sql, i, c, c)?;
                tokens.push(Token {
                    kind: TokenKind::Word { value, quote: Some(c as char) },
                    offset: start,
                });
                i = end;
                continue;
            }
            b'[' => {
                let close = sql[i + 1..].find(']').ok_or_else(|| LexError {
                    message: "unterminated bracket identifier".into(),
                    offset: start,
                })?;
                let value = sql[i + 1..i + 1 + close].to_string();
                tokens.push(Token { kind: TokenKind::Word { value, quote: Some('[') }, offset: start });
                i = i + close + 2;
                continue;
            }
            b'0'..=b'9' => {
                i = read_number(bytes, i);
                tokens.push(Token { kind: TokenKind::Number(sql[start..i].to_string()), offset: start });
                continue;
            }
            b'.' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i = read_number(bytes, i);
                tokens.push(Token { kind: TokenKind::Number(sql[start..i].to_string()), offset: start });
                continue;
            }
            b'?' | b':' | b'@' | b'$' => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Parameter(sql[start..i].to_string()), offset: start });
                continue;
            }
            _ => {}
        }
        if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 {
            while i < bytes.len()
                && (bytes[i] == b'_' || bytes[i] == b'$' || bytes[i].is_ascii_alphanumeric() || bytes[i] >= 0x80)
            {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Word { value: sql[start..i].to_string(), quote: None },
                offset: start,
            });
            continue;
        }
        let next = bytes.get(i + 1).copied();
        let (kind, len) = match (c, next) {
            (b'(', _) => (TokenKind::LParen, 1),
            (b')', _) => (TokenKind::RParen, 1),
            (b',', _) => (TokenKind::Comma, 1),
            (b'.', _) => (TokenKind::Dot, 1),
            (b';', _) => (TokenKind::Semicolon, 1),
            (b'*', _) => (TokenKind::Star, 1),
            (b'+', _) => (TokenKind::Plus, 1),
            (b'-', _) => (TokenKind::Minus, 1),
            (b'/', _) => (TokenKind::Slash, 1),
            (b'%', _) => (TokenKind::Percent, 1),
            (b'=', Some(b'=')) => (TokenKind::DoubleEq, 2),
            (b'=', _) => (TokenKind::Eq, 1),
            (b'!', Some(b'=')) => (TokenKind::NotEq, 2),
            (b'<', Some(b'>')) => (TokenKind::LtGt, 2),
            (b'<', Some(b'=')) => (TokenKind::LtEq, 2),
            (b'<', Some(b'<')) => (TokenKind::ShiftLeft, 2),
            (b'<', _) => (TokenKind::Lt, 1),
            (b'>', Some(b'=')) => (TokenKind::GtEq, 2),
            (b'>', Some(b'>')) => (TokenKind::ShiftRight, 2),
            (b'>', _) => (TokenKind::Gt, 1),
            (b'|', Some(b'|')) => (TokenKind::Concat, 2),
            (b'|', _) => (TokenKind::Pipe, 1),
            (b'&', _) => (TokenKind::Ampersand, 1),
            (b'~', _) => (TokenKind::Tilde, 1),
            _ => {
                let ch = sql[i..].chars().next().unwrap_or('?');
                return Err(LexError { message: format!("unexpected character {ch:?}"), offset: start });
            }
        };
        tokens.push(Token { kind, offset: start });
        i += len;
    }
    Ok(tokens)
}

fn read_quoted(sql: &str, start: usize, open: u8, close: u8) -> Result<(String, usize), LexError> {
    let bytes = sql.as_bytes();
    debug_assert_eq!(bytes[start], open);
    let mut out = String::new();
    let mut i = start + 1;
    let mut seg = i;
    while i < bytes.len() {
        if bytes[i] == close {
            if bytes.get(i + 1) == Some(&close) {
                out.push_str(&sql[seg..=i]);
                i += 2;
                seg = i;
                continue;
            }
            out.push_str(&sql[seg..i]);
            return Ok((out, i + 1));
        }
        i += 1;
    }
    Err(LexError { message: "unterminated quoted token".into(), offset: start })
}

fn read_number(bytes: &[u8], mut i: usize) -> usize {
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X')) {
        i += 2;
        while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}
