//! SQL parsing and schema-entity extraction for the SQLite SELECT subset
//! used by BIRD and Spider.

pub mod ast;
mod extract;
pub mod lexer;
mod parser;

pub use ast::Query as SqlAst;
pub use extract::{
    extract_schema_entities, ground_truth_schema, ConditionLiteral, ConditionOp, ConditionValue, Extraction,
    LinkedSchema, UnresolvedRef,
};
pub use parser::{is_reserved, parse_sql};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SqlError {
    #[error("SQL syntax error at byte {offset}: {message}")]
    Parse { message: String, offset: usize },
    #[error("unsupported SQL: {0}")]
    Unsupported(String),
}

/// Gold SQL that cannot serve as a ground-truth schema.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GoldSchemaError {
    #[error("gold SQL does not parse: {0}")]
    Parse(#[from] SqlError),
    #[error("gold SQL references unknown entities: {}", .0.join(", "))]
    Unresolved(Vec<String>),
}
