//! Schema linking, symbolic plan synthesis, evaluation and hallucination
//! auditing for text-to-SQL over SQLite databases.
//!
//! The two stages are separate modules. [`tasl`] turns a question into a
//! linked schema by way of a throwaway SQL draft. [`talog`] asks for a
//! dataframe-style plan over that schema and compiles it to SQL.

pub mod audit;
pub mod dataset;
pub mod eval;
pub mod llm;
pub mod materialize;
pub mod pipeline;
pub mod schema;
pub mod sql;
pub mod talog;
pub mod tasl;

pub use audit::{AuditReport, Category};
pub use dataset::{Corpus, Difficulty, KnowledgeMode, Source, TaskExample};
pub use eval::{EvalReport, ExVerdict, SchemaLinkingScore};
pub use llm::{DecodingConfig, GatewayError, GatewayMode, LlmGateway, PromptBundle, ResponseCache};
pub use schema::{ColumnRef, JoinGraph, Name, SchemaCatalog};
pub use sql::{parse_sql, LinkedSchema, SqlAst};
pub use talog::{CompiledQuery, SymbolicPlan};
