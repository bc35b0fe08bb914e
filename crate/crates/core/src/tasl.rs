//! Schema linking through a throwaway "dummy" SQL query.
//!
//! The model is asked for plain SQL, a task it has seen plenty of. The query
//! is never executed; only the schema entities it mentions are kept.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{GatewayError, LlmGateway, PromptBundle};
use crate::schema::{SchemaCatalog, SchemaDictionary};
use crate::sql::{extract_schema_entities, parse_sql, LinkedSchema, UnresolvedRef};

const INSTRUCTION: &str = include_str!("../prompts/dummy_sql_instruction.txt");
const INPUT_TEMPLATE: &str = include_str!("../prompts/dummy_sql_input.txt");

#[derive(Debug, thiserror::Error)]
pub enum TaslError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummySqlResult {
    pub raw_response: String,
    pub extracted_sql: String,
    pub linked: LinkedSchema,
    /// Entities the dummy SQL mentioned that the catalog does not have.
    pub unresolved: Vec<UnresolvedRef>,
    pub parse_ok: bool,
    /// Set when `linked` is the whole catalog because nothing usable came back.
    pub fallback: bool,
}

/// `evidence = "..."` line, or nothing.
fn evidence_line(evidence: Option<&str>) -> String {
    match evidence.map(str::trim).filter(|e| !e.is_empty()) {
        Some(e) => format!("evidence = {}\n", json_str(e)),
        None => String::new(),
    }
}

pub(crate) fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Zero-shot prompt. `evidence` must already be `None` when external
/// knowledge is switched off.
pub fn build_dummy_sql_prompt(
    question: &str,
    evidence: Option<&str>,
    schema_dict: &SchemaDictionary,
) -> Result<PromptBundle, TaslError> {
    if schema_dict.is_empty() {
        return Err(TaslError::Precondition("schema dictionary is empty; the database has no columns".into()));
    }
    let input = INPUT_TEMPLATE
        .replace("{schema_dictionary}", &schema_dict.render())
        .replace("{question}", &json_str(question.trim()))
        .replace("{evidence}", &evidence_line(evidence));
    Ok(PromptBundle::zero_shot(INSTRUCTION, input))
}

fn statement_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:SELECT\b|WITH\s+[A-Za-z_`\x22\[][^\n]*?\bAS\s*\()").expect("valid regex"))
}

/// Pulls the first SELECT/WITH statement out of a model response, dropping
/// code fences and surrounding prose. Returns the trimmed response when no
/// statement is found.
pub fn extract_sql_from_response(raw: &str) -> String {
    let body = fenced_block(raw).unwrap_or(raw);
    let Some(m) = statement_start().find(body) else { return raw.trim().to_string() };
    let rest = &body[m.start()..];
    let end = statement_end(rest);
    rest[..end].trim().to_string()
}

fn fenced_block(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    let close = body.find("```").unwrap_or(body.len());
    Some(&body[..close])
}

/// End of the statement: just past the first `;` outside quotes, or the
/// first blank line, or the end of text.
fn statement_end(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut quote: Option<u8> = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None => match b {
                b'\'' | b'"' | b'`' => quote = Some(b),
                b';' => return i + 1,
                b'\n' if text[i + 1..].trim_start_matches([' ', '\t', '\r']).starts_with('\n') => return i,
                _ => {}
            },
        }
        i += 1;
    }
    text.len()
}

/// Builds the prompt, asks the gateway, and extracts entities from the reply.
/// Falls back to the full catalog when the reply does not parse or links
/// nothing, so recall never drops below that of the unlinked schema.
pub fn link_schema(
    question: &str,
    evidence: Option<&str>,
    catalog: &SchemaCatalog,
    schema_dict: &SchemaDictionary,
    gateway: &LlmGateway,
) -> Result<DummySqlResult, TaslError> {
    let prompt = build_dummy_sql_prompt(question, evidence, schema_dict)?.assemble();
    let raw_response = gateway.complete(&prompt)?;
    Ok(link_from_response(raw_response, catalog))
}

/// The deterministic half of [`link_schema`].
pub fn link_from_response(raw_response: String, catalog: &SchemaCatalog) -> DummySqlResult {
    let extracted_sql = extract_sql_from_response(&raw_response);
    match parse_sql(&extracted_sql) {
        Ok(ast) => {
            let ex = extract_schema_entities(&ast, catalog);
            let fallback = ex.linked.columns.is_empty();
            let linked = if fallback { LinkedSchema::full_catalog(catalog) } else { ex.linked };
            DummySqlResult { raw_response, extracted_sql, linked, unresolved: ex.unresolved, parse_ok: true, fallback }
        }
        Err(e) => {
            log::debug!("dummy SQL did not parse: {e}");
            DummySqlResult {
                raw_response,
                extracted_sql,
                linked: LinkedSchema::full_catalog(catalog),
                unresolved: Vec::new(),
                parse_ok: false,
                fallback: true,
            }
        }
    }
}
