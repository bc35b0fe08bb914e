//! Few-shot prompt for symbolic plans, and the prompt → plan → SQL loop.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::compile::{compile_plan, CompileError, CompiledQuery};
use super::parse::{parse_symbolic_with_warnings, PlanParseError};
use super::plan::SymbolicPlan;
use super::validate::{validate_plan, Severity, ValidationIssue};
use crate::llm::{Demonstration, GatewayError, LlmGateway, PromptBundle};
use crate::schema::{compose_full_description, ColumnRef, JoinGraph, SchemaCatalog};
use crate::sql::LinkedSchema;
use crate::tasl::{extract_sql_from_response, json_str, TaslError};

const INSTRUCTION: &str = include_str!("../../prompts/synthesis_instruction.txt");
const INPUT_TEMPLATE: &str = include_str!("../../prompts/synthesis_input.txt");
const DEMOS_JSON: &str = include_str!("../../prompts/synthesis_demos.json");

/// Appended to the prompt on the retry after an unparsable answer.
pub const RETRY_REMINDER: &str =
    "# Reminder: emit only symbolic lines of the form `name = frame.call(...)`, ending with `res = ...`. No prose, no SQL.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisDemo {
    pub question: String,
    #[serde(default)]
    pub evidence: String,
    pub schema_snippet: String,
    pub symbolic_plan: String,
}

/// The six shipped demonstrations.
pub fn shipped_demos() -> &'static [SynthesisDemo] {
    static DEMOS: OnceLock<Vec<SynthesisDemo>> = OnceLock::new();
    DEMOS.get_or_init(|| serde_json::from_str(DEMOS_JSON).expect("shipped demonstrations are valid JSON"))
}

fn render_input(schema: &str, question: &str, evidence: Option<&str>) -> String {
    let evidence = match evidence.map(str::trim).filter(|e| !e.is_empty()) {
        Some(e) => format!("evidence = {}\n", json_str(e)),
        None => String::new(),
    };
    INPUT_TEMPLATE
        .replace("{schema}", schema)
        .replace("{question}", &json_str(question.trim()))
        .replace("{evidence}", &evidence)
}

/// Linked columns plus the foreign-key columns between linked tables, in
/// catalog order.
pub fn synthesis_schema_columns(linked: &LinkedSchema, catalog: &SchemaCatalog) -> Vec<ColumnRef> {
    let mut keys: BTreeSet<String> = linked.column_keys();
    let tables: BTreeSet<String> = linked
        .tables
        .iter()
        .map(|t| t.canonical())
        .chain(linked.columns.iter().map(|c| c.table.canonical()))
        .collect();
    for fk in &catalog.foreign_keys {
        if tables.contains(&fk.from.table.canonical()) && tables.contains(&fk.to.table.canonical()) {
            keys.insert(fk.from.canonical_key());
            keys.insert(fk.to.canonical_key());
        }
    }
    catalog.column_refs().into_iter().filter(|c| keys.contains(&c.canonical_key())).collect()
}

fn render_schema(columns: &[ColumnRef], catalog: &SchemaCatalog) -> String {
    let mut out = String::from("{\n");
    for c in columns {
        let def = catalog.column_def(c).expect("column from catalog");
        let desc = def.succinct_description.clone().unwrap_or_else(|| compose_full_description(def));
        out.push_str(&format!("    {}: {},\n", json_str(&c.to_string()), json_str(&desc)));
    }
    out.push('}');
    out
}

pub fn build_synthesis_prompt(
    question: &str,
    evidence: Option<&str>,
    linked: &LinkedSchema,
    catalog: &SchemaCatalog,
    demos: &[SynthesisDemo],
) -> Result<PromptBundle, TaslError> {
    if linked.is_empty() {
        return Err(TaslError::Precondition("linked schema is empty".into()));
    }
    let columns = synthesis_schema_columns(linked, catalog);
    if columns.is_empty() {
        return Err(TaslError::Precondition("linked schema names no catalog columns".into()));
    }
    let demonstrations = demos
        .iter()
        .map(|d| Demonstration {
            input: render_input(&d.schema_snippet, &d.question, Some(&d.evidence)),
            output: d.symbolic_plan.clone(),
        })
        .collect();
    Ok(PromptBundle {
        instruction: INSTRUCTION.trim_end().to_string(),
        demonstrations,
        input: render_input(&render_schema(&columns, catalog), question, evidence),
    })
}

/// Everything produced along the way, successful or not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTrace {
    pub responses: Vec<String>,
    /// SQL the model wrote next to its plan; kept for inspection only.
    pub response_sql: Option<String>,
    pub plan_text: Option<String>,
    pub parse_warnings: Vec<String>,
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub plan: SymbolicPlan,
    pub compiled: CompiledQuery,
    pub trace: SynthesisTrace,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Prompt(#[from] TaslError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no usable plan after retry: {error}")]
    Parse { error: PlanParseError, trace: SynthesisTrace },
    #[error("plan failed validation: {}", summarize(.trace))]
    Invalid { plan: SymbolicPlan, trace: SynthesisTrace },
    #[error("plan did not compile: {error}")]
    Compile { error: CompileError, plan: SymbolicPlan, trace: SynthesisTrace },
}

fn summarize(trace: &SynthesisTrace) -> String {
    trace
        .issues
        .iter()
        .filter(|i| i.severity == Severity::Error)
        .map(|i| format!("step {}: {}", i.step, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl SynthesisError {
    pub fn trace(&self) -> Option<&SynthesisTrace> {
        match self {
            Self::Parse { trace, .. } | Self::Invalid { trace, .. } | Self::Compile { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// Prompt, complete, parse, validate, compile. One retry with a reminder
/// when the first answer has no parsable plan.
pub fn synthesize(
    question: &str,
    evidence: Option<&str>,
    linked: &LinkedSchema,
    catalog: &SchemaCatalog,
    graph: &JoinGraph,
    gateway: &LlmGateway,
) -> Result<Synthesis, SynthesisError> {
    let prompt = build_synthesis_prompt(question, evidence, linked, catalog, shipped_demos())?.assemble();
    let mut trace = SynthesisTrace::default();
    let attempt = |text: &str, trace: &mut SynthesisTrace| -> Result<_, SynthesisError> {
        let response = gateway.complete(text)?;
        trace.responses.push(response.clone());
        Ok(parse_symbolic_with_warnings(&response))
    };
    let parsed = match attempt(&prompt, &mut trace)? {
        Ok(p) => p,
        Err(first) => {
            log::debug!("plan did not parse ({first}); retrying");
            let retry = format!("{prompt}\n{RETRY_REMINDER}");
            match attempt(&retry, &mut trace)? {
                Ok(p) => p,
                Err(error) => {
                    trace.response_sql = sql_beside_plan(trace.responses.last().expect("one response"));
                    return Err(SynthesisError::Parse { error, trace });
                }
            }
        }
    };
    let last = trace.responses.last().expect("one response").clone();
    trace.response_sql = sql_beside_plan(&last);
    trace.plan_text = Some(parsed.plan.render());
    trace.parse_warnings = parsed.warnings;
    trace.issues = validate_plan(&parsed.plan, linked, catalog);
    if trace.issues.iter().any(|i| i.severity == Severity::Error) {
        return Err(SynthesisError::Invalid { plan: parsed.plan, trace });
    }
    match compile_plan(&parsed.plan, catalog, graph) {
        Ok(compiled) => Ok(Synthesis { plan: parsed.plan, compiled, trace }),
        Err(error) => Err(SynthesisError::Compile { error, plan: parsed.plan, trace }),
    }
}

/// SQL written outside the plan lines, if any.
fn sql_beside_plan(response: &str) -> Option<String> {
    static PLAN_LINE: OnceLock<Regex> = OnceLock::new();
    let re = PLAN_LINE.get_or_init(|| Regex::new(r"^\s*[A-Za-z_]\w*\s*=\s*[A-Za-z_]\w*\s*\.").expect("valid regex"));
    let rest: String = response.lines().filter(|l| !re.is_match(l)).collect::<Vec<_>>().join("\n");
    let sql = extract_sql_from_response(&rest);
    (sql != rest.trim() || sql.to_ascii_uppercase().starts_with("SELECT")).then_some(sql).filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CacheRecord, GatewayMode, ResponseCache};
    use crate::schema::test_support::*;
    use crate::schema::fk_join_graph;
    use crate::sql::ground_truth_schema;
    use crate::talog::parse_symbolic;

    const CASE1_GOLD: &str = "SELECT T1.District FROM schools AS T1 INNER JOIN satscores AS T2 ON T1.CDSCode = T2.cds \
        WHERE T1.StatusType = 'Active' ORDER BY T2.AvgScrRead DESC LIMIT 1";
    const CASE1_PLAN: &str = "df1 = df.where(element = schools.StatusType, filter = 'Active')\n\
        df2 = df1.orderby(by = satscores.AvgScrRead, desc).limit(1)\n\
        res = df2.select(schools.District)";
    const QUESTION: &str = "Which active district has the highest average score in Reading?";

    fn gateway(pairs: &[(&str, &str)]) -> LlmGateway {
        let gw = LlmGateway::new("m", GatewayMode::Replay, ResponseCache::in_memory(), None);
        for (prompt, response) in pairs {
            gw.cache()
                .insert(CacheRecord {
                    key: gw.key_for(prompt),
                    model: "m".into(),
                    config: *gw.decoding(),
                    prompt: (*prompt).into(),
                    response: (*response).into(),
                    timestamp: "t".into(),
                })
                .unwrap();
        }
        gw
    }

    #[test]
    fn six_demos_that_all_parse() {
        assert_eq!(shipped_demos().len(), 6);
        for d in shipped_demos() {
            parse_symbolic(&d.symbolic_plan).unwrap_or_else(|e| panic!("{}: {e}", d.question));
        }
    }

    #[test]
    fn schema_section_is_linked_columns_and_join_keys() {
        let cat = schools_catalog();
        let linked = ground_truth_schema(CASE1_GOLD, &cat).unwrap();
        let bundle = build_synthesis_prompt(QUESTION, None, &linked, &cat, shipped_demos()).unwrap();
        assert_eq!(bundle.shot_count(), 6);
        let cols: Vec<String> = synthesis_schema_columns(&linked, &cat).iter().map(|c| c.to_string()).collect();
        assert_eq!(
            cols,
            ["satscores.cds", "satscores.AvgScrRead", "schools.CDSCode", "schools.District", "schools.StatusType"]
        );
        assert!(bundle.input.contains("\"satscores.AvgScrRead\""));
        assert!(!bundle.input.contains("frpm."));
    }

    #[test]
    fn empty_linked_schema_is_rejected() {
        let cat = schools_catalog();
        assert!(matches!(
            build_synthesis_prompt("q", None, &LinkedSchema::default(), &cat, shipped_demos()),
            Err(TaslError::Precondition(_))
        ));
    }

    #[test]
    fn replayed_plan_compiles_and_trailing_sql_is_ignored() {
        let cat = schools_catalog();
        let linked = ground_truth_schema(CASE1_GOLD, &cat).unwrap();
        let prompt = build_synthesis_prompt(QUESTION, None, &linked, &cat, shipped_demos()).unwrap().assemble();
        let response = format!("{CASE1_PLAN}\n\nSQL: SELECT DIVIDE(SUM(x), COUNT(y)) FROM schools");
        let gw = gateway(&[(&prompt, &response)]);
        let out = synthesize(QUESTION, None, &linked, &cat, &fk_join_graph(&cat), &gw).unwrap();
        assert!(!out.compiled.sql.contains("DIVIDE"));
        assert!(out.trace.response_sql.as_deref().unwrap().contains("DIVIDE"));
        assert!(out.compiled.sql.starts_with("SELECT schools.District FROM satscores INNER JOIN schools"));
    }

    #[test]
    fn prose_twice_is_an_error_with_both_responses() {
        let cat = schools_catalog();
        let linked = ground_truth_schema(CASE1_GOLD, &cat).unwrap();
        let prompt = build_synthesis_prompt(QUESTION, None, &linked, &cat, shipped_demos()).unwrap().assemble();
        let retry = format!("{prompt}\n{RETRY_REMINDER}");
        let gw = gateway(&[(&prompt, "I think the district is Fremont."), (&retry, "Still prose.")]);
        let err = synthesize(QUESTION, None, &linked, &cat, &fk_join_graph(&cat), &gw).unwrap_err();
        let SynthesisError::Parse { trace, .. } = err else { panic!("expected parse error") };
        assert_eq!(trace.responses.len(), 2);
    }

    #[test]
    fn retry_recovers() {
        let cat = schools_catalog();
        let linked = ground_truth_schema(CASE1_GOLD, &cat).unwrap();
        let prompt = build_synthesis_prompt(QUESTION, None, &linked, &cat, shipped_demos()).unwrap().assemble();
        let retry = format!("{prompt}\n{RETRY_REMINDER}");
        let gw = gateway(&[(&prompt, "no idea"), (&retry, CASE1_PLAN)]);
        assert!(synthesize(QUESTION, None, &linked, &cat, &fk_join_graph(&cat), &gw).is_ok());
    }
}
