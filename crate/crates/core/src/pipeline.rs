//! Per-example orchestration of linking, synthesis, evaluation and audit.
//!
//! Functions here are pure apart from the gateway and read-only database
//! access, so callers can run them on a worker pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::audit::AuditPair;
use crate::dataset::{Corpus, TaskExample};
use crate::eval::{compare_execution, ExVerdict, ExampleResult};
use crate::llm::{GatewayError, LlmGateway};
use crate::schema::{
    build_schema_dictionary, default_metadata_dir, fk_join_graph, generate_succinct_descriptions, introspect_database,
    JoinGraph, SchemaCatalog, SchemaDictionary,
};
use crate::sql::{ground_truth_schema, LinkedSchema, UnresolvedRef};
use crate::talog::{synthesize, SynthesisError, ValidationIssue};
use crate::tasl::{link_schema, TaslError};

/// Everything the pipeline needs about one database.
#[derive(Debug, Clone)]
pub struct DatabaseBundle {
    pub db_file: PathBuf,
    pub catalog: SchemaCatalog,
    pub graph: JoinGraph,
    pub dictionary: SchemaDictionary,
    pub warnings: Vec<String>,
}

/// `root/<db_id>/<db_id>.sqlite`, the benchmark layout, or
/// `root/<db_id>.sqlite` when that exists instead.
pub fn database_path(root: &Path, db_id: &str) -> PathBuf {
    let nested = root.join(db_id).join(format!("{db_id}.sqlite"));
    let flat = root.join(format!("{db_id}.sqlite"));
    if !nested.is_file() && flat.is_file() {
        flat
    } else {
        nested
    }
}

/// Reads the schema and builds the linking dictionary. With `succinct`,
/// column descriptions are first condensed through the gateway.
pub fn load_bundle(root: &Path, db_id: &str, succinct: Option<&LlmGateway>) -> Result<DatabaseBundle, String> {
    let db_file = database_path(root, db_id);
    let meta = default_metadata_dir(&db_file);
    let loaded = introspect_database(&db_file, meta.as_deref()).map_err(|e| e.to_string())?;
    let mut warnings = loaded.warnings;
    let mut catalog = loaded.catalog;
    catalog.db_id = db_id.to_string();
    if let Some(gw) = succinct {
        let (described, w) = generate_succinct_descriptions(&catalog, gw);
        catalog = described;
        warnings.extend(w);
    }
    let dictionary = build_schema_dictionary(&catalog, succinct.is_some()).map_err(|e| e.to_string())?;
    Ok(DatabaseBundle { graph: fk_join_graph(&catalog), db_file, catalog, dictionary, warnings })
}

/// Loads every database the corpus mentions, once each.
pub fn load_bundles(
    root: &Path,
    corpus: &Corpus,
    succinct: Option<&LlmGateway>,
) -> BTreeMap<String, Result<DatabaseBundle, String>> {
    let mut out = BTreeMap::new();
    for ex in &corpus.examples {
        if !out.contains_key(&ex.db_id) {
            out.insert(ex.db_id.clone(), load_bundle(root, &ex.db_id, succinct));
        }
    }
    out
}

/// Gateway failures that make the rest of a run meaningless.
pub fn is_fatal(e: &GatewayError) -> bool {
    matches!(e, GatewayError::ReplayMiss { .. } | GatewayError::NoTransport(_) | GatewayError::Cache(_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub example_id: String,
    pub db_id: String,
    pub dummy_sql: Option<String>,
    pub parse_ok: bool,
    pub fallback: bool,
    pub linked: LinkedSchema,
    pub unresolved: Vec<UnresolvedRef>,
    pub error: Option<String>,
}

impl LinkRecord {
    fn failed(ex: &TaskExample, error: String) -> Self {
        Self {
            example_id: ex.example_id.clone(),
            db_id: ex.db_id.clone(),
            dummy_sql: None,
            parse_ok: false,
            fallback: false,
            linked: LinkedSchema::default(),
            unresolved: Vec::new(),
            error: Some(error),
        }
    }
}

/// Schema linking for one example. Only fatal gateway errors are returned
/// as `Err`; anything else is recorded in the result.
pub fn link_example(
    ex: &TaskExample,
    evidence: Option<&str>,
    bundle: Result<&DatabaseBundle, &String>,
    gateway: &LlmGateway,
) -> Result<LinkRecord, GatewayError> {
    let bundle = match bundle {
        Ok(b) => b,
        Err(e) => return Ok(LinkRecord::failed(ex, format!("database `{}`: {e}", ex.db_id))),
    };
    match link_schema(&ex.question, evidence, &bundle.catalog, &bundle.dictionary, gateway) {
        Ok(r) => Ok(LinkRecord {
            example_id: ex.example_id.clone(),
            db_id: ex.db_id.clone(),
            dummy_sql: Some(r.extracted_sql),
            parse_ok: r.parse_ok,
            fallback: r.fallback,
            linked: r.linked,
            unresolved: r.unresolved,
            error: None,
        }),
        Err(TaslError::Gateway(e)) if is_fatal(&e) => Err(e),
        Err(e) => Ok(LinkRecord::failed(ex, e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub parse_ok: bool,
    pub fallback: bool,
    pub unresolved: Vec<UnresolvedRef>,
    /// SQL the synthesis response carried next to its plan.
    pub response_sql: Option<String>,
    pub plan_warnings: Vec<String>,
    pub validation: Vec<ValidationIssue>,
    pub join_tables: Vec<String>,
    pub error: Option<String>,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub db_id: String,
    pub dummy_sql: Option<String>,
    pub linked_columns: Vec<String>,
    pub symbolic_plan: Option<String>,
    pub final_sql: Option<String>,
    pub diagnostics: Diagnostics,
}

/// Linking then synthesis for one example.
pub fn run_example(
    ex: &TaskExample,
    evidence: Option<&str>,
    bundle: Result<&DatabaseBundle, &String>,
    gateway: &LlmGateway,
) -> Result<PredictionRecord, GatewayError> {
    let link = link_example(ex, evidence, bundle, gateway)?;
    let mut record = PredictionRecord {
        example_id: ex.example_id.clone(),
        db_id: ex.db_id.clone(),
        dummy_sql: link.dummy_sql.clone(),
        linked_columns: link.linked.columns.iter().map(|c| c.to_string()).collect(),
        symbolic_plan: None,
        final_sql: None,
        diagnostics: Diagnostics {
            parse_ok: link.parse_ok,
            fallback: link.fallback,
            unresolved: link.unresolved.clone(),
            error: link.error.clone(),
            ..Default::default()
        },
    };
    let (Ok(bundle), None) = (bundle, &link.error) else { return Ok(record) };
    match synthesize(&ex.question, evidence, &link.linked, &bundle.catalog, &bundle.graph, gateway) {
        Ok(s) => {
            record.symbolic_plan = s.trace.plan_text.clone();
            record.final_sql = Some(s.compiled.sql.clone());
            record.diagnostics.response_sql = s.trace.response_sql;
            record.diagnostics.plan_warnings = s.trace.parse_warnings;
            record.diagnostics.validation = s.trace.issues;
            record.diagnostics.join_tables = s.compiled.tables().iter().map(|t| t.to_string()).collect();
        }
        Err(SynthesisError::Gateway(e)) if is_fatal(&e) => return Err(e),
        Err(e) => {
            if let Some(trace) = e.trace() {
                record.symbolic_plan = trace.plan_text.clone();
                record.diagnostics.response_sql = trace.response_sql.clone();
                record.diagnostics.plan_warnings = trace.parse_warnings.clone();
                record.diagnostics.validation = trace.issues.clone();
            }
            record.diagnostics.error = Some(e.to_string());
        }
    }
    Ok(record)
}

/// `(predicted, gold)` schema pairs, plus `(example_id, reason)` for each
/// skipped example.
pub type LinkingPairs = (Vec<(LinkedSchema, LinkedSchema)>, Vec<(String, String)>);

/// Linked columns against the gold schema. Examples whose gold query does
/// not resolve are skipped and reported.
pub fn linking_pairs(
    corpus: &Corpus,
    linked: &BTreeMap<String, LinkedSchema>,
    catalogs: &BTreeMap<String, &SchemaCatalog>,
) -> LinkingPairs {
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for ex in &corpus.examples {
        let Some(pred) = linked.get(&ex.example_id) else { continue };
        let Some(cat) = catalogs.get(&ex.db_id) else {
            skipped.push((ex.example_id.clone(), format!("no schema for `{}`", ex.db_id)));
            continue;
        };
        match ground_truth_schema(&ex.gold_sql, cat) {
            Ok(gold) => pairs.push((pred.clone(), gold)),
            Err(e) => {
                log::warn!("example {}: gold schema unavailable: {e}", ex.example_id);
                skipped.push((ex.example_id.clone(), e.to_string()));
            }
        }
    }
    (pairs, skipped)
}

/// EX verdict for one example. A missing prediction counts as wrong; a
/// missing database makes the example unscorable.
pub fn evaluate_example(
    ex: &TaskExample,
    pred_sql: Option<&str>,
    db_file: &Path,
    timeout: Duration,
    fallback: bool,
) -> ExampleResult {
    let base = |verdict, message| ExampleResult {
        example_id: ex.example_id.clone(),
        difficulty: ex.difficulty,
        verdict,
        message,
        fallback,
    };
    if !db_file.is_file() {
        return base(ExVerdict::GoldInvalid, Some(format!("database file {} not found", db_file.display())));
    }
    let Some(pred) = pred_sql else {
        return base(ExVerdict::Incorrect, Some("no prediction".into()));
    };
    let c = compare_execution(pred, &ex.gold_sql, db_file, timeout);
    base(c.verdict, c.message)
}

pub fn audit_pairs(corpus: &Corpus, predictions: &BTreeMap<String, Option<String>>) -> Vec<AuditPair> {
    corpus
        .examples
        .iter()
        .filter_map(|ex| {
            let pred = predictions.get(&ex.example_id)?;
            Some(AuditPair {
                example_id: ex.example_id.clone(),
                db_id: ex.db_id.clone(),
                pred_sql: pred.clone(),
                gold_sql: ex.gold_sql.clone(),
            })
        })
        .collect()
}
