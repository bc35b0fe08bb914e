//! `tasql`: batch front-end for linking, synthesis, evaluation and audit.
//!
//! Exit codes: 0 success, 1 some examples failed, 2 configuration or
//! replay error.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use tasql_core::audit::{audit_corpus, compare_reports, AuditConfig, AuditContext, AuditReport};
use tasql_core::dataset::load_corpus;
use tasql_core::eval::{corpus_report, schema_linking_scores, ExVerdict, LinkScope};
use tasql_core::llm::{HttpTransport, Transport};
use tasql_core::materialize::materialize_all;
use tasql_core::pipeline::{
    audit_pairs, evaluate_example, link_example, linking_pairs, load_bundles, run_example, DatabaseBundle, LinkRecord,
    PredictionRecord,
};
use tasql_core::{ColumnRef, Corpus, GatewayError, GatewayMode, KnowledgeMode, LinkedSchema, LlmGateway, ResponseCache, Source};

#[derive(Parser)]
#[command(name = "tasql", version, about = "Task-aligned text-to-SQL pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schema linking only; writes linked.jsonl and linking.json.
    Link(RunArgs),
    /// Full pipeline; writes predictions.jsonl.
    Run(RunArgs),
    /// Execution accuracy of a predictions file; writes eval.json.
    Eval(EvalArgs),
    /// Hallucination audit of a predictions file; writes audit.json.
    Audit(AuditArgs),
    /// Builds SQLite databases from seed scripts.
    MaterializeFixtures(MaterializeArgs),
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Dataset JSON file (BIRD or Spider layout).
    #[arg(long)]
    dataset_path: PathBuf,
    /// Directory holding `<db_id>/<db_id>.sqlite`.
    #[arg(long)]
    databases_root: PathBuf,
    #[arg(long, default_value = "bird")]
    source: Source,
    #[arg(long, default_value = "with_knowledge")]
    knowledge_mode: KnowledgeMode,
    #[arg(long)]
    output_dir: PathBuf,
    /// Worker threads for per-example tasks.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    concurrency: u32,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "gpt-4")]
    model_id: String,
    #[arg(long, default_value = "replay")]
    gateway_mode: GatewayMode,
    /// Response cache (JSONL). Must exist in replay mode.
    #[arg(long)]
    cache_path: PathBuf,
    /// Chat-completions endpoint for live and record modes. The API key is
    /// read from TASQL_API_KEY.
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    backend_url: String,
    /// HTTP timeout per completion request.
    #[arg(long, default_value_t = 120)]
    request_timeout_seconds: u64,
    /// Use full column descriptions instead of generated succinct ones.
    #[arg(long)]
    no_succinct: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Defaults to `<output_dir>/predictions.jsonl`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Per-query execution limit.
    #[arg(long, default_value_t = 30)]
    timeout_seconds: u64,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Defaults to `<output_dir>/predictions.jsonl`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// A second predictions file to compare against.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Args)]
struct MaterializeArgs {
    /// Directory holding `<db_id>/<db_id>.sql` seed scripts.
    #[arg(long, default_value = "fixtures/databases")]
    scripts: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Whether every example went through cleanly.
#[derive(Debug, PartialEq, Eq)]
enum Outcome {
    Clean,
    Partial,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Link(a) => cmd_link(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::MaterializeFixtures(a) => cmd_materialize(&a),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

impl CorpusArgs {
    fn prepare(&self) -> Result<(Corpus, rayon::ThreadPool)> {
        fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating output dir {}", self.output_dir.display()))?;
        let loaded = load_corpus(&self.dataset_path, self.source, self.knowledge_mode)?;
        for s in &loaded.skipped {
            log::warn!("dataset record {} skipped: {}", s.index, s.message);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.concurrency as usize).build()?;
        Ok((loaded.corpus, pool))
    }

    fn predictions_path(&self, explicit: &Option<PathBuf>) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.output_dir.join("predictions.jsonl"))
    }
}

fn gateway(args: &RunArgs) -> Result<LlmGateway> {
    if args.gateway_mode == GatewayMode::Replay && !args.cache_path.is_file() {
        bail!("replay mode needs an existing cache, {} not found", args.cache_path.display());
    }
    let cache = ResponseCache::load(&args.cache_path).map_err(anyhow::Error::msg)?;
    let transport: Option<Box<dyn Transport>> = match args.gateway_mode {
        GatewayMode::Replay => None,
        GatewayMode::Live | GatewayMode::Record => Some(Box::new(HttpTransport::from_env(
            args.backend_url.clone(),
            Duration::from_secs(args.request_timeout_seconds),
        )?)),
    };
    Ok(LlmGateway::new(args.model_id.clone(), args.gateway_mode, cache, transport))
}

fn bundles(
    pool: &rayon::ThreadPool,
    root: &Path,
    corpus: &Corpus,
    succinct: Option<&LlmGateway>,
) -> BTreeMap<String, Result<DatabaseBundle, String>> {
    let bundles = pool.install(|| load_bundles(root, corpus, succinct));
    for (db, b) in &bundles {
        match b {
            Ok(b) => b.warnings.iter().for_each(|w| log::warn!("{db}: {w}")),
            Err(e) => log::error!("database {db}: {e}"),
        }
    }
    bundles
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path).with_context(|| path.display().to_string())?);
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Stops at the first fatal gateway error; results keep corpus order.
fn collect_fatal<T>(results: Vec<Result<T, GatewayError>>) -> Result<Vec<T>> {
    results.into_iter().map(|r| r.map_err(|e| anyhow::anyhow!("{e}"))).collect()
}

fn cmd_link(args: &RunArgs) -> Result<Outcome> {
    let (corpus, pool) = args.corpus.prepare()?;
    let gw = gateway(args)?;
    let bundles = bundles(&pool, &args.corpus.databases_root, &corpus, (!args.no_succinct).then_some(&gw));
    let records: Vec<LinkRecord> = collect_fatal(pool.install(|| {
        corpus
            .examples
            .par_iter()
            .map(|ex| link_example(ex, corpus.evidence_for(ex), bundle_ref(&bundles, &ex.db_id), &gw))
            .collect()
    }))?;
    write_jsonl(&args.corpus.output_dir.join("linked.jsonl"), &records)?;

    let linked: BTreeMap<String, LinkedSchema> =
        records.iter().filter(|r| r.error.is_none()).map(|r| (r.example_id.clone(), r.linked.clone())).collect();
    let catalogs = catalogs(&bundles);
    let (pairs, skipped) = linking_pairs(&corpus, &linked, &catalogs);
    let summary = match schema_linking_scores(&pairs, LinkScope::default()) {
        Ok(s) => {
            println!("schema linking over {} examples: recall {:.4}  precision {:.4}  F1 {:.4}", s.n_examples, s.recall, s.precision, s.f1);
            serde_json::json!({ "score": s, "skipped": skipped })
        }
        Err(e) => {
            println!("schema linking: {e}");
            serde_json::json!({ "score": null, "skipped": skipped })
        }
    };
    write_text(&args.corpus.output_dir.join("linking.json"), &serde_json::to_string_pretty(&summary)?)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    Ok(if !records.is_empty() && failed == records.len() { Outcome::Partial } else { Outcome::Clean })
}

fn cmd_run(args: &RunArgs) -> Result<Outcome> {
    let (corpus, pool) = args.corpus.prepare()?;
    let gw = gateway(args)?;
    let bundles = bundles(&pool, &args.corpus.databases_root, &corpus, (!args.no_succinct).then_some(&gw));
    let records: Vec<PredictionRecord> = collect_fatal(pool.install(|| {
        corpus
            .examples
            .par_iter()
            .map(|ex| run_example(ex, corpus.evidence_for(ex), bundle_ref(&bundles, &ex.db_id), &gw))
            .collect()
    }))?;
    write_jsonl(&args.corpus.output_dir.join("predictions.jsonl"), &records)?;
    let failed = records.iter().filter(|r| r.final_sql.is_none()).count();
    println!("{} examples, {} with final SQL, {} without", records.len(), records.len() - failed, failed);
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Clean })
}

fn cmd_eval(args: &EvalArgs) -> Result<Outcome> {
    let (corpus, pool) = args.corpus.prepare()?;
    let predictions: Vec<PredictionRecord> = read_jsonl(&args.corpus.predictions_path(&args.predictions))?;
    let by_id: BTreeMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.example_id.as_str(), p)).collect();
    let bundles = bundles(&pool, &args.corpus.databases_root, &corpus, None);
    let timeout = Duration::from_secs(args.timeout_seconds);
    let results: Vec<_> = pool.install(|| {
        corpus
            .examples
            .par_iter()
            .map(|ex| {
                let pred = by_id.get(ex.example_id.as_str());
                let db_file = tasql_core::pipeline::database_path(&args.corpus.databases_root, &ex.db_id);
                let fallback = pred.is_some_and(|p| p.diagnostics.fallback);
                evaluate_example(ex, pred.and_then(|p| p.final_sql.as_deref()), &db_file, timeout, fallback)
            })
            .collect()
    });

    let linked: BTreeMap<String, LinkedSchema> = predictions
        .iter()
        .filter(|p| p.dummy_sql.is_some())
        .map(|p| (p.example_id.clone(), linked_from_columns(&p.linked_columns)))
        .collect();
    let (pairs, _) = linking_pairs(&corpus, &linked, &catalogs(&bundles));
    let linking = schema_linking_scores(&pairs, LinkScope::default()).ok();
    let report = corpus_report(&results, linking.as_ref());
    write_text(&args.corpus.output_dir.join("eval.json"), &report.to_json())?;
    print!("{}", report.render_table());
    let flagged = results.iter().any(|r| r.verdict == ExVerdict::GoldInvalid);
    Ok(if flagged { Outcome::Partial } else { Outcome::Clean })
}

fn linked_from_columns(columns: &[String]) -> LinkedSchema {
    let mut out = LinkedSchema::default();
    for c in columns {
        match ColumnRef::parse(c) {
            Ok(r) => {
                out.tables.insert(r.table.clone());
                out.columns.insert(r);
            }
            Err(e) => log::warn!("ignoring linked column `{c}`: {e}"),
        }
    }
    out
}

fn cmd_audit(args: &AuditArgs) -> Result<Outcome> {
    let (corpus, pool) = args.corpus.prepare()?;
    let bundles = bundles(&pool, &args.corpus.databases_root, &corpus, None);
    let catalogs: BTreeMap<String, _> =
        bundles.iter().filter_map(|(k, b)| b.as_ref().ok().map(|b| (k.clone(), b.catalog.clone()))).collect();
    let db_files: BTreeMap<String, PathBuf> =
        bundles.iter().filter_map(|(k, b)| b.as_ref().ok().map(|b| (k.clone(), b.db_file.clone()))).collect();
    let config = AuditConfig::default();
    let ctx = AuditContext { catalogs: &catalogs, db_files: &db_files, config: &config };
    let audit = |path: &Path| -> Result<AuditReport> {
        let predictions: Vec<PredictionRecord> = read_jsonl(path)?;
        let map = predictions.into_iter().map(|p| (p.example_id, p.final_sql)).collect();
        Ok(pool.install(|| audit_corpus(&audit_pairs(&corpus, &map), &ctx)))
    };
    let candidate = audit(&args.corpus.predictions_path(&args.predictions))?;
    let partial = candidate.failed > 0;
    let out = args.corpus.output_dir.join("audit.json");
    match &args.baseline {
        Some(b) => {
            let cmp = compare_reports(audit(b)?, candidate);
            write_text(&out, &cmp.to_json())?;
            print!("{}", cmp.render_table());
        }
        None => {
            write_text(&out, &candidate.to_json())?;
            print!("{}", candidate.render_table());
        }
    }
    Ok(if partial { Outcome::Partial } else { Outcome::Clean })
}

fn cmd_materialize(args: &MaterializeArgs) -> Result<Outcome> {
    for path in materialize_all(&args.scripts, &args.out)? {
        println!("{}", path.display());
    }
    Ok(Outcome::Clean)
}

fn bundle_ref<'a>(
    bundles: &'a BTreeMap<String, Result<DatabaseBundle, String>>,
    db_id: &str,
) -> Result<&'a DatabaseBundle, &'a String> {
    bundles.get(db_id).expect("every corpus database was loaded").as_ref()
}

fn catalogs(bundles: &BTreeMap<String, Result<DatabaseBundle, String>>) -> BTreeMap<String, &tasql_core::SchemaCatalog> {
    bundles.iter().filter_map(|(k, b)| b.as_ref().ok().map(|b| (k.clone(), &b.catalog))).collect()
}
