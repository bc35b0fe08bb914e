//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tasql_core::audit::{audit_pair, AuditConfig, AuditContext, AuditPair};
use tasql_core::eval::{execute_sql, schema_linking_scores, Cell, ExecStatus, LinkScope, RowSet};
use tasql_core::pipeline::{load_bundle, DatabaseBundle, PredictionRecord};
use tasql_core::schema::FkLink;
use tasql_core::sql::{extract_schema_entities, is_reserved};
use tasql_core::sql::lexer::{tokenize, TokenKind};
use tasql_core::talog::{compile_plan, infer_join_path, parse_symbolic};
use tasql_core::{parse_sql, Category, ColumnRef, JoinGraph, LinkedSchema, Name};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("worked-case fidelity", worked_cases),
        ("metric oracle equivalence", metric_oracle),
        ("EX reflexivity", ex_reflexivity),
        ("compiler soundness", compiler_soundness),
        ("join inference vs brute-force Steiner", steiner),
        ("audit fidelity", audit_fidelity),
        ("replay determinism", determinism),
        ("alias invariance", alias_invariance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dev() -> Vec<Value> {
    read_json("dev.json").as_array().unwrap().clone()
}

fn compiler_cases() -> Vec<Value> {
    read_json("compiler_cases.json").as_array().unwrap().clone()
}

fn bundle(db_id: &str) -> DatabaseBundle {
    load_bundle(databases(), db_id, None).unwrap_or_else(|e| panic!("{db_id}: {e}"))
}

fn rows_of(db: &Path, sql: &str) -> Option<RowSet> {
    let out = execute_sql(db, sql, Duration::from_secs(30));
    (out.status == ExecStatus::Rows).then_some(out.rows).flatten()
}

fn read_predictions(path: &Path) -> Vec<PredictionRecord> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn run_ok(args: &[&str]) -> Result<(), String> {
    let out = tasql(args);
    ensure(out.status.code().is_some_and(|c| c <= 1), || {
        format!("tasql {} exited {:?}: {}", args[0], out.status.code(), String::from_utf8_lossy(&out.stderr))
    })
}

/// The two worked cases, one on california_schools and one on
/// debit_card_specializing.
fn worked_cases() -> Outcome {
    let examples: Vec<Value> = dev().into_iter().filter(|e| matches!(e["question_id"].as_u64(), Some(0 | 14))).collect();
    ensure(examples.len() == 2, || "worked cases missing from dev.json".into())?;
    let mock = MockBackend::start(Oracle::from_examples(&examples, &compiler_cases()));
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("worked.json");
    write_dataset(&dataset, &examples);
    let cache = dir.path().join("cache.jsonl");
    let (rec, rep) = (dir.path().join("rec"), dir.path().join("rep"));
    run_ok(&run_args("run", s(&dataset), s(&rec), s(&cache), "record", &mock.url))?;

    let start = Instant::now();
    run_ok(&run_args("run", s(&dataset), s(&rep), s(&cache), "replay", "http://127.0.0.1:9/"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("replay run took {elapsed:?}"))?;

    let db_root = databases();
    for (ex, pred) in examples.iter().zip(read_predictions(&rep.join("predictions.jsonl"))) {
        let id = &pred.example_id;
        let sql = pred.final_sql.as_deref().ok_or_else(|| format!("{id}: no final SQL"))?;
        ensure(pred.symbolic_plan.is_some() && !pred.diagnostics.fallback, || format!("{id}: plan not used"))?;
        let db = db_root.join(&pred.db_id).join(format!("{}.sqlite", pred.db_id));
        let got = rows_of(&db, sql);
        let want = rows_of(&db, ex["SQL"].as_str().unwrap());
        ensure(got.is_some() && got == want, || format!("{id}: {sql} gave {got:?}, gold {want:?}"))?;
    }
    Ok(format!("2 cases, replay {:.2}s", elapsed.as_secs_f64()))
}

fn linked(keys: &BTreeSet<String>) -> LinkedSchema {
    let mut out = LinkedSchema::default();
    for k in keys {
        let c = ColumnRef::parse(k).unwrap();
        out.tables.insert(c.table.clone());
        out.columns.insert(c);
    }
    out
}

/// Reference scoring written straight from the definitions.
fn reference_scores(pairs: &[(BTreeSet<String>, BTreeSet<String>)]) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let mut r = 0.0;
    let mut p = 0.0;
    for (pred, gold) in pairs {
        if gold.iter().all(|g| pred.contains(g)) {
            r += 1.0;
        }
        if !pred.is_empty() {
            p += gold.iter().filter(|g| pred.contains(*g)).count() as f64 / pred.len() as f64;
        }
    }
    let (r, p) = (r / n, p / n);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (r, p, f)
}

fn metric_oracle() -> Outcome {
    let hand = [(linked(&keys(&["a.x", "b.y", "a.z"])), linked(&keys(&["a.x", "b.y"])))];
    let s = schema_linking_scores(&hand, LinkScope::default()).map_err(|e| e.to_string())?;
    ensure(s.recall == 1.0 && s.precision == 2.0 / 3.0 && s.f1 == 0.8, || {
        format!("hand example gave R={} P={} F1={}", s.recall, s.precision, s.f1)
    })?;

    let universe: Vec<String> = ["a", "b", "c"].iter().flat_map(|t| (0..5).map(move |i| format!("{t}.c{i}"))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random_set = |rng: &mut ChaCha8Rng| -> BTreeSet<String> {
        let n = rng.random_range(0..=10);
        universe.choose_multiple(rng, n).cloned().collect()
    };
    let pairs: Vec<(BTreeSet<String>, BTreeSet<String>)> =
        (0..1000).map(|_| (random_set(&mut rng), random_set(&mut rng))).collect();
    let mut worst: f64 = 0.0;
    // Corpora of varying size, then the whole batch as one corpus.
    let mut chunks: Vec<&[(BTreeSet<String>, BTreeSet<String>)]> = pairs.chunks(1).take(50).collect();
    chunks.extend(pairs.chunks(37));
    chunks.push(&pairs);
    for chunk in chunks {
        let schemas: Vec<(LinkedSchema, LinkedSchema)> = chunk.iter().map(|(p, g)| (linked(p), linked(g))).collect();
        let got = schema_linking_scores(&schemas, LinkScope::default()).map_err(|e| e.to_string())?;
        let (r, p, f) = reference_scores(chunk);
        for d in [got.recall - r, got.precision - p, got.f1 - f] {
            worst = worst.max(d.abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 pairs, max deviation {worst:e}; hand example exact"))
}

fn keys(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn ex_reflexivity() -> Outcome {
    let examples = dev();
    ensure(examples.len() >= 100, || format!("only {} dev examples", examples.len()))?;
    let dir = tempfile::tempdir().unwrap();
    let dataset = fixtures_dir().join("dev.json");
    let preds = dir.path().join("gold.jsonl");
    gold_predictions(&preds, &examples);
    let start = Instant::now();
    let mut args = report_args("eval", s(&dataset), s(dir.path()));
    args.extend(["--predictions", s(&preds)]);
    run_ok(&args)?;
    let elapsed = start.elapsed();
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval.json")).unwrap()).unwrap();
    ensure(report["total_ex"].as_f64() == Some(100.0) && report["gold_invalid"] == 0, || {
        format!("EX {} with {} gold-invalid", report["total_ex"], report["gold_invalid"])
    })?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{} examples at EX 100.0 in {:.2}s", report["scored"], elapsed.as_secs_f64()))
}

fn compiler_soundness() -> Outcome {
    let cases = compiler_cases();
    ensure(cases.len() >= 25, || format!("only {} cases", cases.len()))?;
    let mut bundles: BTreeMap<String, DatabaseBundle> = BTreeMap::new();
    let mut join_sizes = BTreeSet::new();
    let mut features: BTreeSet<&str> = BTreeSet::new();
    for case in &cases {
        let id = &case["question_id"];
        let db = case["db_id"].as_str().unwrap();
        let b = bundles.entry(db.to_string()).or_insert_with(|| bundle(db));
        let text = case["plan"].as_str().unwrap();
        for f in ["where(", "orderby(", "limit(", "groupby(", "select(", "cast(", "case_when(", ".count()"] {
            if text.contains(f) {
                features.insert(f);
            }
        }
        let plan = parse_symbolic(text).map_err(|e| format!("{id}: {e}"))?;
        let compiled = compile_plan(&plan, &b.catalog, &b.graph).map_err(|e| format!("{id}: {e}"))?;
        parse_sql(&compiled.sql).map_err(|e| format!("{id}: compiled SQL does not reparse: {e}"))?;
        join_sizes.insert(compiled.tables().len());
        let pinned: RowSet =
            serde_json::from_value::<Vec<Vec<Cell>>>(case["expected_rows"].clone()).unwrap().into_iter().collect();
        let got = rows_of(&b.db_file, &compiled.sql);
        ensure(got.as_ref() == Some(&pinned), || format!("{id}: {} gave {got:?}", compiled.sql))?;
    }
    ensure(features.len() == 8, || format!("feature coverage {features:?}"))?;
    ensure([1, 2, 3].iter().all(|n| join_sizes.contains(n)), || format!("join sizes {join_sizes:?}"))?;
    Ok(format!("{} cases, join sizes {join_sizes:?}", cases.len()))
}

fn t(i: usize) -> Name {
    Name::new(format!("t{i}"))
}

fn link(i: usize, j: usize) -> FkLink {
    FkLink { from: ColumnRef::new(format!("t{i}"), format!("t{j}_id")), to: ColumnRef::new(format!("t{j}"), "id") }
}

fn connected_within(mask: u32, adj: &[u32]) -> bool {
    let start = mask.trailing_zeros();
    let mut seen = 1u32 << start;
    let mut stack = vec![start as usize];
    while let Some(v) = stack.pop() {
        let fresh = adj[v] & mask & !seen;
        seen |= fresh;
        stack.extend((0..adj.len()).filter(|u| fresh & (1 << u) != 0));
    }
    seen == mask
}

fn sorted_names(mask: u32, n: usize) -> Vec<String> {
    let mut v: Vec<String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| format!("t{i}")).collect();
    v.sort();
    v
}

/// Every connected labelled simple graph on up to six tables, every
/// non-empty terminal set.
fn steiner() -> Outcome {
    let mut graphs = 0usize;
    let mut checks = 0usize;
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        // Candidate table sets in preference order: fewest tables, then the
        // lexicographically smallest sorted name list.
        let mut ranked: Vec<u32> = (1..1u32 << n).collect();
        ranked.sort_by_cached_key(|&m| (m.count_ones(), sorted_names(m, n)));
        for edges in 0u32..(1 << pairs.len()) {
            let mut adj = vec![0u32; n];
            let chosen: Vec<(usize, usize)> =
                pairs.iter().enumerate().filter(|(k, _)| edges & (1 << k) != 0).map(|(_, &p)| p).collect();
            for &(i, j) in &chosen {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
            let all = (1u32 << n) - 1;
            if !connected_within(all, &adj) {
                continue;
            }
            graphs += 1;
            let connected: Vec<bool> = (0..=all).map(|m| m != 0 && connected_within(m, &adj)).collect();
            let graph = JoinGraph::from_parts((0..n).map(t), chosen.iter().map(|&(i, j)| link(i, j)));
            for terminals in 1..=all {
                let best = *ranked
                    .iter()
                    .find(|&&m| m & terminals == terminals && connected[m as usize])
                    .expect("whole graph is connected");
                let required: BTreeSet<Name> = (0..n).filter(|i| terminals & (1 << i) != 0).map(t).collect();
                let path = infer_join_path(&required, &graph).map_err(|e| format!("{required:?}: {e}"))?;
                let expected = reference_path(best, &required, n, &adj);
                ensure(path.anchor == expected.0 && path.joins.iter().map(|(t, _)| t.clone()).collect::<Vec<_>>() == expected.1, || {
                    format!("graph {chosen:?}, terminals {required:?}: got {:?}, want {:?}", path.tables(), expected)
                })?;
                // Each link must join the new table to one already on the path.
                let mut on_path = BTreeSet::from([path.anchor.clone()]);
                for (table, l) in &path.joins {
                    let ends = (&l.from.table, &l.to.table);
                    let ok = (ends.0 == table && on_path.contains(ends.1)) || (ends.1 == table && on_path.contains(ends.0));
                    ensure(ok, || format!("bad link {l:?} for {table}"))?;
                    on_path.insert(table.clone());
                }
                checks += 1;
            }
        }
    }
    Ok(format!("{graphs} graphs, {checks} terminal sets"))
}

/// Breadth-first order over the chosen tables from the smallest terminal,
/// visiting neighbours by name.
fn reference_path(mask: u32, required: &BTreeSet<Name>, n: usize, adj: &[u32]) -> (Name, Vec<Name>) {
    let anchor = required.iter().next().unwrap().clone();
    let index = |name: &Name| name.as_str()[1..].parse::<usize>().unwrap();
    let mut seen = 1u32 << index(&anchor);
    let mut queue = VecDeque::from([index(&anchor)]);
    let mut joins = Vec::new();
    while let Some(v) = queue.pop_front() {
        let mut next: Vec<usize> = (0..n).filter(|u| adj[v] & mask & !seen & (1 << u) != 0).collect();
        next.sort_by_key(|u| format!("t{u}"));
        for u in next {
            seen |= 1 << u;
            joins.push(t(u));
            queue.push_back(u);
        }
    }
    (anchor, joins)
}

fn audit_fidelity() -> Outcome {
    let pairs = read_json("hallucination_pairs.json");
    let pairs = pairs.as_array().unwrap();
    let dbs: BTreeSet<&str> = pairs.iter().map(|p| p["db_id"].as_str().unwrap()).collect();
    let bundles: BTreeMap<String, DatabaseBundle> = dbs.iter().map(|d| (d.to_string(), bundle(d))).collect();
    let catalogs = bundles.iter().map(|(k, b)| (k.clone(), b.catalog.clone())).collect();
    let db_files = bundles.iter().map(|(k, b)| (k.clone(), b.db_file.clone())).collect();
    let config = AuditConfig::default();
    let ctx = AuditContext { catalogs: &catalogs, db_files: &db_files, config: &config };
    let mut seen = BTreeSet::new();
    for (i, p) in pairs.iter().enumerate() {
        let want: Category = serde_json::from_value(p["category"].clone()).map_err(|e| e.to_string())?;
        let pair = AuditPair {
            example_id: i.to_string(),
            db_id: p["db_id"].as_str().unwrap().into(),
            pred_sql: Some(p["wrong_sql"].as_str().unwrap().into()),
            gold_sql: p["gold_sql"].as_str().unwrap().into(),
        };
        let got = audit_pair(&pair, &ctx);
        let labels: Vec<Category> = got.labels.keys().copied().collect();
        ensure(labels == [want] && got.error.is_none(), || format!("{want:?} pair labelled {labels:?} {:?}", got.error))?;
        seen.insert(want);
    }
    ensure(seen.len() == 6, || format!("only {} categories covered", seen.len()))?;

    let slice: Vec<Value> = dev().into_iter().take(100).collect();
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("slice.json");
    write_dataset(&dataset, &slice);
    let preds = dir.path().join("gold.jsonl");
    gold_predictions(&preds, &slice);
    let mut args = report_args("audit", s(&dataset), s(dir.path()));
    args.extend(["--predictions", s(&preds)]);
    run_ok(&args)?;
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("audit.json")).unwrap()).unwrap();
    ensure(report["audited"] == 100 && report["flagged"] == 0 && report["failed"] == 0, || {
        let flagged: Vec<&Value> = report["examples"].as_array().unwrap().iter().filter(|e| e["labels"] != Value::Object(Default::default())).collect();
        format!("gold/gold audit: {} flagged {flagged:?}", report["flagged"])
    })?;
    Ok("6 wrong/gold pairs exact; 100 gold/gold pairs unlabelled".into())
}

fn determinism() -> Outcome {
    let examples: Vec<Value> = dev().into_iter().take(40).collect();
    let mock = MockBackend::start(Oracle::from_examples(&examples, &compiler_cases()));
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("slice.json");
    write_dataset(&dataset, &examples);
    let cache = dir.path().join("cache.jsonl");
    run_ok(&run_args("run", s(&dataset), s(&dir.path().join("rec")), s(&cache), "record", &mock.url))?;

    let mut outputs = Vec::new();
    for round in ["a", "b"] {
        let out = dir.path().join(round);
        run_ok(&run_args("run", s(&dataset), s(&out), s(&cache), "replay", "http://127.0.0.1:9/"))?;
        run_ok(&report_args("eval", s(&dataset), s(&out)))?;
        run_ok(&report_args("audit", s(&dataset), s(&out)))?;
        outputs.push(out);
    }
    for file in ["predictions.jsonl", "eval.json", "audit.json"] {
        let (a, b) = (fs::read(outputs[0].join(file)).unwrap(), fs::read(outputs[1].join(file)).unwrap());
        ensure(a == b, || format!("{file} differs between replay runs"))?;
    }
    Ok(format!("{} examples, 3 files identical", examples.len()))
}

/// Offsets and lengths of unquoted words that name an alias, keyed by the
/// lowercased alias.
fn alias_sites(sql: &str) -> BTreeMap<String, Vec<(usize, usize)>> {
    let tokens = tokenize(sql).expect("gold SQL tokenizes");
    let bare = |i: usize| match &tokens[i].kind {
        TokenKind::Word { value, quote: None } => Some(value.as_str()),
        _ => None,
    };
    // `AS` directly inside `CAST(` introduces a type, not an alias.
    let mut cast_depths = Vec::new();
    let mut depth = 0usize;
    let mut aliases: BTreeSet<String> = BTreeSet::new();
    for i in 0..tokens.len() {
        match tokens[i].kind {
            TokenKind::LParen => {
                depth += 1;
                if i > 0 && bare(i - 1).is_some_and(|w| w.eq_ignore_ascii_case("cast")) {
                    cast_depths.push(depth);
                }
            }
            TokenKind::RParen => {
                if cast_depths.last() == Some(&depth) {
                    cast_depths.pop();
                }
                depth = depth.saturating_sub(1);
            }
            _ => {}
        }
        let after_as = i > 0 && bare(i - 1).is_some_and(|w| w.eq_ignore_ascii_case("as"));
        if after_as && cast_depths.last() != Some(&depth) {
            if let Some(w) = bare(i) {
                aliases.insert(w.to_lowercase());
            }
        }
    }
    let mut sites: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..tokens.len() {
        let Some(w) = bare(i) else { continue };
        let after_dot = i > 0 && tokens[i - 1].kind == TokenKind::Dot;
        if aliases.contains(&w.to_lowercase()) && !after_dot {
            sites.entry(w.to_lowercase()).or_default().push((tokens[i].offset, w.len()));
        }
    }
    sites
}

fn alias_invariance() -> Outcome {
    let mut bundles: BTreeMap<String, DatabaseBundle> = BTreeMap::new();
    let mut candidates = Vec::new();
    for ex in dev() {
        let sql = ex["SQL"].as_str().unwrap().to_string();
        let db = ex["db_id"].as_str().unwrap().to_string();
        let b = bundles.entry(db.clone()).or_insert_with(|| bundle(&db));
        let schema_names: BTreeSet<String> = b
            .catalog
            .tables
            .iter()
            .flat_map(|t| std::iter::once(t.name.to_string()).chain(t.columns.iter().map(|c| c.name.to_string())))
            .map(|n| n.to_lowercase())
            .collect();
        let sites = alias_sites(&sql);
        // An alias that doubles as a schema name cannot be told apart from
        // a real reference at the token level.
        if !sites.is_empty() && sites.keys().all(|a| !schema_names.contains(a)) {
            candidates.push((db, sql, sites, schema_names));
        }
    }
    ensure(!candidates.is_empty(), || "no aliased gold queries".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..200 {
        let (db, sql, sites, schema_names) = &candidates[round % candidates.len()];
        let catalog = &bundles[db].catalog;
        let mut renames: BTreeMap<&str, String> = BTreeMap::new();
        for alias in sites.keys() {
            let fresh = loop {
                let len = rng.random_range(1..=6);
                let name: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
                let name = if rng.random_bool(0.5) { name.to_uppercase() } else { name };
                let lower = name.to_lowercase();
                if !is_reserved(&name)
                    && !schema_names.contains(&lower)
                    && !sites.contains_key(&lower)
                    && !renames.values().any(|v| v.eq_ignore_ascii_case(&name))
                {
                    break name;
                }
            };
            renames.insert(alias, fresh);
        }
        let mut edits: Vec<(usize, usize, &str)> =
            sites.iter().flat_map(|(a, v)| v.iter().map(|&(o, l)| (o, l, renames[a.as_str()].as_str()))).collect();
        edits.sort_by_key(|e| std::cmp::Reverse(e.0));
        let mut mutated = sql.clone();
        for (offset, len, name) in edits {
            mutated.replace_range(offset..offset + len, name);
        }
        let before = extract_schema_entities(&parse_sql(sql).map_err(|e| e.to_string())?, catalog);
        let after = extract_schema_entities(&parse_sql(&mutated).map_err(|e| format!("{mutated}: {e}"))?, catalog);
        ensure(before == after, || format!("extraction changed:\n  {sql}\n  {mutated}"))?;
    }
    Ok(format!("200 mutations over {} aliased gold queries", candidates.len()))
}
