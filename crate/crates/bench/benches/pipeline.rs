use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tasql_bench::{fixture, ring_graph};
use tasql_core::parse_sql;
use tasql_core::sql::extract_schema_entities;
use tasql_core::talog::{compile_plan, infer_join_path, parse_symbolic};

const GOLD: &str = "SELECT T1.District FROM schools AS T1 INNER JOIN satscores AS T2 ON T1.CDSCode = T2.cds \
                    WHERE T1.StatusType = 'Active' ORDER BY T2.AvgScrRead DESC LIMIT 1";

const PLAN: &str = "df1 = df.where(element = schools.StatusType, filter = 'Active')\n\
                    df2 = df1.orderby(by = satscores.AvgScrRead, desc).limit(1)\n\
                    res = df2.select(schools.District)";

fn benches(c: &mut Criterion) {
    let fx = fixture("california_schools");
    let catalog = &fx.bundle.catalog;
    let ast = parse_sql(GOLD).unwrap();
    let plan = parse_symbolic(PLAN).unwrap();

    c.bench_function("parse_sql", |b| b.iter(|| parse_sql(black_box(GOLD)).unwrap()));
    c.bench_function("extract_schema_entities", |b| b.iter(|| extract_schema_entities(black_box(&ast), catalog)));
    c.bench_function("parse_symbolic", |b| b.iter(|| parse_symbolic(black_box(PLAN)).unwrap()));
    c.bench_function("compile_plan", |b| b.iter(|| compile_plan(black_box(&plan), catalog, &fx.bundle.graph).unwrap()));

    let mut group = c.benchmark_group("infer_join_path");
    for n in [6, 10, 14] {
        let (graph, required) = ring_graph(n);
        group.bench_function(format!("ring{n}"), |b| b.iter(|| infer_join_path(black_box(&required), &graph).unwrap()));
    }
    group.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
