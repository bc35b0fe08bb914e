//! Shared setup for the pipeline benchmarks.

use std::collections::BTreeSet;
use std::path::Path;

use tasql_core::materialize::materialize_all;
use tasql_core::pipeline::{load_bundle, DatabaseBundle};
use tasql_core::schema::FkLink;
use tasql_core::{ColumnRef, JoinGraph, Name};

/// A fixture database built into a temporary directory. The directory lives
/// as long as the value does.
pub struct Fixture {
    _dir: tempfile::TempDir,
    pub bundle: DatabaseBundle,
}

pub fn fixture(db_id: &str) -> Fixture {
    let scripts = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/databases");
    let dir = tempfile::tempdir().expect("tempdir");
    materialize_all(&scripts, dir.path()).expect("fixture databases build");
    let bundle = load_bundle(dir.path(), db_id, None).expect("bundle loads");
    Fixture { _dir: dir, bundle }
}

/// Ring of `n` tables `t0..t{n-1}` with one chord from `t0` to the middle,
/// plus the required set {t1, t(n/2+1), t(n-1)}.
pub fn ring_graph(n: usize) -> (JoinGraph, BTreeSet<Name>) {
    let link = |i: usize, j: usize| FkLink {
        from: ColumnRef::new(format!("t{i}"), format!("t{j}_id")),
        to: ColumnRef::new(format!("t{j}"), "id"),
    };
    let mut links: Vec<FkLink> = (0..n).map(|i| link(i, (i + 1) % n)).collect();
    links.push(link(0, n / 2));
    let graph = JoinGraph::from_parts((0..n).map(|i| Name::new(format!("t{i}"))), links);
    let required = [1, n / 2 + 1, n - 1].into_iter().map(|i| Name::new(format!("t{i}"))).collect();
    (graph, required)
}
