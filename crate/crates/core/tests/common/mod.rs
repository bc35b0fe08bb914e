#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use tasql_core::materialize::materialize_all;
use tasql_core::pipeline::{load_bundle, DatabaseBundle};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Fixture databases built once per test binary.
pub fn databases() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        materialize_all(&fixtures_dir().join("databases"), dir.path()).expect("fixture databases build");
        dir
    })
    .path()
}

pub fn bundle(db_id: &str) -> DatabaseBundle {
    load_bundle(databases(), db_id, None).unwrap_or_else(|e| panic!("{db_id}: {e}"))
}

pub fn read_json(name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(fixtures_dir().join(name)).expect("fixture file");
    serde_json::from_str(&text).expect("fixture json")
}
