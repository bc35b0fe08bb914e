//! Builds SQLite database files from checked-in SQL seed scripts.
//!
//! The script layout mirrors the benchmark database layout:
//! `scripts/<db_id>/<db_id>.sql` becomes `out/<db_id>/<db_id>.sqlite`.

use std::fs;
use std::path::{Path, PathBuf};

use rusqlite::Connection;

#[derive(Debug, thiserror::Error)]
pub enum MaterializeError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Sql { path: String, source: rusqlite::Error },
    #[error("no seed scripts under {0}")]
    Empty(String),
}

fn io_err(path: &Path, e: std::io::Error) -> MaterializeError {
    MaterializeError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Seed scripts under `scripts_root`, sorted by database id.
pub fn seed_scripts(scripts_root: &Path) -> Result<Vec<(String, PathBuf)>, MaterializeError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(scripts_root).map_err(|e| io_err(scripts_root, e))? {
        let dir = entry.map_err(|e| io_err(scripts_root, e))?.path();
        let Some(db_id) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else { continue };
        let script = dir.join(format!("{db_id}.sql"));
        if dir.is_dir() && script.is_file() {
            out.push((db_id, script));
        }
    }
    out.sort();
    Ok(out)
}

/// Executes one script into a fresh database at `target`, replacing any
/// existing file. The build happens in a sibling temp file so a failed
/// script never leaves a half-written database behind.
pub fn materialize_script(script: &Path, target: &Path) -> Result<(), MaterializeError> {
    let sql = fs::read_to_string(script).map_err(|e| io_err(script, e))?;
    if let Some(parent) = target.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = target.with_extension("sqlite.tmp");
    let _ = fs::remove_file(&tmp);
    let sql_err = |source| MaterializeError::Sql { path: script.display().to_string(), source };
    {
        let conn = Connection::open(&tmp).map_err(sql_err)?;
        conn.execute_batch(&sql).map_err(sql_err)?;
    }
    fs::rename(&tmp, target).map_err(|e| io_err(target, e))
}

/// Materializes every seed script and returns the database files written.
pub fn materialize_all(scripts_root: &Path, out_root: &Path) -> Result<Vec<PathBuf>, MaterializeError> {
    let scripts = seed_scripts(scripts_root)?;
    if scripts.is_empty() {
        return Err(MaterializeError::Empty(scripts_root.display().to_string()));
    }
    let mut written = Vec::with_capacity(scripts.len());
    for (db_id, script) in scripts {
        let target = out_root.join(&db_id).join(format!("{db_id}.sqlite"));
        materialize_script(&script, &target)?;
        log::info!("materialized {}", target.display());
        written.push(target);
    }
    Ok(written)
}
