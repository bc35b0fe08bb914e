use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rusqlite::{Connection, OpenFlags};

use super::{ColumnDef, ColumnRef, FkLink, Name, SampleValue, SchemaCatalog, SchemaError, TableDef};

const SAMPLE_LIMIT: usize = 20;

/// A catalog together with the non-fatal problems met while loading it.
#[derive(Debug, Clone)]
pub struct Introspected {
    pub catalog: SchemaCatalog,
    pub warnings: Vec<String>,
}

/// `database_description/` next to the database file, when present.
pub fn default_metadata_dir(db_file: &Path) -> Option<PathBuf> {
    let dir = db_file.parent()?.join("database_description");
    dir.is_dir().then_some(dir)
}

/// Reads the schema of a SQLite file. `metadata_dir` holds one
/// `{table}.csv` per table with original and value descriptions.
pub fn introspect_database(db_file: &Path, metadata_dir: Option<&Path>) -> Result<Introspected, SchemaError> {
    let io_err = |message: String| SchemaError::Io { path: db_file.display().to_string(), message };
    if !db_file.is_file() {
        return Err(io_err("no such file".into()));
    }
    let conn = Connection::open_with_flags(db_file, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(|e| io_err(e.to_string()))?;
    let db_id = db_file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut warnings = Vec::new();

    let table_names: Vec<String> = {
        let mut stmt = conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid")
            .map_err(|e| io_err(e.to_string()))?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(|e| io_err(e.to_string()))?;
        rows.collect::<Result<_, _>>().map_err(|e| io_err(e.to_string()))?
    };

    let mut tables = Vec::with_capacity(table_names.len());
    for name in &table_names {
        tables.push(read_table(&conn, name).map_err(|e| io_err(e.to_string()))?);
    }

    let mut foreign_keys = Vec::new();
    for name in &table_names {
        let mut stmt = conn
            .prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(name)))
            .map_err(|e| io_err(e.to_string()))?;
        let rows = stmt
            .query_map([], |r| Ok((r.get::<_, String>(2)?, r.get::<_, String>(3)?, r.get::<_, Option<String>>(4)?)))
            .map_err(|e| io_err(e.to_string()))?;
        for row in rows {
            let (target, from_col, to_col) = row.map_err(|e| io_err(e.to_string()))?;
            match resolve_fk(&tables, name, &target, &from_col, to_col.as_deref()) {
                Ok(link) => {
                    if !foreign_keys.contains(&link) {
                        foreign_keys.push(link);
                    }
                }
                Err(why) => warnings.push(format!("skipping foreign key {name}.{from_col} -> {target}: {why}")),
            }
        }
    }

    for table in &mut tables {
        for column in &mut table.columns {
            column.sample_values = sample_values(&conn, table.name.as_str(), column.name.as_str()).unwrap_or_else(|e| {
                warnings.push(format!("cannot sample {}.{}: {e}", table.name, column.name));
                Vec::new()
            });
        }
    }

    if let Some(dir) = metadata_dir {
        apply_metadata(dir, &mut tables, &mut warnings);
    }

    for w in &warnings {
        log::warn!("{db_id}: {w}");
    }
    let catalog = SchemaCatalog::new(db_id, tables, foreign_keys)?;
    Ok(Introspected { catalog, warnings })
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn read_table(conn: &Connection, name: &str) -> rusqlite::Result<TableDef> {
    let mut stmt = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(name)))?;
    let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, i64>(5)?)))?;
    let mut columns = Vec::new();
    let mut pk: Vec<(i64, String)> = Vec::new();
    for row in rows {
        let (col, ty, pk_index) = row?;
        if pk_index > 0 {
            pk.push((pk_index, col.clone()));
        }
        columns.push(ColumnDef::new(col, ty));
    }
    pk.sort();
    Ok(TableDef { name: Name::new(name), columns, primary_key: pk.into_iter().map(|(_, c)| Name::new(c)).collect() })
}

fn resolve_fk(tables: &[TableDef], from_table: &str, target: &str, from_col: &str, to_col: Option<&str>) -> Result<FkLink, String> {
    let source = tables.iter().find(|t| t.name.as_str().eq_ignore_ascii_case(from_table)).ok_or("source table missing")?;
    let from_def = source.column(from_col).ok_or("source column missing")?;
    let dest = tables.iter().find(|t| t.name.as_str().eq_ignore_ascii_case(target)).ok_or("target table missing")?;
    if dest.name == source.name {
        return Err("self-referencing key".into());
    }
    let to_def = match to_col {
        Some(c) => dest.column(c).ok_or("target column missing")?,
        None => match dest.primary_key.as_slice() {
            [only] => dest.column(only.as_str()).ok_or("target key missing")?,
            _ => return Err("implicit target needs a single-column primary key".into()),
        },
    };
    Ok(FkLink {
        from: ColumnRef { table: source.name.clone(), column: from_def.name.clone() },
        to: ColumnRef { table: dest.name.clone(), column: to_def.name.clone() },
    })
}

/// Up to 20 most frequent non-null values, most frequent first.
fn sample_values(conn: &Connection, table: &str, column: &str) -> rusqlite::Result<Vec<SampleValue>> {
    let col = quote_ident(column);
    let sql = format!(
        "SELECT {col}, COUNT(*) AS n FROM {} WHERE {col} IS NOT NULL GROUP BY {col} ORDER BY n DESC, {col} LIMIT {SAMPLE_LIMIT}",
        quote_ident(table)
    );
    let mut stmt = conn.prepare(&sql)?;
    let rows = stmt.query_map([], |r| {
        let value = match r.get_ref(0)? {
            rusqlite::types::ValueRef::Integer(i) => i.to_string(),
            rusqlite::types::ValueRef::Real(f) => f.to_string(),
            rusqlite::types::ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
            rusqlite::types::ValueRef::Blob(b) => format!("<blob {} bytes>", b.len()),
            rusqlite::types::ValueRef::Null => String::new(),
        };
        Ok(SampleValue { value, count: r.get::<_, i64>(1)? as u64 })
    })?;
    let mut out: Vec<SampleValue> = Vec::new();
    for row in rows {
        let v = row?;
        // distinct storage values can render identically (1 vs 1.0)
        if !out.iter().any(|o| o.value == v.value) {
            out.push(v);
        }
    }
    Ok(out)
}

fn apply_metadata(dir: &Path, tables: &mut [TableDef], warnings: &mut Vec<String>) {
    let Ok(entries) = std::fs::read_dir(dir) else {
        warnings.push(format!("metadata directory {} unreadable", dir.display()));
        return;
    };
    let mut files: HashMap<String, PathBuf> = HashMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            if let Some(stem) = path.file_stem() {
                files.insert(stem.to_string_lossy().to_lowercase(), path);
            }
        }
    }
    for table in tables.iter_mut() {
        let Some(path) = files.get(&table.name.canonical()) else { continue };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                warnings.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let text = String::from_utf8_lossy(&bytes);
        let text = text.trim_start_matches('\u{feff}');
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let headers: Vec<String> = match reader.headers() {
            Ok(h) => h.iter().map(|s| s.trim().to_lowercase()).collect(),
            Err(e) => {
                warnings.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let idx = |name: &str| headers.iter().position(|h| h == name);
        let (Some(name_idx), desc_idx, value_idx) =
            (idx("original_column_name"), idx("column_description"), idx("value_description"))
        else {
            warnings.push(format!("{}: missing original_column_name header", path.display()));
            continue;
        };
        for (line, record) in reader.records().enumerate() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    warnings.push(format!("{} row {}: {e}", path.display(), line + 2));
                    continue;
                }
            };
            let Some(col_name) = record.get(name_idx).map(str::trim).filter(|s| !s.is_empty()) else {
                warnings.push(format!("{} row {}: empty column name", path.display(), line + 2));
                continue;
            };
            let Some(column) = table.columns.iter_mut().find(|c| c.name.as_str().eq_ignore_ascii_case(col_name)) else {
                warnings.push(format!("{} row {}: unknown column `{col_name}`", path.display(), line + 2));
                continue;
            };
            let clean = |i: Option<usize>| {
                i.and_then(|i| record.get(i)).map(|s| s.split_whitespace().collect::<Vec<_>>().join(" ")).unwrap_or_default()
            };
            column.original_description = clean(desc_idx);
            column.value_description = clean(value_idx);
        }
    }
}
