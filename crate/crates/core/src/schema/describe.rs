use serde::{Deserialize, Serialize};

use super::{ColumnDef, ColumnRef, SchemaCatalog, SchemaError};
use crate::llm::LlmGateway;

/// Upper bound on a succinct column description, in characters.
pub const SUCCINCT_MAX_CHARS: usize = 200;

/// `type: ...; description: ...; values: ...`, skipping empty parts.
pub fn compose_full_description(column: &ColumnDef) -> String {
    let mut parts = vec![format!("type: {}", column.declared_type)];
    if !column.original_description.trim().is_empty() {
        parts.push(format!("description: {}", column.original_description.trim()));
    }
    if !column.value_description.trim().is_empty() {
        parts.push(format!("values: {}", column.value_description.trim()));
    }
    parts.join("; ")
}

/// First line, at most [`SUCCINCT_MAX_CHARS`] characters.
pub fn truncate_succinct(text: &str) -> String {
    let line = text.trim().lines().next().unwrap_or("").trim();
    line.chars().take(SUCCINCT_MAX_CHARS).collect::<String>().trim_end().to_string()
}

/// Prompt asking for a one-line description of one column.
pub fn succinct_prompt(catalog: &SchemaCatalog, column: &ColumnRef) -> String {
    let def = catalog.column_def(column).expect("column from catalog");
    let samples: Vec<&str> = def.sample_values.iter().take(5).map(|s| s.value.as_str()).collect();
    format!(
        "# Summarize the column below in one short line (under {SUCCINCT_MAX_CHARS} characters).\n\
         # Keep units, codes and value formats that matter for writing SQL filters.\n\
         column = \"{}\"\n\
         column_type = {}\n\
         original_description = {}\n\
         value_description = {}\n\
         sample_values = {}\n\
         succinct_description = ",
        column.canonical_key(),
        json_str(&def.declared_type),
        json_str(&def.original_description),
        json_str(&def.value_description),
        serde_json::to_string(&samples).expect("strings serialize"),
    )
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Asks the gateway for a succinct description of every column. A failed or
/// empty response falls back to the truncated full description and is
/// reported in the returned warnings.
pub fn generate_succinct_descriptions(catalog: &SchemaCatalog, gateway: &LlmGateway) -> (SchemaCatalog, Vec<String>) {
    let mut out = catalog.clone();
    let mut warnings = Vec::new();
    for table in &mut out.tables {
        for column in &mut table.columns {
            let reference = ColumnRef { table: table.name.clone(), column: column.name.clone() };
            let prompt = succinct_prompt(catalog, &reference);
            let described = match gateway.complete(&prompt) {
                Ok(text) => {
                    let cleaned = truncate_succinct(strip_quotes(&text));
                    if cleaned.is_empty() {
                        warnings.push(format!("{reference}: empty succinct description, using full description"));
                        None
                    } else {
                        Some(cleaned)
                    }
                }
                Err(e) => {
                    warnings.push(format!("{reference}: {e}; using full description"));
                    None
                }
            };
            column.succinct_description =
                Some(described.unwrap_or_else(|| truncate_succinct(&compose_full_description(column))));
        }
    }
    (out, warnings)
}

fn strip_quotes(text: &str) -> &str {
    let t = text.trim();
    for q in ['"', '\''] {
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(q) {
            return &t[1..t.len() - 1];
        }
    }
    t
}

/// Ordered `table.column` → description map used in schema-linking prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDictionary {
    pub entries: Vec<(String, String)>,
    pub uses_succinct: bool,
}

impl SchemaDictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let key = key.to_lowercase();
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }

    /// Python-dict style rendering, one entry per line.
    pub fn render(&self) -> String {
        let mut out = String::from("{\n");
        for (k, v) in &self.entries {
            out.push_str(&format!("    {}: {},\n", json_str(k), json_str(v)));
        }
        out.push('}');
        out
    }
}

pub fn build_schema_dictionary(catalog: &SchemaCatalog, use_succinct: bool) -> Result<SchemaDictionary, SchemaError> {
    if use_succinct {
        let missing: Vec<String> = catalog
            .tables
            .iter()
            .flat_map(|t| t.columns.iter().filter(|c| c.succinct_description.is_none()).map(move |c| format!("{}.{}", t.name, c.name)))
            .collect();
        if !missing.is_empty() {
            return Err(SchemaError::Precondition(format!("columns without succinct description: {}", missing.join(", "))));
        }
    }
    let entries = catalog
        .tables
        .iter()
        .flat_map(|t| {
            t.columns.iter().map(move |c| {
                let key = ColumnRef { table: t.name.clone(), column: c.name.clone() }.canonical_key();
                let value = if use_succinct {
                    c.succinct_description.clone().expect("checked above")
                } else {
                    compose_full_description(c)
                };
                (key, value)
            })
        })
        .collect();
    Ok(SchemaDictionary { entries, uses_succinct: use_succinct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CacheRecord, GatewayMode, ResponseCache};
    use crate::schema::test_support::*;

    fn col(ty: &str, desc: &str, values: &str) -> ColumnDef {
        let mut c = ColumnDef::new("c", ty);
        c.original_description = desc.into();
        c.value_description = values.into();
        c
    }

    #[test]
    fn full_description_omits_empty_segments() {
        assert_eq!(compose_full_description(&col("TEXT", "district name", "")), "type: TEXT; description: district name");
        assert_eq!(compose_full_description(&col("TEXT", "", "")), "type: TEXT");
        let full = compose_full_description(&col("INTEGER", "average reading score", "0–800"));
        let expected = ["type: INTEGER", "description: average reading score", "values: 0–800"].join("; ");
        assert_eq!(full, expected);
    }

    #[test]
    fn dictionary_has_one_lowercase_key_per_column() {
        let cat = SchemaCatalog::new(
            "x",
            vec![table("schools", &["District", "CDSCode"], &[]), table("satscores", &["cds"], &[])],
            vec![],
        )
        .unwrap();
        let dict = build_schema_dictionary(&cat, false).unwrap();
        assert_eq!(dict.len(), 3);
        assert_eq!(dict.entries[0].0, "schools.district");
        let keys: Vec<String> = cat.column_refs().iter().map(ColumnRef::canonical_key).collect();
        assert_eq!(dict.entries.iter().map(|(k, _)| k.clone()).collect::<Vec<_>>(), keys);
        for (k, v) in &dict.entries {
            let r = ColumnRef::parse(k).unwrap();
            assert_eq!(v, &compose_full_description(cat.column_def(&r).unwrap()));
        }
    }

    #[test]
    fn succinct_dictionary_requires_descriptions() {
        let cat = schools_catalog();
        match build_schema_dictionary(&cat, true) {
            Err(SchemaError::Precondition(msg)) => assert!(msg.contains("schools.District")),
            other => panic!("{other:?}"),
        }
    }

    fn replay_with(entries: &[(String, &str)]) -> LlmGateway {
        let gw = LlmGateway::new("m", GatewayMode::Replay, ResponseCache::in_memory(), None);
        for (prompt, response) in entries {
            gw.cache()
                .insert(CacheRecord {
                    key: gw.key_for(prompt),
                    model: "m".into(),
                    config: *gw.decoding(),
                    prompt: prompt.clone(),
                    response: response.to_string(),
                    timestamp: String::new(),
                })
                .unwrap();
        }
        gw
    }

    #[test]
    fn succinct_generation_stores_response_verbatim_or_falls_back() {
        let cat = schools_catalog();
        let read = ColumnRef::new("satscores", "AvgScrRead");
        let long = "x".repeat(300);
        let district = ColumnRef::new("schools", "District");
        let gw = replay_with(&[
            (succinct_prompt(&cat, &read), "average SAT reading score"),
            (succinct_prompt(&cat, &district), long.as_str()),
        ]);
        let (described, warnings) = generate_succinct_descriptions(&cat, &gw);
        let get = |r: &ColumnRef| described.column_def(r).unwrap().succinct_description.clone().unwrap();
        assert_eq!(get(&read), "average SAT reading score");
        assert_eq!(get(&district).chars().count(), SUCCINCT_MAX_CHARS);
        let status = ColumnRef::new("schools", "StatusType");
        assert_eq!(get(&status), truncate_succinct(&compose_full_description(cat.column_def(&status).unwrap())));
        assert_eq!(warnings.len(), cat.column_count() - 2);
        assert!(build_schema_dictionary(&described, true).is_ok());
        described.validate().unwrap();
    }

    #[test]
    fn truncation_keeps_first_line() {
        assert_eq!(truncate_succinct("  first line\nsecond"), "first line");
        assert!(truncate_succinct(&"é".repeat(500)).chars().count() <= SUCCINCT_MAX_CHARS);
    }
}
