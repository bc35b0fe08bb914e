//! Database schema model: tables, columns, descriptions and the foreign-key
//! join graph.

mod describe;
mod graph;
mod introspect;

pub use describe::{
    build_schema_dictionary, compose_full_description, generate_succinct_descriptions, succinct_prompt,
    truncate_succinct, SchemaDictionary, SUCCINCT_MAX_CHARS,
};
pub use graph::{fk_join_graph, JoinEdge, JoinGraph};
pub use introspect::{default_metadata_dir, introspect_database, Introspected};

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Identifier compared case-insensitively; displays as written.
#[derive(Debug, Clone, Default)]
pub struct Name(String);

impl Name {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn canonical(&self) -> String {
        self.0.to_lowercase()
    }
}

impl PartialEq for Name {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_lowercase() == other.0.to_lowercase()
    }
}

impl Eq for Name {}

impl Hash for Name {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_lowercase().hash(state);
    }
}

impl Ord for Name {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.to_lowercase().cmp(&other.0.to_lowercase())
    }
}

impl PartialOrd for Name {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl Serialize for Name {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(Name)
    }
}

/// A `table.column` reference. Equality and ordering use the lowercased
/// canonical key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub table: Name,
    pub column: Name,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self { table: Name::new(table), column: Name::new(column) }
    }

    /// `table_name.column_name`, lowercased.
    pub fn canonical_key(&self) -> String {
        format!("{}.{}", self.table.canonical(), self.column.canonical())
    }

    /// Parses `table.column`; exactly one dot is allowed.
    pub fn parse(key: &str) -> Result<Self, SchemaError> {
        let mut parts = key.split('.');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(t), Some(c), None) if !t.is_empty() && !c.is_empty() => Ok(Self::new(t, c)),
            _ => Err(SchemaError::Invalid(format!("`{key}` is not a table.column reference"))),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

impl Serialize for ColumnRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ColumnRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ColumnRef::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A frequent value of a column with its row count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleValue {
    pub value: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: Name,
    pub declared_type: String,
    #[serde(default)]
    pub original_description: String,
    #[serde(default)]
    pub value_description: String,
    #[serde(default)]
    pub succinct_description: Option<String>,
    #[serde(default)]
    pub sample_values: Vec<SampleValue>,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, declared_type: impl Into<String>) -> Self {
        Self {
            name: Name::new(name),
            declared_type: declared_type.into(),
            original_description: String::new(),
            value_description: String::new(),
            succinct_description: None,
            sample_values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: Name,
    pub columns: Vec<ColumnDef>,
    #[serde(default)]
    pub primary_key: Vec<Name>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.as_str().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FkLink {
    pub from: ColumnRef,
    pub to: ColumnRef,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("cannot read database {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid schema: {0}")]
    Invalid(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Tables, columns and foreign keys of one database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    pub foreign_keys: Vec<FkLink>,
}

impl SchemaCatalog {
    /// Builds a catalog and checks every invariant.
    pub fn new(db_id: impl Into<String>, tables: Vec<TableDef>, foreign_keys: Vec<FkLink>) -> Result<Self, SchemaError> {
        let catalog = Self { db_id: db_id.into(), tables, foreign_keys };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = std::collections::HashSet::new();
        for table in &self.tables {
            if table.name.as_str().contains('.') {
                return Err(SchemaError::Invalid(format!("table name `{}` contains a dot", table.name)));
            }
            if !seen.insert(table.name.canonical()) {
                return Err(SchemaError::Invalid(format!("duplicate table `{}`", table.name)));
            }
            let mut cols = std::collections::HashSet::new();
            for col in &table.columns {
                if col.name.as_str().contains('.') {
                    return Err(SchemaError::Invalid(format!("column `{}.{}` contains a dot", table.name, col.name)));
                }
                if !cols.insert(col.name.canonical()) {
                    return Err(SchemaError::Invalid(format!("duplicate column `{}.{}`", table.name, col.name)));
                }
                if col.succinct_description.as_ref().is_some_and(|d| d.contains('\n') || d.chars().count() > SUCCINCT_MAX_CHARS) {
                    return Err(SchemaError::Invalid(format!("succinct description of `{}.{}` is not a short single line", table.name, col.name)));
                }
                let mut values = std::collections::HashSet::new();
                if !col.sample_values.iter().all(|v| values.insert(v.value.as_str())) {
                    return Err(SchemaError::Invalid(format!("sample values of `{}.{}` repeat", table.name, col.name)));
                }
            }
            for pk in &table.primary_key {
                if table.column(pk.as_str()).is_none() {
                    return Err(SchemaError::Invalid(format!("primary key `{pk}` not a column of `{}`", table.name)));
                }
            }
        }
        for fk in &self.foreign_keys {
            if fk.from == fk.to || fk.from.table == fk.to.table {
                return Err(SchemaError::Invalid(format!("foreign key {} -> {} must join distinct tables", fk.from, fk.to)));
            }
            for end in [&fk.from, &fk.to] {
                if self.resolve_column(end.table.as_str(), end.column.as_str()).is_none() {
                    return Err(SchemaError::Invalid(format!("foreign key endpoint {end} does not resolve")));
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.as_str().eq_ignore_ascii_case(name))
    }

    /// Resolves a reference case-insensitively to the catalog's spelling.
    pub fn resolve_column(&self, table: &str, column: &str) -> Option<ColumnRef> {
        let t = self.table(table)?;
        let c = t.column(column)?;
        Some(ColumnRef { table: t.name.clone(), column: c.name.clone() })
    }

    pub fn column_def(&self, column: &ColumnRef) -> Option<&ColumnDef> {
        self.table(column.table.as_str())?.column(column.column.as_str())
    }

    /// Every column in catalog order.
    pub fn column_refs(&self) -> Vec<ColumnRef> {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| ColumnRef { table: t.name.clone(), column: c.name.clone() }))
            .collect()
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    /// Tables that own a column with this name.
    pub fn owners_of(&self, column: &str) -> Vec<&TableDef> {
        self.tables.iter().filter(|t| t.column(column).is_some()).collect()
    }

    /// Serializes with stable field order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let catalog: Self = serde_json::from_str(text).map_err(|e| SchemaError::Invalid(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn names_compare_case_insensitively() {
        assert_eq!(Name::new("StatusType"), Name::new("statustype"));
        assert_eq!(ColumnRef::new("Schools", "District").canonical_key(), "schools.district");
        assert_eq!(ColumnRef::new("Schools", "District").to_string(), "Schools.District");
    }

    #[test]
    fn column_ref_parse_requires_one_dot() {
        assert!(ColumnRef::parse("a.b").is_ok());
        assert!(ColumnRef::parse("a.b.c").is_err());
        assert!(ColumnRef::parse("ab").is_err());
        assert!(ColumnRef::parse(".b").is_err());
    }

    #[test]
    fn duplicate_tables_rejected_case_insensitively() {
        let err = SchemaCatalog::new("x", vec![table("T", &["a"], &[]), table("t", &["b"], &[])], vec![]);
        assert!(matches!(err, Err(SchemaError::Invalid(_))));
    }

    #[test]
    fn duplicate_columns_rejected() {
        let err = SchemaCatalog::new("x", vec![table("t", &["a", "A"], &[])], vec![]);
        assert!(err.is_err());
    }

    #[test]
    fn dangling_foreign_key_rejected() {
        let err = SchemaCatalog::new("x", vec![table("t", &["a"], &[]), table("u", &["b"], &[])], vec![fk("t.a", "u.zz")]);
        assert!(err.is_err());
        let same_table = SchemaCatalog::new("x", vec![table("t", &["a", "b"], &[])], vec![fk("t.a", "t.b")]);
        assert!(same_table.is_err());
    }

    #[test]
    fn primary_key_must_be_a_column() {
        assert!(SchemaCatalog::new("x", vec![table("t", &["a"], &["b"])], vec![]).is_err());
    }

    #[test]
    fn resolve_uses_catalog_spelling() {
        let cat = schools_catalog();
        let r = cat.resolve_column("SCHOOLS", "statustype").unwrap();
        assert_eq!(r.to_string(), "schools.StatusType");
        assert!(cat.resolve_column("schools", "Zip9").is_none());
        assert_eq!(cat.column_count(), 15);
        assert_eq!(cat.table_count(), 3);
    }

    #[test]
    fn json_round_trip_keeps_field_order() {
        let cat = schools_catalog();
        let json = cat.to_json();
        let db = json.find("\"db_id\"").unwrap();
        let tables = json.find("\"tables\"").unwrap();
        let fks = json.find("\"foreign_keys\"").unwrap();
        assert!(db < tables && tables < fks);
        assert_eq!(SchemaCatalog::from_json(&json).unwrap(), cat);
    }
}
