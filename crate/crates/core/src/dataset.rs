//! BIRD and Spider example files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Simple,
    Moderate,
    Challenging,
    Easy,
    Medium,
    Hard,
    Extra,
    Unknown,
}

impl Difficulty {
    pub fn parse_lenient(text: &str) -> Self {
        match text.trim().to_ascii_lowercase().as_str() {
            "simple" => Self::Simple,
            "moderate" => Self::Moderate,
            "challenging" => Self::Challenging,
            "easy" => Self::Easy,
            "medium" => Self::Medium,
            "hard" => Self::Hard,
            "extra" | "extra hard" | "extra_hard" => Self::Extra,
            _ => Self::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Simple => "simple",
            Self::Moderate => "moderate",
            Self::Challenging => "challenging",
            Self::Easy => "easy",
            Self::Medium => "medium",
            Self::Hard => "hard",
            Self::Extra => "extra",
            Self::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Bird,
    Spider,
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bird" => Ok(Self::Bird),
            "spider" => Ok(Self::Spider),
            other => Err(format!("unknown dataset source `{other}` (expected bird or spider)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeMode {
    WithKnowledge,
    WithoutKnowledge,
}

impl FromStr for KnowledgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "with_knowledge" | "with" => Ok(Self::WithKnowledge),
            "without_knowledge" | "without" => Ok(Self::WithoutKnowledge),
            other => Err(format!("unknown knowledge mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExample {
    /// `question_id` when the file carries one, else the array index.
    pub example_id: String,
    pub question: String,
    pub db_id: String,
    pub evidence: Option<String>,
    pub gold_sql: String,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub examples: Vec<TaskExample>,
    pub source: Source,
    pub knowledge_mode: KnowledgeMode,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Evidence for an example, or `None` when knowledge is switched off.
    pub fn evidence_for<'a>(&self, example: &'a TaskExample) -> Option<&'a str> {
        match self.knowledge_mode {
            KnowledgeMode::WithKnowledge => example.evidence.as_deref().filter(|e| !e.trim().is_empty()),
            KnowledgeMode::WithoutKnowledge => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { message: String, offset: usize },
    #[error("expected a JSON array of examples")]
    NotArray,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    /// Records skipped because a mandatory field was missing.
    pub skipped: Vec<RecordError>,
}

pub fn load_corpus(path: &Path, source: Source, knowledge_mode: KnowledgeMode) -> Result<LoadedCorpus, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_corpus(&text, source, knowledge_mode)
}

pub fn parse_corpus(text: &str, source: Source, knowledge_mode: KnowledgeMode) -> Result<LoadedCorpus, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DatasetError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Array(records) = value else { return Err(DatasetError::NotArray) };
    let mut examples = Vec::with_capacity(records.len());
    let mut skipped = Vec::new();
    for (index, record) in records.iter().enumerate() {
        match map_record(index, record) {
            Ok(ex) => examples.push(ex),
            Err(message) => {
                log::warn!("skipping record {index}: {message}");
                skipped.push(RecordError { index, message });
            }
        }
    }
    Ok(LoadedCorpus { corpus: Corpus { examples, source, knowledge_mode }, skipped })
}

fn map_record(index: usize, record: &Value) -> Result<TaskExample, String> {
    let obj = record.as_object().ok_or("record is not an object")?;
    let text = |keys: &[&str]| keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_str)).map(str::to_string);
    let question = text(&["question"]).filter(|q| !q.trim().is_empty()).ok_or("missing field `question`")?;
    let db_id = text(&["db_id"]).ok_or("missing field `db_id`")?;
    let gold_sql = text(&["SQL", "query", "sql"]).ok_or("missing field `SQL`/`query`")?;
    let example_id = match obj.get("question_id") {
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) => s.clone(),
        _ => index.to_string(),
    };
    let difficulty = text(&["difficulty", "hardness"]).map(|d| Difficulty::parse_lenient(&d)).unwrap_or(Difficulty::Unknown);
    Ok(TaskExample { example_id, question, db_id, evidence: text(&["evidence"]), gold_sql, difficulty })
}

/// serde_json reports 1-based line and column; turn them into a byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Groups examples by difficulty, preserving corpus order within each bucket.
pub fn partition_by_difficulty(corpus: &Corpus) -> BTreeMap<Difficulty, Vec<&TaskExample>> {
    let mut buckets: BTreeMap<Difficulty, Vec<&TaskExample>> = BTreeMap::new();
    for ex in &corpus.examples {
        buckets.entry(ex.difficulty).or_default().push(ex);
    }
    buckets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bird(text: &str) -> LoadedCorpus {
        parse_corpus(text, Source::Bird, KnowledgeMode::WithKnowledge).unwrap()
    }

    #[test]
    fn empty_array_is_empty_corpus() {
        assert!(bird("[]").corpus.is_empty());
    }

    #[test]
    fn bird_and_spider_field_names() {
        let loaded = bird(
            r#"[{"question_id": 7, "db_id": "d", "question": "q?", "evidence": "e", "SQL": "SELECT 1", "difficulty": "moderate"},
                {"db_id": "d", "question": "q2", "query": "SELECT 2"}]"#,
        );
        let ex = &loaded.corpus.examples;
        assert_eq!(ex[0].example_id, "7");
        assert_eq!(ex[0].difficulty, Difficulty::Moderate);
        assert_eq!(ex[1].example_id, "1");
        assert_eq!(ex[1].gold_sql, "SELECT 2");
        assert_eq!(ex[1].evidence, None);
        assert_eq!(ex[1].difficulty, Difficulty::Unknown);
    }

    #[test]
    fn missing_fields_skip_the_record() {
        let loaded = bird(r#"[{"db_id": "d", "SQL": "SELECT 1"}, {"db_id": "d", "question": "ok", "SQL": "SELECT 1"}]"#);
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.skipped.len(), 1);
        assert_eq!(loaded.skipped[0].index, 0);
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let text = "[\n  {\"a\": 1,,}\n]";
        match parse_corpus(text, Source::Bird, KnowledgeMode::WithKnowledge) {
            Err(DatasetError::Parse { offset, .. }) => assert_eq!(&text[offset..offset + 1], ","),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn knowledge_mode_hides_evidence() {
        let text = r#"[{"db_id": "d", "question": "q", "SQL": "SELECT 1", "evidence": "hint"}]"#;
        let without = parse_corpus(text, Source::Bird, KnowledgeMode::WithoutKnowledge).unwrap().corpus;
        assert_eq!(without.evidence_for(&without.examples[0]), None);
        let with = bird(text).corpus;
        assert_eq!(with.evidence_for(&with.examples[0]), Some("hint"));
    }

    #[test]
    fn partition_counts() {
        let mk = |d: &str| format!(r#"{{"db_id": "d", "question": "q", "SQL": "SELECT 1", "difficulty": "{d}"}}"#);
        let items: Vec<String> = ["simple", "moderate", "simple", "challenging", "moderate", "simple"].iter().map(|d| mk(d)).collect();
        let corpus = bird(&format!("[{}]", items.join(","))).corpus;
        let parts = partition_by_difficulty(&corpus);
        assert_eq!(parts[&Difficulty::Simple].len(), 3);
        assert_eq!(parts[&Difficulty::Moderate].len(), 2);
        assert_eq!(parts[&Difficulty::Challenging].len(), 1);
        assert_eq!(parts.values().map(Vec::len).sum::<usize>(), corpus.len());
        let ids: Vec<&str> = parts[&Difficulty::Simple].iter().map(|e| e.example_id.as_str()).collect();
        assert_eq!(ids, ["0", "2", "5"]);
    }

    #[test]
    fn unknown_only_partition() {
        let corpus = bird(r#"[{"db_id": "d", "question": "q", "SQL": "SELECT 1", "difficulty": "weird"}]"#).corpus;
        let parts = partition_by_difficulty(&corpus);
        assert_eq!(parts.keys().copied().collect::<Vec<_>>(), [Difficulty::Unknown]);
    }
}
