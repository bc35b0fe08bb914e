//! Hallucination audit of predicted SQL against gold SQL.
//!
//! The rules here are structural heuristics. Percentages a human analyst
//! reports for the same categories are not expected to match them.

pub mod detect;
pub mod report;

pub use detect::{
    called_functions, detect_attribute_overanalysis, detect_clause_abuse, detect_join_redundancy,
    detect_mathematical_delusion, detect_schema_contradiction, detect_value_misrepresentation, AbusableClause, Category,
    Family, FunctionWhitelist, ValueProbe, DISTINCT_PROBE_CAP,
};
pub use report::{
    audit_corpus, audit_pair, compare_reports, AuditComparison, AuditConfig, AuditContext, AuditPair, AuditReport,
    CategoryDelta, CategoryStat, ExampleAudit,
};
