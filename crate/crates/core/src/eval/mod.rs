//! Execution accuracy and schema-linking scores.

pub mod exec;
pub mod metrics;
pub mod report;

pub use exec::{
    compare_execution, execute_sql, execution_accuracy, Cell, ExComparison, ExVerdict, ExecStatus, ExecutionOutcome,
    Row, RowSet, DEFAULT_TIMEOUT,
};
pub use metrics::{
    f1, schema_linking_scores, score_example, score_key_sets, scored_keys, ExampleLinkScore, LinkScope, MetricError,
    SchemaLinkingScore,
};
pub use report::{corpus_report, BucketScore, EvalReport, ExampleResult, LinkingSummary, ReportError};
