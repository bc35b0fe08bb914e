//! Task-aligned logical synthesis: a small dataframe-style plan language,
//! its validator, join inference over foreign keys, and a compiler to SQL.

pub mod compile;
pub mod join;
pub mod parse;
pub mod plan;
pub mod synth;
pub mod validate;

pub use compile::{compile_plan, CompileError, CompiledQuery};
pub use join::{infer_join_path, JoinInferenceError, JoinPath};
pub use parse::{parse_symbolic, parse_symbolic_with_warnings, ParsedPlan, PlanParseError};
pub use plan::{
    render_symbolic, AggFunc, ArithOp, CastType, CompareOp, Condition, Direction, PlanExpr, Predicate, Step, StepOp,
    SymbolicPlan, RESULT_FRAME, ROOT_FRAME,
};
pub use synth::{
    build_synthesis_prompt, shipped_demos, synthesis_schema_columns, synthesize, Synthesis, SynthesisDemo,
    SynthesisError, SynthesisTrace, RETRY_REMINDER,
};
pub use validate::{has_errors, validate_plan, Severity, ValidationIssue};
