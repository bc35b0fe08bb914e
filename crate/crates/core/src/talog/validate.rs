use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::plan::*;
use crate::schema::SchemaCatalog;
use crate::sql::LinkedSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    /// 1-based index of the offending step.
    pub step: usize,
    pub message: String,
}

impl ValidationIssue {
    fn error(step: usize, message: String) -> Self {
        Self { severity: Severity::Error, step, message }
    }

    fn warning(step: usize, message: String) -> Self {
        Self { severity: Severity::Warning, step, message }
    }
}

pub fn has_errors(issues: &[ValidationIssue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}

/// Checks columns against the catalog (errors) and the linked schema
/// (warnings, since linking may be incomplete), and that every frame is
/// bound once before it is used.
pub fn validate_plan(plan: &SymbolicPlan, linked: &LinkedSchema, catalog: &SchemaCatalog) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut defined: BTreeSet<&str> = BTreeSet::from([ROOT_FRAME]);
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let linked_keys = linked.column_keys();
    for (i, step) in plan.steps.iter().enumerate() {
        let n = i + 1;
        if !defined.contains(step.source.as_str()) {
            issues.push(ValidationIssue::error(n, format!("frame `{}` is used before it is defined", step.source)));
        }
        used.insert(step.source.as_str());
        for op in &step.ops {
            op.walk(&mut |e| match e {
                PlanExpr::Column(c) => {
                    if catalog.resolve_column(c.table.as_str(), c.column.as_str()).is_none() {
                        let reason = if catalog.table(c.table.as_str()).is_none() { "unknown table" } else { "unknown column" };
                        issues.push(ValidationIssue::error(n, format!("{reason} `{c}`")));
                    } else if !linked_keys.contains(&c.canonical_key()) {
                        issues.push(ValidationIssue::warning(n, format!("column `{c}` is outside the linked schema")));
                    }
                }
                PlanExpr::Aggregate { frame: Some(f), .. } => {
                    if !defined.contains(f.as_str()) {
                        issues.push(ValidationIssue::error(n, format!("aggregate over undefined frame `{f}`")));
                    }
                    used.insert(f.as_str());
                }
                _ => {}
            });
        }
        if step.binding == ROOT_FRAME {
            issues.push(ValidationIssue::error(n, "`df` cannot be rebound".into()));
        } else if !defined.insert(step.binding.as_str()) {
            issues.push(ValidationIssue::error(n, format!("frame `{}` is bound twice", step.binding)));
        }
        if step.binding == RESULT_FRAME && n != plan.steps.len() {
            issues.push(ValidationIssue::error(n, "`res` must be the last step".into()));
        }
    }
    match plan.steps.last() {
        Some(s) if s.binding == RESULT_FRAME => {}
        _ => issues.push(ValidationIssue::error(plan.steps.len().max(1), "plan does not end with `res`".into())),
    }
    for (i, step) in plan.steps.iter().enumerate() {
        if step.binding != RESULT_FRAME && !used.contains(step.binding.as_str()) {
            issues.push(ValidationIssue::warning(i + 1, format!("frame `{}` is never used", step.binding)));
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::test_support::*;
    use crate::sql::ground_truth_schema;
    use crate::talog::parse_symbolic;

    const CASE1: &str = "df1 = df.where(element = schools.StatusType, filter = 'Active')\n\
        df2 = df1.orderby(by = satscores.AvgScrRead, desc).limit(1)\n\
        res = df2.select(schools.District)";

    #[test]
    fn worked_case_is_clean() {
        let cat = schools_catalog();
        let linked = ground_truth_schema(
            "SELECT T1.District FROM schools AS T1 INNER JOIN satscores AS T2 ON T1.CDSCode = T2.cds \
             WHERE T1.StatusType = 'Active' ORDER BY T2.AvgScrRead DESC LIMIT 1",
            &cat,
        )
        .unwrap();
        assert_eq!(validate_plan(&parse_symbolic(CASE1).unwrap(), &linked, &cat), []);
    }

    #[test]
    fn unknown_column_is_an_error() {
        let cat = schools_catalog();
        let plan = parse_symbolic("res = df.select(schools.Zip9)").unwrap();
        let issues = validate_plan(&plan, &LinkedSchema::full_catalog(&cat), &cat);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].severity, Severity::Error);
    }

    #[test]
    fn undefined_frame_is_a_binding_error() {
        let cat = schools_catalog();
        let plan = parse_symbolic("res = df9.select(schools.District)").unwrap();
        let issues = validate_plan(&plan, &LinkedSchema::full_catalog(&cat), &cat);
        assert!(has_errors(&issues));
        assert!(issues[0].message.contains("df9"));
        let plan = parse_symbolic("res = df.select(df7.count())").unwrap();
        assert!(has_errors(&validate_plan(&plan, &LinkedSchema::full_catalog(&cat), &cat)));
    }

    #[test]
    fn unlinked_column_is_only_a_warning() {
        let cat = schools_catalog();
        let plan = parse_symbolic("res = df.select(schools.County)").unwrap();
        let issues = validate_plan(&plan, &LinkedSchema::default(), &cat);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].severity, Severity::Warning);
    }
}
