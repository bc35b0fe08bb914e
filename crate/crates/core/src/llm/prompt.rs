use serde::{Deserialize, Serialize};

/// One input/output demonstration pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub input: String,
    pub output: String,
}

/// Instruction, demonstrations and the input to solve. Zero demonstrations
/// is the zero-shot case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    pub demonstrations: Vec<Demonstration>,
    pub input: String,
}

impl PromptBundle {
    pub fn zero_shot(instruction: impl Into<String>, input: impl Into<String>) -> Self {
        Self { instruction: instruction.into(), demonstrations: Vec::new(), input: input.into() }
    }

    pub fn shot_count(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn assemble(&self) -> String {
        assemble_prompt(self)
    }
}

/// Concatenates instruction, demonstrations (input then output, in order)
/// and the final input. Blocks are separated by a blank line.
pub fn assemble_prompt(bundle: &PromptBundle) -> String {
    let mut out = String::with_capacity(
        bundle.instruction.len()
            + bundle.input.len()
            + bundle.demonstrations.iter().map(|d| d.input.len() + d.output.len() + 4).sum::<usize>(),
    );
    out.push_str(bundle.instruction.trim_end());
    out.push_str("\n\n");
    for demo in &bundle.demonstrations {
        out.push_str(demo.input.trim_end());
        out.push('\n');
        out.push_str(demo.output.trim_end());
        out.push_str("\n\n");
    }
    out.push_str(bundle.input.trim_end());
    out.push('\n');
    out
}

/// Pipeline stage that issues prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SchemaLinking,
    LogicalSynthesis,
}

/// The familiar task each stage is recast as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignedTask {
    /// Write a SQL query; its entities become the linked schema.
    SqlGeneration,
    /// Write dataframe-style analysis steps.
    DataframeAnalysis,
}

/// Fixed stage-to-task mapping. The alignment is chosen by hand, not
/// retrieved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStrategy {
    pub stage: Stage,
    pub aligned_task_template: AlignedTask,
}

impl PromptStrategy {
    pub fn for_stage(stage: Stage) -> Self {
        let aligned_task_template = match stage {
            Stage::SchemaLinking => AlignedTask::SqlGeneration,
            Stage::LogicalSynthesis => AlignedTask::DataframeAnalysis,
        };
        Self { stage, aligned_task_template }
    }
}
