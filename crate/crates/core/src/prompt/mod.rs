//! Text Representation Prompt rendering under a token budget.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatabaseSchema, ExampleTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaStyle {
    /// `Table t has columns such as a, b. a is the primary key.`
    Sentence,
    /// `Table t, columns = [*,a,b]`
    CompactColumns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    /// Text placed before the schema block.
    pub instruction_header: String,
    pub schema_style: SchemaStyle,
    /// Line between the schema block and the first question.
    pub question_intro: String,
    pub question_prefix: String,
    pub response_prefix: String,
    pub include_evidence: bool,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::sentence()
    }
}

impl PromptTemplate {
    /// The sentence-style TRP layout.
    pub fn sentence() -> Self {
        PromptTemplate {
            instruction_header: "I want you to act as a SQL terminal in front of a database and below is an description of the database schema. Write a response that appropriately completes the request.\n\n/* Instruction */".into(),
            schema_style: SchemaStyle::Sentence,
            question_intro: "Please give SQL statement to answer the following question:".into(),
            question_prefix: "Q:".into(),
            response_prefix: "Response:".into(),
            include_evidence: false,
        }
    }

    /// The compact `columns = [...]` layout.
    pub fn compact() -> Self {
        PromptTemplate {
            instruction_header: "Given the following database schema :".into(),
            schema_style: SchemaStyle::CompactColumns,
            question_intro: "Please write queries to answer the following questions:".into(),
            ..PromptTemplate::sentence()
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.question_prefix.trim().is_empty() || self.response_prefix.trim().is_empty() {
            return Err(PromptError::InvalidTemplate("question and response prefixes must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenBudget {
    pub max_context: usize,
    pub reserved_response: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            max_context: 2048,
            reserved_response: 512,
        }
    }
}

impl TokenBudget {
    /// Tokens available to the prompt itself.
    pub fn prompt_limit(&self) -> usize {
        self.max_context.saturating_sub(self.reserved_response)
    }
}

/// Counts tokens for budget accounting. Implement this to plug in a model's
/// exact tokenizer.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(bytes / 3)`: an over-estimate for BPE tokenizers on English and SQL.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteEstimator;

impl TokenCounter for ByteEstimator {
    fn count(&self, text: &str) -> usize {
        estimate_tokens(text)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(3)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    /// Index of the target example.
    pub example_index: usize,
    pub text: String,
    pub shots: usize,
    pub exemplar_ids: Vec<usize>,
    pub token_estimate: usize,
    pub budget: TokenBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt needs {needed} tokens but the budget allows {limit} (over by {overflow})")]
    BudgetExceeded { needed: usize, limit: usize, overflow: usize },
    #[error("no schema loaded for database `{0}`")]
    UnknownDatabase(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

pub fn render_schema(schema: &DatabaseSchema, style: SchemaStyle) -> String {
    let mut out = String::new();
    match style {
        SchemaStyle::Sentence => {
            let names: Vec<&str> = schema.tables.iter().map(|t| t.name.as_str()).collect();
            let _ = writeln!(out, "Database {} contains tables such as {}. ", schema.db_id, names.join(", "));
            for (ti, t) in schema.tables.iter().enumerate() {
                let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
                let _ = write!(out, "Table {} has columns such as {}.", t.name, cols.join(", "));
                for pk in schema.primary_keys.iter().filter(|pk| pk.table == ti) {
                    let _ = write!(out, " {} is the primary key.", t.columns[pk.column].name);
                }
                out.push('\n');
            }
            for fk in &schema.foreign_keys {
                let (ft, tt) = (&schema.tables[fk.from.table], &schema.tables[fk.to.table]);
                let _ = writeln!(
                    out,
                    "The {} of {} is the foreign key of {} of {}.",
                    ft.columns[fk.from.column].name, ft.name, tt.columns[fk.to.column].name, tt.name
                );
            }
        }
        SchemaStyle::CompactColumns => {
            for t in &schema.tables {
                out.push_str("Table ");
                out.push_str(&t.name);
                out.push_str(", columns = [*");
                for c in &t.columns {
                    out.push(',');
                    out.push_str(&c.name);
                }
                out.push_str("]\n");
            }
        }
    }
    out.pop();
    out
}

/// Renders prompts with a fixed template, budget and token counter.
pub struct PromptBuilder<'a> {
    pub template: &'a PromptTemplate,
    pub budget: TokenBudget,
    pub counter: &'a dyn TokenCounter,
}

impl<'a> PromptBuilder<'a> {
    pub fn new(template: &'a PromptTemplate) -> Self {
        PromptBuilder {
            template,
            budget: TokenBudget::default(),
            counter: &ByteEstimator,
        }
    }

    pub fn with_budget(mut self, budget: TokenBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_counter(mut self, counter: &'a dyn TokenCounter) -> Self {
        self.counter = counter;
        self
    }

    /// Assembles the prompt for `target`. Exemplars are kept in the given
    /// order; if the budget is tight, they are dropped from the tail.
    pub fn build(
        &self,
        target: &ExampleTriple,
        exemplars: &[&ExampleTriple],
        schemas: &BTreeMap<String, DatabaseSchema>,
    ) -> Result<PromptEnvelope, PromptError> {
        let t = self.template;
        let schema = schemas
            .get(&target.db_id)
            .ok_or_else(|| PromptError::UnknownDatabase(target.db_id.clone()))?;

        let head = format!(
            "{}\n{}\n\n{}\n",
            t.instruction_header,
            render_schema(schema, t.schema_style),
            t.question_intro
        );
        let tail = self.question(target, None);
        let limit = self.budget.prompt_limit();
        let base = self.counter.count(&format!("{head}{tail}"));
        if base > limit {
            return Err(PromptError::BudgetExceeded {
                needed: base,
                limit,
                overflow: base - limit,
            });
        }

        let mut blocks = Vec::with_capacity(exemplars.len());
        for ex in exemplars {
            let mut block = String::new();
            if ex.db_id != target.db_id {
                let s = schemas
                    .get(&ex.db_id)
                    .ok_or_else(|| PromptError::UnknownDatabase(ex.db_id.clone()))?;
                block.push_str(&render_schema(s, SchemaStyle::CompactColumns));
                block.push('\n');
            }
            block.push_str(&self.question(ex, Some(&ex.gold_sql)));
            block.push_str("\n\n");
            blocks.push(block);
        }

        // Longest prefix of the exemplar list that fits.
        let mut text = head;
        let mut kept = 0;
        for block in &blocks {
            let mut candidate = text.clone();
            candidate.push_str(block);
            candidate.push_str(&tail);
            if self.counter.count(&candidate) > limit {
                break;
            }
            text.push_str(block);
            kept += 1;
        }
        if kept < blocks.len() {
            tracing::debug!(
                target_index = target.index,
                dropped = blocks.len() - kept,
                "exemplars dropped to fit the token budget"
            );
        }
        text.push_str(&tail);
        let token_estimate = self.counter.count(&text);
        Ok(PromptEnvelope {
            example_index: target.index,
            text,
            shots: kept,
            exemplar_ids: exemplars[..kept].iter().map(|e| e.index).collect(),
            token_estimate,
            budget: self.budget,
        })
    }

    fn question(&self, ex: &ExampleTriple, answer: Option<&str>) -> String {
        let t = self.template;
        let mut s = format!("{} {}\n", t.question_prefix, ex.question);
        if t.include_evidence {
            if let Some(ev) = ex.evidence.as_deref().filter(|e| !e.trim().is_empty()) {
                let _ = writeln!(s, "Evidence: {ev}");
            }
        }
        s.push_str(&t.response_prefix);
        s.push(' ');
        if let Some(sql) = answer {
            s.push_str(sql);
        }
        s
    }
}

/// [`PromptBuilder::build`] with the default budget and byte estimator.
pub fn build_prompt(
    target: &ExampleTriple,
    exemplars: &[&ExampleTriple],
    schemas: &BTreeMap<String, DatabaseSchema>,
    template: &PromptTemplate,
    budget: TokenBudget,
) -> Result<PromptEnvelope, PromptError> {
    PromptBuilder::new(template).with_budget(budget).build(target, exemplars, schemas)
}
