//! Text-to-SQL benchmarking: load Spider/BIRD-style datasets, render
//! few-shot prompts, query a chat-completions endpoint, and score the
//! answers by exact set match, execution accuracy, and valid efficiency.
//!
//! Pipeline order is [`dataset`] -> [`selector`] + [`prompt`] ->
//! [`inference`] -> [`metrics`] -> [`report`]; [`corpus`] builds fine-tuning
//! data from the same pieces. CPU-bound stages take a [`par::Parallelism`].

pub mod dataset;
pub mod sqlkit;
pub mod prompt;
pub mod par;
pub mod selector;
pub mod inference;
pub mod metrics;
pub mod corpus;
pub mod report;
