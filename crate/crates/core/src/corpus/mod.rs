//! Fine-tuning corpora in the TRP format and training-profile files.

mod profile;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetBundle, ExampleTriple};
use crate::par::{self, Parallelism};
use crate::prompt::{PromptBuilder, PromptError, PromptTemplate, TokenBudget};
use crate::selector::{build_index, mix_shots, Embedder, SelectionPolicy, Selector, SelectorError, ShotMode, Strategy};

pub use profile::{emit_train_profile, load_train_profile, ProfileError, TrainMethod, TrainProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub example_index: usize,
    pub shots: usize,
    pub exemplar_ids: Vec<usize>,
}

/// One instruction-tuning pair: the rendered prompt through the response
/// prefix, and the gold SQL as the target output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub instruction: String,
    pub output: String,
    pub meta: CorpusMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub example_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStats {
    pub min: usize,
    pub max: usize,
    pub mean: usize,
    pub p50: usize,
    pub p95: usize,
}

impl TokenStats {
    fn of(mut xs: Vec<usize>) -> Self {
        if xs.is_empty() {
            return TokenStats::default();
        }
        xs.sort_unstable();
        let at = |q: f64| xs[((xs.len() - 1) as f64 * q).round() as usize];
        TokenStats {
            min: xs[0],
            max: xs[xs.len() - 1],
            mean: xs.iter().sum::<usize>() / xs.len(),
            p50: at(0.5),
            p95: at(0.95),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub records: usize,
    /// Shot count actually rendered → number of records.
    pub shot_histogram: BTreeMap<usize, usize>,
    pub token_estimates: TokenStats,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Everything that shapes a corpus apart from the examples themselves.
pub struct CorpusSpec<'a> {
    pub template: &'a PromptTemplate,
    pub budget: TokenBudget,
    pub policy: &'a SelectionPolicy,
    pub mode: ShotMode,
    /// Shot choices for random-shot mode.
    pub choices: &'a [i64],
    pub embedder: &'a dyn Embedder,
    pub parallelism: Parallelism,
}

/// Builds one record per example, drawing exemplars from the same split
/// (never the example itself). Records come back in split order.
pub fn build_corpus(
    split: &[ExampleTriple],
    bundle: &DatasetBundle,
    spec: &CorpusSpec<'_>,
) -> Result<(Vec<CorpusRecord>, CorpusSummary), CorpusError> {
    spec.template.validate()?;
    let shots = mix_shots(spec.policy, spec.mode, spec.choices, split.len())?;
    let needs_index = spec.policy.strategy != Strategy::Random && shots.iter().any(|&k| k > 0);
    let index = if needs_index {
        build_index(split, spec.embedder, spec.parallelism)?
    } else {
        Default::default()
    };
    let selector = Selector {
        pool: split,
        index: &index,
        embedder: spec.embedder,
    };
    let policy = SelectionPolicy {
        exclude_same_example: true,
        ..spec.policy.clone()
    };
    let builder = PromptBuilder::new(spec.template).with_budget(spec.budget);
    let available = split.len().saturating_sub(1);

    let jobs: Vec<(&ExampleTriple, usize)> = split.iter().zip(shots).collect();
    let built = par::map(&jobs, spec.parallelism, |(ex, k)| {
        let k = if *k > available {
            tracing::warn!(example = ex.index, requested = k, available, "not enough exemplars in split");
            available
        } else {
            *k
        };
        // Corpus building has the gold answer, so it serves as the draft.
        let exemplars = selector.select_k(ex, &policy, k, Some(&ex.gold_sql))?;
        match builder.build(ex, &exemplars, &bundle.schemas) {
            Ok(env) => Ok(Ok(CorpusRecord {
                instruction: env.text,
                output: ex.gold_sql.clone(),
                meta: CorpusMeta {
                    example_index: ex.index,
                    shots: env.shots,
                    exemplar_ids: env.exemplar_ids,
                },
            })),
            Err(e @ (PromptError::BudgetExceeded { .. } | PromptError::UnknownDatabase(_))) => Ok(Err(Skipped {
                example_index: ex.index,
                reason: e.to_string(),
            })),
            Err(e) => Err(CorpusError::from(e)),
        }
    });

    let mut records = Vec::with_capacity(split.len());
    let mut summary = CorpusSummary::default();
    let mut tokens = Vec::with_capacity(split.len());
    for r in built {
        match r? {
            Ok(rec) => {
                *summary.shot_histogram.entry(rec.meta.shots).or_default() += 1;
                tokens.push(builder.counter.count(&rec.instruction));
                records.push(rec);
            }
            Err(skip) => summary.skipped.push(skip),
        }
    }
    summary.records = records.len();
    summary.token_estimates = TokenStats::of(tokens);
    Ok((records, summary))
}

/// Builds the corpus and writes it as line-delimited JSON to `out`.
pub fn export_corpus(
    split: &[ExampleTriple],
    bundle: &DatasetBundle,
    spec: &CorpusSpec<'_>,
    out: &Path,
) -> Result<CorpusSummary, CorpusError> {
    let (records, summary) = build_corpus(split, bundle, spec)?;
    write_records(&records, out).map_err(|source| CorpusError::Io {
        path: out.display().to_string(),
        source,
    })?;
    Ok(summary)
}

fn write_records(records: &[CorpusRecord], out: &Path) -> std::io::Result<()> {
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = out.with_extension("partial");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    std::fs::rename(&tmp, out)
}

pub fn read_corpus(path: &Path) -> std::io::Result<Vec<CorpusRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_stats() {
        let s = TokenStats::of(vec![5, 1, 3, 2, 4]);
        assert_eq!((s.min, s.max, s.mean, s.p50), (1, 5, 3, 3));
        assert_eq!(TokenStats::of(vec![]), TokenStats::default());
    }
}
