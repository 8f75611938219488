//! Few-shot exemplar selection and shot-count mixing.

mod embed;

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExampleTriple, Split};
use crate::par::{self, Parallelism};
use crate::sqlkit::sql_skeleton;

pub use embed::{cosine, Embedder, RemoteEmbedder, SparseVector, TrigramEmbedder, TRIGRAM_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    QuestionSimilarity,
    DualSimilarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionPolicy {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    pub pool: Split,
    pub exclude_same_example: bool,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            strategy: Strategy::QuestionSimilarity,
            k: 0,
            seed: 42,
            pool: Split::Train,
            exclude_same_example: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectorError {
    #[error("asked for {k} exemplars but only {available} candidates are available")]
    KTooLarge { k: usize, available: usize },
    #[error("similarity index has no vector for example {0}")]
    IndexIncomplete(usize),
    #[error("embedding failed{}: {message}", index.map(|i| format!(" for example {i}")).unwrap_or_default())]
    Embedding { index: Option<usize>, message: String },
    #[error("shot choices must be non-empty")]
    EmptyChoices,
    #[error("negative shot count {0}")]
    NegativeChoice(i64),
}

/// Question vectors (and gold-SQL skeleton vectors) for a pool of examples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityIndex {
    pub questions: BTreeMap<usize, SparseVector>,
    pub skeletons: BTreeMap<usize, SparseVector>,
}

impl SimilarityIndex {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

/// Embeds every pool question and gold-SQL skeleton.
pub fn build_index(
    pool: &[ExampleTriple],
    embedder: &dyn Embedder,
    mode: Parallelism,
) -> Result<SimilarityIndex, SelectorError> {
    if pool.is_empty() {
        return Ok(SimilarityIndex::default());
    }
    let with_index = |r: Result<_, SelectorError>, i: usize| {
        r.map_err(|e| match e {
            SelectorError::Embedding { message, .. } => SelectorError::Embedding {
                index: Some(i),
                message,
            },
            other => other,
        })
    };
    let texts: Vec<(usize, &str, String)> = pool
        .iter()
        .map(|e| (e.index, e.question.as_str(), sql_skeleton(&e.gold_sql)))
        .collect();
    if embedder.is_local() {
        let pairs = par::try_map(&texts, mode, |(i, q, s)| {
            let q = with_index(embedder.embed_one(q), *i)?;
            let s = with_index(embedder.embed_one(s), *i)?;
            Ok::<_, SelectorError>((*i, q, s))
        })?;
        let mut index = SimilarityIndex::default();
        for (i, q, s) in pairs {
            index.questions.insert(i, q);
            index.skeletons.insert(i, s);
        }
        return Ok(index);
    }
    let qs: Vec<&str> = texts.iter().map(|t| t.1).collect();
    let ss: Vec<&str> = texts.iter().map(|t| t.2.as_str()).collect();
    let qv = embedder.embed(&qs)?;
    let sv = embedder.embed(&ss)?;
    Ok(SimilarityIndex {
        questions: texts.iter().map(|t| t.0).zip(qv).collect(),
        skeletons: texts.iter().map(|t| t.0).zip(sv).collect(),
    })
}

/// Picks exemplars for targets from a fixed pool.
pub struct Selector<'a> {
    pub pool: &'a [ExampleTriple],
    pub index: &'a SimilarityIndex,
    pub embedder: &'a dyn Embedder,
}

impl<'a> Selector<'a> {
    /// Returns `policy.k` exemplars ordered most-similar-last, so the
    /// nearest one sits right before the target question. `draft` is a
    /// provisional SQL answer for the target, used by dual similarity.
    pub fn select(
        &self,
        target: &ExampleTriple,
        policy: &SelectionPolicy,
        draft: Option<&str>,
    ) -> Result<Vec<&'a ExampleTriple>, SelectorError> {
        self.select_k(target, policy, policy.k, draft)
    }

    pub fn select_k(
        &self,
        target: &ExampleTriple,
        policy: &SelectionPolicy,
        k: usize,
        draft: Option<&str>,
    ) -> Result<Vec<&'a ExampleTriple>, SelectorError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let candidates: Vec<&'a ExampleTriple> = self
            .pool
            .iter()
            .filter(|c| !(policy.exclude_same_example && is_same(c, target)))
            .collect();
        if k > candidates.len() {
            return Err(SelectorError::KTooLarge {
                k,
                available: candidates.len(),
            });
        }
        match policy.strategy {
            Strategy::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(policy.seed, target.index as u64));
                Ok(sample(&mut rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect())
            }
            Strategy::QuestionSimilarity => {
                let ranked = self.rank_by_question(target, &candidates)?;
                Ok(most_similar_last(ranked.into_iter().take(k).map(|(c, _)| c)))
            }
            Strategy::DualSimilarity => {
                let Some(draft) = draft else {
                    tracing::warn!(
                        target_index = target.index,
                        "no draft SQL for dual similarity; falling back to question similarity"
                    );
                    let ranked = self.rank_by_question(target, &candidates)?;
                    return Ok(most_similar_last(ranked.into_iter().take(k).map(|(c, _)| c)));
                };
                let shortlist = (4 * k).max(16);
                let draft_vec = self.embed(&sql_skeleton(draft))?;
                let mut scored = Vec::with_capacity(shortlist);
                for (c, qsim) in self.rank_by_question(target, &candidates)?.into_iter().take(shortlist) {
                    let sv = self.index.skeletons.get(&c.index).ok_or(SelectorError::IndexIncomplete(c.index))?;
                    scored.push((c, cosine(sv, &draft_vec), qsim));
                }
                scored.sort_by(|a, b| {
                    b.1.total_cmp(&a.1)
                        .then(b.2.total_cmp(&a.2))
                        .then(a.0.index.cmp(&b.0.index))
                });
                Ok(most_similar_last(scored.into_iter().take(k).map(|(c, _, _)| c)))
            }
        }
    }

    /// Candidates by descending question cosine, ties by ascending index.
    pub fn rank_by_question(
        &self,
        target: &ExampleTriple,
        candidates: &[&'a ExampleTriple],
    ) -> Result<Vec<(&'a ExampleTriple, f64)>, SelectorError> {
        let tv = self.embed(&target.question)?;
        let mut scored = candidates
            .iter()
            .map(|c| {
                let v = self.index.questions.get(&c.index).ok_or(SelectorError::IndexIncomplete(c.index))?;
                Ok((*c, cosine(v, &tv)))
            })
            .collect::<Result<Vec<_>, SelectorError>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.index.cmp(&b.0.index)));
        Ok(scored)
    }

    fn embed(&self, text: &str) -> Result<SparseVector, SelectorError> {
        self.embedder.embed_one(text)
    }
}

fn is_same(a: &ExampleTriple, b: &ExampleTriple) -> bool {
    a.index == b.index && a.db_id == b.db_id && a.question == b.question
}

fn most_similar_last<'a>(best_first: impl Iterator<Item = &'a ExampleTriple>) -> Vec<&'a ExampleTriple> {
    let mut v: Vec<_> = best_first.collect();
    v.reverse();
    v
}

/// Combines a run seed with a per-example key (splitmix64 finalizer).
pub fn mix_seed(seed: u64, key: u64) -> u64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotMode {
    FixedK,
    RandomShot,
}

pub const DEFAULT_SHOT_CHOICES: [i64; 4] = [0, 1, 3, 5];

/// Shot count for each of `n` examples: constant `k` for fixed-k, or a
/// seeded uniform draw from `choices` for random-shot.
pub fn mix_shots(
    policy: &SelectionPolicy,
    mode: ShotMode,
    choices: &[i64],
    n: usize,
) -> Result<Vec<usize>, SelectorError> {
    match mode {
        ShotMode::FixedK => Ok(vec![policy.k; n]),
        ShotMode::RandomShot => {
            if choices.is_empty() {
                return Err(SelectorError::EmptyChoices);
            }
            if let Some(&bad) = choices.iter().find(|&&c| c < 0) {
                return Err(SelectorError::NegativeChoice(bad));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(policy.seed, 0x5107));
            Ok((0..n).map(|_| choices[rng.random_range(0..choices.len())] as usize).collect())
        }
    }
}
