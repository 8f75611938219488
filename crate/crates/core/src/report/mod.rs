//! Per-difficulty summaries, run-versus-run deltas and their renderings.
//!
//! Counts are kept as integers and rates as exact rationals; rounding only
//! happens when a human-readable table is rendered.

mod render;

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::metrics::EvalRecord;
use crate::sqlkit::{DifficultyLabel, Scheme};

pub use render::{format_rate, parse_delta_csv, parse_summary_csv, render_delta, render_summary, ReportFormat};

pub type Rate = Ratio<i64>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub n: u64,
    pub em_correct: u64,
    pub ex_correct: u64,
}

impl BucketCounts {
    fn add(&mut self, other: BucketCounts) {
        self.n += other.n;
        self.em_correct += other.em_correct;
        self.ex_correct += other.ex_correct;
    }
}

fn rate(correct: u64, n: u64) -> Option<Rate> {
    (n > 0).then(|| Ratio::new(correct as i64, n as i64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub scheme: Scheme,
    pub counts: BTreeMap<DifficultyLabel, BucketCounts>,
    pub overall: BucketCounts,
    /// False when EM was not computed for any record.
    pub em_scored: bool,
    pub ex_scored: bool,
    pub ves_mean: Option<f64>,
    pub config_fingerprint: String,
}

impl RunSummary {
    /// A summary with every bucket of `scheme` at zero.
    pub fn empty(run_id: &str, scheme: Scheme, config_fingerprint: &str) -> Self {
        RunSummary {
            run_id: run_id.into(),
            scheme,
            counts: scheme.labels().iter().map(|l| (*l, BucketCounts::default())).collect(),
            overall: BucketCounts::default(),
            em_scored: false,
            ex_scored: false,
            ves_mean: None,
            config_fingerprint: config_fingerprint.into(),
        }
    }

    pub fn bucket(&self, label: DifficultyLabel) -> BucketCounts {
        self.counts.get(&label).copied().unwrap_or_default()
    }

    pub fn em_rate(&self, label: Option<DifficultyLabel>) -> Option<Rate> {
        let c = label.map_or(self.overall, |l| self.bucket(l));
        self.em_scored.then(|| rate(c.em_correct, c.n)).flatten()
    }

    pub fn ex_rate(&self, label: Option<DifficultyLabel>) -> Option<Rate> {
        let c = label.map_or(self.overall, |l| self.bucket(l));
        self.ex_scored.then(|| rate(c.ex_correct, c.n)).flatten()
    }
}

/// Reduces per-example records into bucket and overall counts. Records
/// without a difficulty label (their gold did not parse) are left out and
/// logged.
pub fn summarize(records: &[EvalRecord], run_id: &str, scheme: Scheme, config_fingerprint: &str) -> RunSummary {
    let mut s = RunSummary::empty(run_id, scheme, config_fingerprint);
    let mut unlabeled = 0;
    let mut ves_sum = 0.0;
    let mut ves_any = false;
    for r in records {
        let Some(label) = r.difficulty.filter(|l| l.scheme() == scheme) else {
            unlabeled += 1;
            continue;
        };
        let c = BucketCounts {
            n: 1,
            em_correct: u64::from(r.em == Some(true)),
            ex_correct: u64::from(r.ex == Some(true)),
        };
        s.counts.entry(label).or_default().add(c);
        s.overall.add(c);
        s.em_scored |= r.em.is_some();
        s.ex_scored |= r.ex.is_some();
        if let Some(v) = r.ves_ratio {
            ves_sum += v;
            ves_any = true;
        }
    }
    if unlabeled > 0 {
        tracing::warn!(run = run_id, unlabeled, "records without a {scheme} label left out of the summary");
    }
    // Examples that are not execution-correct contribute zero.
    if ves_any && s.overall.n > 0 {
        s.ves_mean = Some(ves_sum / s.overall.n as f64);
    }
    s
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub em: Option<Rate>,
    pub ex: Option<Rate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub base_run: String,
    pub target_run: String,
    pub scheme: Scheme,
    pub buckets: BTreeMap<DifficultyLabel, Delta>,
    pub overall: Delta,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("cannot compare a {base} run with a {target} run")]
    SchemeMismatch { base: Scheme, target: Scheme },
    #[error("malformed report: {0}")]
    Malformed(String),
}

fn diff(a: Option<Rate>, b: Option<Rate>) -> Option<Rate> {
    Some(b? - a?)
}

/// Target minus base, per bucket and overall; positive means the target did better.
pub fn compare(base: &RunSummary, target: &RunSummary) -> Result<DeltaReport, ReportError> {
    if base.scheme != target.scheme {
        return Err(ReportError::SchemeMismatch {
            base: base.scheme,
            target: target.scheme,
        });
    }
    let delta = |l: Option<DifficultyLabel>| Delta {
        em: diff(base.em_rate(l), target.em_rate(l)),
        ex: diff(base.ex_rate(l), target.ex_rate(l)),
    };
    Ok(DeltaReport {
        base_run: base.run_id.clone(),
        target_run: target.run_id.clone(),
        scheme: base.scheme,
        buckets: base.scheme.labels().iter().map(|l| (*l, delta(Some(*l)))).collect(),
        overall: delta(None),
    })
}
