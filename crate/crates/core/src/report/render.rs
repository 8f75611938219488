use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BucketCounts, Delta, DeltaReport, Rate, ReportError, RunSummary};
use crate::sqlkit::{DifficultyLabel, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    PlainTable,
    Csv,
    Structured,
}

/// Rounds half away from zero to three decimals. With `signed`, positive
/// values get a leading `+`.
pub fn format_rate(r: Rate, signed: bool) -> String {
    let neg = r < Rate::from_integer(0);
    let a = if neg { -r } else { r };
    let (num, den) = (*a.numer(), *a.denom());
    let milli = (2 * num * 1000 + den) / (2 * den);
    let body = format!("{}.{:03}", milli / 1000, milli % 1000);
    match (neg, milli == 0, signed) {
        (_, true, _) => body,
        (true, false, _) => format!("-{body}"),
        (false, false, true) => format!("+{body}"),
        (false, false, false) => body,
    }
}

fn cell(r: Option<Rate>, signed: bool) -> String {
    r.map_or_else(|| "n/a".to_string(), |r| format_rate(r, signed))
}

const W: usize = 9;

fn header(scheme: Scheme) -> String {
    let mut s = format!("{:<W$}", "");
    for l in scheme.labels() {
        let _ = write!(s, "{:<W$}", l.title());
    }
    s.push_str("Overall");
    s
}

fn row(name: &str, cells: impl IntoIterator<Item = String>) -> String {
    let mut s = format!("{name:<W$}");
    let cells: Vec<String> = cells.into_iter().collect();
    for (i, c) in cells.iter().enumerate() {
        if i + 1 == cells.len() {
            s.push_str(c);
        } else {
            let _ = write!(s, "{c:<W$}");
        }
    }
    s
}

fn labels_then_overall(scheme: Scheme) -> impl Iterator<Item = Option<DifficultyLabel>> {
    scheme.labels().iter().map(|l| Some(*l)).chain(std::iter::once(None))
}

pub fn render_summary(s: &RunSummary, format: ReportFormat) -> String {
    match format {
        ReportFormat::PlainTable => {
            let mut out = format!("run {} (config {})\n{}\n", s.run_id, s.config_fingerprint, header(s.scheme));
            if s.overall.n == 0 {
                return out;
            }
            let n = labels_then_overall(s.scheme).map(|l| l.map_or(s.overall, |l| s.bucket(l)).n.to_string());
            let ex = labels_then_overall(s.scheme).map(|l| cell(s.ex_rate(l), false));
            let em = labels_then_overall(s.scheme).map(|l| cell(s.em_rate(l), false));
            for line in [row("Count", n), row("EX", ex), row("EM", em)] {
                out.push_str(&line);
                out.push('\n');
            }
            if let Some(v) = s.ves_mean {
                let _ = writeln!(out, "VES {v:.3}");
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "run_id",
                "config_fingerprint",
                "scheme",
                "bucket",
                "n",
                "em_correct",
                "ex_correct",
                "em_scored",
                "ex_scored",
                "ves_mean",
                "em_rate",
                "ex_rate",
            ])
            .expect("in-memory write");
            for l in labels_then_overall(s.scheme) {
                let c = l.map_or(s.overall, |l| s.bucket(l));
                let as_f64 = |r: Option<Rate>| r.map(|r| (*r.numer() as f64 / *r.denom() as f64).to_string()).unwrap_or_default();
                w.write_record([
                    s.run_id.clone(),
                    s.config_fingerprint.clone(),
                    s.scheme.to_string(),
                    l.map_or("overall", |l| l.as_str()).to_string(),
                    c.n.to_string(),
                    c.em_correct.to_string(),
                    c.ex_correct.to_string(),
                    s.em_scored.to_string(),
                    s.ex_scored.to_string(),
                    s.ves_mean.map(|v| v.to_string()).unwrap_or_default(),
                    as_f64(s.em_rate(l)),
                    as_f64(s.ex_rate(l)),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
        }
        ReportFormat::Structured => {
            let buckets: serde_json::Map<String, serde_json::Value> = labels_then_overall(s.scheme)
                .map(|l| {
                    let c = l.map_or(s.overall, |l| s.bucket(l));
                    (
                        l.map_or("overall", |l| l.as_str()).to_string(),
                        json!({
                            "n": c.n,
                            "em_correct": c.em_correct,
                            "ex_correct": c.ex_correct,
                            "em_rate": s.em_rate(l).map(exact),
                            "ex_rate": s.ex_rate(l).map(exact),
                        }),
                    )
                })
                .collect();
            let doc = json!({
                "run_id": s.run_id,
                "config_fingerprint": s.config_fingerprint,
                "scheme": s.scheme,
                "em_scored": s.em_scored,
                "ex_scored": s.ex_scored,
                "ves_mean": s.ves_mean,
                "buckets": buckets,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("json");
            text.push('\n');
            text
        }
    }
}

fn exact(r: Rate) -> serde_json::Value {
    json!({"value": *r.numer() as f64 / *r.denom() as f64, "exact": r.to_string()})
}

fn field(rec: &csv::StringRecord, i: usize) -> Result<&str, ReportError> {
    rec.get(i).ok_or_else(|| ReportError::Malformed(format!("missing column {i}")))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, ReportError> {
    s.parse().map_err(|_| ReportError::Malformed(format!("bad value `{s}`")))
}

fn scheme_of(s: &str) -> Result<Scheme, ReportError> {
    match s {
        "spider4" => Ok(Scheme::Spider4),
        "bird3" => Ok(Scheme::Bird3),
        other => Err(ReportError::Malformed(format!("unknown scheme `{other}`"))),
    }
}

fn rows(text: &str) -> Result<Vec<csv::StringRecord>, ReportError> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| ReportError::Malformed(e.to_string()))
}

/// Inverse of the CSV rendering of a summary.
pub fn parse_summary_csv(text: &str) -> Result<RunSummary, ReportError> {
    let rows = rows(text)?;
    let first = rows.first().ok_or_else(|| ReportError::Malformed("no rows".into()))?;
    let scheme = scheme_of(field(first, 2)?)?;
    let ves = field(first, 9)?;
    let mut s = RunSummary {
        run_id: field(first, 0)?.to_string(),
        scheme,
        counts: BTreeMap::new(),
        overall: BucketCounts::default(),
        em_scored: num(field(first, 7)?)?,
        ex_scored: num(field(first, 8)?)?,
        ves_mean: if ves.is_empty() { None } else { Some(num(ves)?) },
        config_fingerprint: field(first, 1)?.to_string(),
    };
    for r in &rows {
        let c = BucketCounts {
            n: num(field(r, 4)?)?,
            em_correct: num(field(r, 5)?)?,
            ex_correct: num(field(r, 6)?)?,
        };
        match field(r, 3)? {
            "overall" => s.overall = c,
            b => {
                let label = DifficultyLabel::parse(scheme, b)
                    .ok_or_else(|| ReportError::Malformed(format!("bucket `{b}` is not {scheme}")))?;
                s.counts.insert(label, c);
            }
        }
    }
    Ok(s)
}

pub fn render_delta(d: &DeltaReport, format: ReportFormat) -> String {
    let pick = |l: Option<DifficultyLabel>| l.map_or(d.overall, |l| d.buckets.get(&l).copied().unwrap_or_default());
    match format {
        ReportFormat::PlainTable => {
            let mut out = format!("{} vs {}\n{}\n", d.target_run, d.base_run, header(d.scheme));
            let ex = labels_then_overall(d.scheme).map(|l| cell(pick(l).ex, true));
            let em = labels_then_overall(d.scheme).map(|l| cell(pick(l).em, true));
            for line in [row("EX", ex), row("EM", em)] {
                out.push_str(&line);
                out.push('\n');
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["base_run", "target_run", "scheme", "bucket", "em_delta", "ex_delta"])
                .expect("in-memory write");
            for l in labels_then_overall(d.scheme) {
                let x = pick(l);
                let show = |r: Option<Rate>| r.map(|r| r.to_string()).unwrap_or_default();
                w.write_record([
                    d.base_run.clone(),
                    d.target_run.clone(),
                    d.scheme.to_string(),
                    l.map_or("overall", |l| l.as_str()).to_string(),
                    show(x.em),
                    show(x.ex),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
        }
        ReportFormat::Structured => {
            let buckets: serde_json::Map<String, serde_json::Value> = labels_then_overall(d.scheme)
                .map(|l| {
                    let x = pick(l);
                    (
                        l.map_or("overall", |l| l.as_str()).to_string(),
                        json!({"em": x.em.map(exact), "ex": x.ex.map(exact)}),
                    )
                })
                .collect();
            let doc = json!({
                "base_run": d.base_run,
                "target_run": d.target_run,
                "scheme": d.scheme,
                "deltas": buckets,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("json");
            text.push('\n');
            text
        }
    }
}

pub fn parse_delta_csv(text: &str) -> Result<DeltaReport, ReportError> {
    let rows = rows(text)?;
    let first = rows.first().ok_or_else(|| ReportError::Malformed("no rows".into()))?;
    let scheme = scheme_of(field(first, 2)?)?;
    let opt = |s: &str| -> Result<Option<Rate>, ReportError> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let mut d = DeltaReport {
        base_run: field(first, 0)?.to_string(),
        target_run: field(first, 1)?.to_string(),
        scheme,
        buckets: BTreeMap::new(),
        overall: Delta::default(),
    };
    for r in &rows {
        let x = Delta {
            em: opt(field(r, 4)?)?,
            ex: opt(field(r, 5)?)?,
        };
        match field(r, 3)? {
            "overall" => d.overall = x,
            b => {
                let label = DifficultyLabel::parse(scheme, b)
                    .ok_or_else(|| ReportError::Malformed(format!("bucket `{b}` is not {scheme}")))?;
                d.buckets.insert(label, x);
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_rounding() {
        assert_eq!(format_rate(Rate::new(647, 1034), false), "0.626");
        assert_eq!(format_rate(Rate::new(1, 2000), false), "0.001");
        assert_eq!(format_rate(Rate::new(-1, 2000), true), "-0.001");
        assert_eq!(format_rate(Rate::new(1, 3000), true), "0.000");
        assert_eq!(format_rate(Rate::new(9, 10), true), "+0.900");
        assert_eq!(format_rate(Rate::from_integer(1), false), "1.000");
    }
}
