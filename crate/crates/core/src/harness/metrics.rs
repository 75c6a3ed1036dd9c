use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "step,episodes,train_return,test_win_rate,test_return,max_buffer_kl,mean_buffer_kl,critic_loss,policy_loss,epsilon,seconds";

/// One evaluation point. Training columns are empty before the first
/// update; `seconds` is empty unless wall-clock timing is enabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub episodes: u64,
    pub train_return: Option<f64>,
    pub test_win_rate: f64,
    pub test_return: f64,
    pub max_buffer_kl: Option<f64>,
    pub mean_buffer_kl: Option<f64>,
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub epsilon: f64,
    pub seconds: Option<f64>,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(METRICS_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        return Err(Error::Format(format!(
            "{}: unexpected metrics header `{header}`",
            path.display()
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Median and quartiles of one column across seeds at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: u64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of sorted data: position `(n-1)·p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of no data");
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-step median and quartiles of `column` across runs. Every run must
/// report the same step grid.
pub fn aggregate_by(runs: &[Vec<MetricsRow>], column: impl Fn(&MetricsRow) -> f64) -> Result<Vec<AggregateRow>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::invalid("aggregate needs at least one run"))?;
    for (i, run) in runs.iter().enumerate() {
        if run.len() != first.len() {
            return Err(Error::Format(format!(
                "run {i} has {} rows, run 0 has {}",
                run.len(),
                first.len()
            )));
        }
        for (j, (a, b)) in run.iter().zip(first).enumerate() {
            if a.step != b.step {
                return Err(Error::Format(format!(
                    "row {j}: run {i} is at step {}, run 0 at step {}",
                    a.step, b.step
                )));
            }
        }
    }
    Ok((0..first.len())
        .map(|j| {
            let mut vals: Vec<f64> = runs.iter().map(|r| column(&r[j])).collect();
            vals.sort_by(f64::total_cmp);
            AggregateRow {
                step: first[j].step,
                median: quantile(&vals, 0.5),
                q25: quantile(&vals, 0.25),
                q75: quantile(&vals, 0.75),
            }
        })
        .collect())
}

/// Aggregate of test win rate, the headline metric.
pub fn aggregate(runs: &[Vec<MetricsRow>]) -> Result<Vec<AggregateRow>> {
    aggregate_by(runs, |r| r.test_win_rate)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}
