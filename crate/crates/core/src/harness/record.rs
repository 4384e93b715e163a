//! Metric streams, their CSV form and seed aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::learner::RunStatus;
use crate::{Error, Result};

/// Name of the metric row that carries [`RunStatus::code`].
pub const STATUS_METRIC: &str = "status";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

/// The metric stream of one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    /// Depth, present for sweep output.
    pub n: Option<usize>,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub status: RunStatus,
    /// Updates applied; less than the budget for divergent runs.
    pub steps: usize,
}

impl RunRecord {
    pub fn new(seed: u64) -> Self {
        Self {
            n: None,
            seed,
            rows: Vec::new(),
            status: RunStatus::Completed,
            steps: 0,
        }
    }

    pub fn push(&mut self, step: usize, metric: impl Into<String>, value: f64) {
        self.rows.push(MetricRow {
            step,
            metric: metric.into(),
            value,
        });
    }

    /// Last recorded value of `metric`.
    pub fn last(&self, metric: &str) -> Option<f64> {
        self.rows.iter().rev().find(|r| r.metric == metric).map(|r| r.value)
    }

    pub fn series(&self, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.step, r.value))
            .collect()
    }
}

/// Writes `seed,step,metric,value`, or `n,seed,step,metric,value` when every
/// record carries a depth.
pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let tagged = !records.is_empty() && records.iter().all(|r| r.n.is_some());
    let mut w = csv::Writer::from_writer(out);
    if tagged {
        w.write_record(["n", "seed", "step", "metric", "value"])?;
    } else {
        w.write_record(["seed", "step", "metric", "value"])?;
    }
    for r in records {
        for row in &r.rows {
            let seed = r.seed.to_string();
            let step = row.step.to_string();
            let value = format_value(row.value);
            if tagged {
                let n = r.n.unwrap_or_default().to_string();
                w.write_record([n.as_str(), &seed, &step, &row.metric, &value])?;
            } else {
                w.write_record([seed.as_str(), &step, &row.metric, &value])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
fn format_value(v: f64) -> String {
    format!("{v:?}")
}

/// Reads either CSV layout back into records, one per `(n, seed)` group.
/// Record order follows first appearance.
pub fn read_records<R: Read>(input: R, source_name: &str) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let tagged = match cols.as_slice() {
        ["seed", "step", "metric", "value"] => false,
        ["n", "seed", "step", "metric", "value"] => true,
        other => return Err(Error::Aggregation(format!(
            "{source_name}: unexpected header {other:?}, expected seed,step,metric,value or n,seed,step,metric,value"
        ))),
    };
    let mut order: Vec<(Option<usize>, u64)> = Vec::new();
    let mut groups: BTreeMap<(Option<usize>, u64), RunRecord> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 2,
            message: format!("bad {what}"),
        };
        let off = usize::from(tagged);
        let n = if tagged {
            Some(row[0].parse::<usize>().map_err(|_| bad("n"))?)
        } else {
            None
        };
        let seed: u64 = row[off].parse().map_err(|_| bad("seed"))?;
        let step: usize = row[off + 1].parse().map_err(|_| bad("step"))?;
        let metric = row[off + 2].to_string();
        let value: f64 = row[off + 3].parse().map_err(|_| bad("value"))?;
        let key = (n, seed);
        let record = groups.entry(key).or_insert_with(|| {
            order.push(key);
            let mut r = RunRecord::new(seed);
            r.n = n;
            r
        });
        if let Some(prev) = record.rows.last() {
            if step < prev.step {
                return Err(bad("step (stamps must not decrease)"));
            }
        }
        if metric == STATUS_METRIC {
            record.status = RunStatus::from_code(value as u8).ok_or_else(|| bad("status code"))?;
            record.steps = step;
        }
        record.push(step, metric, value);
    }
    Ok(order.into_iter().filter_map(|k| groups.remove(&k)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    pub seeds: usize,
}

/// Trailing moving average per seed, then mean and population standard
/// deviation across seeds, for every metric.
///
/// The window spans `window_fraction` of the longest run in step units. Every
/// record must carry the same metric names; streams may differ in length.
pub fn aggregate(records: &[RunRecord], window_fraction: f64) -> Result<Vec<MetricSummary>> {
    let first = records
        .first()
        .ok_or_else(|| Error::Aggregation("no records to aggregate".into()))?;
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Aggregation(format!(
            "window fraction {window_fraction} outside (0, 1]"
        )));
    }
    let names = |r: &RunRecord| r.rows.iter().map(|m| m.metric.clone()).collect::<BTreeSet<_>>();
    let metrics = names(first);
    for r in &records[1..] {
        if names(r) != metrics {
            return Err(Error::Aggregation(format!(
                "seed {} records metrics {:?}, seed {} records {:?}",
                first.seed,
                metrics,
                r.seed,
                names(r)
            )));
        }
    }
    let horizon = records
        .iter()
        .flat_map(|r| r.rows.iter().map(|m| m.step))
        .max()
        .unwrap_or(0);
    let window = window_fraction * horizon as f64;
    let mut out = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let terminal: Vec<f64> = records
            .iter()
            .map(|r| {
                let series = r.series(&metric);
                let end = series.last().map(|(s, _)| *s).unwrap_or(0) as f64;
                let tail: Vec<f64> = series
                    .iter()
                    .filter(|(s, _)| *s as f64 >= end - window)
                    .map(|(_, v)| *v)
                    .collect();
                tail.iter().sum::<f64>() / tail.len() as f64
            })
            .collect();
        let count = terminal.len() as f64;
        let mean = terminal.iter().sum::<f64>() / count;
        let var = terminal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        out.push(MetricSummary {
            metric,
            mean,
            std: var.sqrt(),
            seeds: terminal.len(),
        });
    }
    Ok(out)
}
