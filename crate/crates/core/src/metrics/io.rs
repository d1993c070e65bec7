use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{MetricError, Ranking};
use crate::assurance::TraceRow;
use crate::model::Micros;

/// One row of the target file `timestamp_us,latency_us,slack_us`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub timestamp_us: Micros,
    pub latency_us: f64,
    pub slack_us: f64,
}

pub fn read_targets_csv<R: Read>(reader: R) -> Result<Vec<TargetRow>, MetricError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(|e| MetricError::Input(e.to_string()))).collect()
}

pub fn write_targets_csv<W: Write>(writer: W, rows: &[TargetRow]) -> Result<(), MetricError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| MetricError::Input(e.to_string());
    w.write_record(["timestamp_us", "latency_us", "slack_us"]).map_err(io)?;
    for r in rows {
        w.write_record([r.timestamp_us.to_string(), r.latency_us.to_string(), r.slack_us.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| MetricError::Input(e.to_string()))
}

/// Series aligned on the target timebase.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInputs {
    /// In order of first appearance in the trace.
    pub metrics: Vec<(String, Vec<f64>)>,
    pub latency: Vec<f64>,
    pub slack: Vec<f64>,
}

/// Pivots node-level trace rows onto the target timestamps. Rows carrying
/// a job attribution are ignored.
pub fn load_pipeline_inputs(trace: &[TraceRow], targets: &[TargetRow]) -> Result<PipelineInputs, MetricError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_metric: BTreeMap<&str, BTreeMap<Micros, f64>> = BTreeMap::new();
    for row in trace.iter().filter(|r| r.job.is_none()) {
        let entry = by_metric.entry(row.metric.as_str()).or_insert_with(|| {
            order.push(row.metric.clone());
            BTreeMap::new()
        });
        entry.insert(row.timestamp_us, row.value);
    }
    let mut metrics = Vec::with_capacity(order.len());
    for name in order {
        let samples = &by_metric[name.as_str()];
        let series = targets
            .iter()
            .map(|t| {
                samples.get(&t.timestamp_us).copied().ok_or_else(|| MetricError::MissingSample {
                    metric: name.clone(),
                    timestamp: t.timestamp_us,
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        metrics.push((name, series));
    }
    Ok(PipelineInputs {
        metrics,
        latency: targets.iter().map(|t| t.latency_us).collect(),
        slack: targets.iter().map(|t| t.slack_us).collect(),
    })
}

/// `name,score` rows, best first.
pub fn write_ranking_csv<W: Write>(writer: W, ranking: &Ranking) -> Result<(), MetricError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| MetricError::Input(e.to_string());
    w.write_record(["name", "score"]).map_err(io)?;
    for s in &ranking.scores {
        w.write_record([s.name.clone(), s.score.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| MetricError::Input(e.to_string()))
}
