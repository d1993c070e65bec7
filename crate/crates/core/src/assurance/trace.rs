//! Metric trace files: `timestamp_us,metric,value,job` with an empty job
//! column for node-level samples.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::model::Micros;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestamp_us: Micros,
    pub metric: String,
    pub value: f64,
    #[serde(default, deserialize_with = "empty_is_none")]
    pub job: Option<String>,
}

fn empty_is_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|s| !s.is_empty()))
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(TraceError::from)).collect()
}

pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp_us", "metric", "value", "job"])?;
    for r in rows {
        w.write_record([
            r.timestamp_us.to_string(),
            r.metric.clone(),
            r.value.to_string(),
            r.job.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_and_job_rows() {
        let text = "timestamp_us,metric,value,job\n0,loadavg,0.5,\n0,loadavg,0.25,noisy\n";
        let rows = read_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(rows[0].job, None);
        assert_eq!(rows[1].job.as_deref(), Some("noisy"));
        let mut out = Vec::new();
        write_trace_csv(&mut out, &rows).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
