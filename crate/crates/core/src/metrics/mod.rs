//! Offline ranking of monitoring metrics against activation latency and
//! slack.
//!
//! ```text
//! metric ─┐
//!         ├─ max filter ─ x^p ─ unit energy ─┬─ corr(·, latency) ─ w_l ─┐
//! latency ┤                                  └─ corr(·, slack) ── -w_s ─┴─ score
//! slack ──┘
//! ```
//!
//! Highly correlated metrics are dropped before scoring.

mod io;

use serde::{Deserialize, Serialize};

pub use io::{load_pipeline_inputs, read_targets_csv, write_ranking_csv, write_targets_csv, PipelineInputs, TargetRow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series of length {len} is shorter than the window {window}")]
    TooShort { len: usize, window: usize },
    #[error("invalid pipeline config: {0}")]
    BadConfig(String),
    #[error("metric {metric:?} has no sample at {timestamp} us")]
    MissingSample { metric: String, timestamp: u64 },
    #[error("input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: usize,
    pub exponent: u32,
    pub weight_latency: f64,
    pub weight_slack: f64,
    pub redundancy_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: 50,
            exponent: 4,
            weight_latency: 0.5,
            weight_slack: 0.5,
            redundancy_threshold: 0.95,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.window == 0 {
            return Err(MetricError::BadConfig("window must be at least 1".into()));
        }
        if self.exponent == 0 || !self.exponent.is_multiple_of(2) {
            return Err(MetricError::BadConfig("exponent must be a positive even integer".into()));
        }
        if ((self.weight_latency + self.weight_slack) - 1.0).abs() > 1e-9 {
            return Err(MetricError::BadConfig("weights must sum to 1".into()));
        }
        if !(self.redundancy_threshold > 0.0 && self.redundancy_threshold <= 1.0) {
            return Err(MetricError::BadConfig("redundancy_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Slack time `d - a - C`; negative means the deadline was missed.
pub fn slack(deadline: i64, arrival: i64, wcet: i64) -> i128 {
    deadline as i128 - arrival as i128 - wcet as i128
}

/// Trailing max filter: sample `i` becomes the max of the last `window`
/// samples ending at `i`.
pub fn max_filter(s: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..s.len())
        .map(|i| s[i.saturating_sub(w - 1)..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Scales `v` so that the sum of squares is one. All-zero input is
/// returned unchanged.
pub fn unit_energy(v: &[f64]) -> Vec<f64> {
    let e: f64 = v.iter().map(|x| x * x).sum();
    if e == 0.0 {
        return v.to_vec();
    }
    let n = e.sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn preprocess(s: &[f64], config: &PipelineConfig) -> Result<Vec<f64>, MetricError> {
    if s.len() < config.window {
        return Err(MetricError::TooShort { len: s.len(), window: config.window });
    }
    let exp = config.exponent as i32;
    let spiked: Vec<f64> = max_filter(s, config.window).into_iter().map(|x| x.powi(exp)).collect();
    Ok(unit_energy(&spiked))
}

/// Zero-lag cross-correlation (inner product).
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Pearson correlation of two raw series; zero when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    if a.is_empty() {
        return Ok(0.0);
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Sorted by descending score, ties by name.
    pub scores: Vec<MetricScore>,
    /// `(dropped, kept metric it duplicated)`.
    pub dropped: Vec<(String, String)>,
}

impl Ranking {
    pub fn names(&self) -> Vec<&str> {
        self.scores.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn top_k_table(&self, k: usize) -> String {
        let width = self.scores.iter().take(k).map(|s| s.name.len()).max().unwrap_or(4).max(6);
        let mut out = format!("{:>4}  {:<width$}  {:>9}\n", "rank", "metric", "score");
        for (i, s) in self.scores.iter().take(k).enumerate() {
            out.push_str(&format!("{:>4}  {:<width$}  {:>9.6}\n", i + 1, s.name, s.score));
        }
        out
    }
}

/// Ranks `metrics` (in input order) against latency and slack.
pub fn rank_metrics(
    metrics: &[(String, Vec<f64>)],
    latency: &[f64],
    slack: &[f64],
    config: &PipelineConfig,
) -> Result<Ranking, MetricError> {
    config.validate()?;
    let n = latency.len();
    if slack.len() != n {
        return Err(MetricError::LengthMismatch(n, slack.len()));
    }
    if let Some((_, s)) = metrics.iter().find(|(_, s)| s.len() != n) {
        return Err(MetricError::LengthMismatch(n, s.len()));
    }

    let mut kept: Vec<&(String, Vec<f64>)> = Vec::new();
    let mut dropped = Vec::new();
    for m in metrics {
        let mut dup = None;
        for k in &kept {
            if pearson(&m.1, &k.1)?.abs() > config.redundancy_threshold {
                dup = Some(k.0.clone());
                break;
            }
        }
        match dup {
            Some(of) => dropped.push((m.0.clone(), of)),
            None => kept.push(m),
        }
    }

    let lat = preprocess(latency, config)?;
    let sl = preprocess(slack, config)?;
    let mut scores = Vec::with_capacity(kept.len());
    for (name, series) in kept {
        let p = preprocess(series, config)?;
        let score = config.weight_latency * cross_correlation(&p, &lat)? - config.weight_slack * cross_correlation(&p, &sl)?;
        scores.push(MetricScore { name: name.clone(), score });
    }
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.name.cmp(&b.name)));
    Ok(Ranking { scores, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_examples() {
        assert_eq!(slack(1900, 0, 1900), 0);
        assert_eq!(slack(10_000, 0, 1900), 8100);
        assert_eq!(slack(5, 4, 3), -2);
    }

    #[test]
    fn preprocess_hand_example() {
        let cfg = PipelineConfig { window: 2, ..Default::default() };
        let out = preprocess(&[1.0, 0.0, 0.0, 0.0], &cfg).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let want = [h, h, 0.0, 0.0];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_and_zero_series() {
        let cfg = PipelineConfig { window: 3, ..Default::default() };
        let out = preprocess(&[2.5; 16], &cfg).unwrap();
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(preprocess(&[0.0; 8], &cfg).unwrap(), vec![0.0; 8]);
        assert!(preprocess(&[1.0; 2], &cfg).is_err());
    }

    #[test]
    fn correlation_examples() {
        let a = unit_energy(&[3.0, 4.0]);
        assert!((cross_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cross_correlation(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cross_correlation(&[1.0, 0.0], &[0.6, 0.8]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(cross_correlation(&[1.0], &[1.0, 2.0]), Err(MetricError::LengthMismatch(1, 2)));
    }

    #[test]
    fn rejects_bad_config() {
        let odd = PipelineConfig { exponent: 3, ..Default::default() };
        assert!(odd.validate().is_err());
        let weights = PipelineConfig { weight_latency: 0.7, ..Default::default() };
        assert!(weights.validate().is_err());
    }
}
