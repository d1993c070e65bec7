//! Worker-side assurance monitor.
//!
//! Three stages: detection raises an alarm from level or trend violations;
//! the alarm kills the most likely lower-criticality culprit; if the hazard
//! outlives `downgrade_timeout` the node's gamma is lowered and the control
//! plane is asked to migrate the critical jobs away.

mod trace;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::{AssuranceLevel, Criticality, JobId, Micros};

pub use trace::{read_trace_csv, write_trace_csv, TraceError, TraceRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub metric: String,
    pub timestamp: Micros,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub max_level: f64,
    /// Units per second.
    pub max_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub sampling_period: Micros,
    pub window: usize,
    pub thresholds: BTreeMap<String, Threshold>,
    pub kill_grace: Micros,
    pub downgrade_timeout: Micros,
    pub gamma_penalty: i64,
    pub watched_metrics: Vec<String>,
}

impl MonitorConfig {
    pub fn is_valid(&self) -> bool {
        self.window >= 2
            && self.sampling_period > 0
            && self.kill_grace > 0
            && self.downgrade_timeout > 0
            && self.gamma_penalty > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmReason {
    Level,
    Trend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detection {
    Clear,
    Alarm { metric: String, reason: AlarmReason },
}

/// Least-squares slope of value against time, in units per second.
pub fn ls_slope(samples: &[MetricSample]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let t0 = samples[0].timestamp;
    let xs: Vec<f64> = samples.iter().map(|s| (s.timestamp - t0) as f64 / 1e6).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.value).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, s) in xs.iter().zip(samples) {
        sxy += (x - mx) * (s.value - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Checks the most recent `config.window` samples of each watched metric.
///
/// The first metric (in `watched_metrics` order) whose window maximum
/// exceeds `max_level`, or whose slope exceeds `max_slope`, raises the
/// alarm. Metrics without a full window are skipped.
pub fn detect(samples: &[MetricSample], config: &MonitorConfig) -> Detection {
    for metric in &config.watched_metrics {
        let Some(th) = config.thresholds.get(metric) else { continue };
        let series: Vec<MetricSample> = samples.iter().filter(|s| &s.metric == metric).cloned().collect();
        if series.len() < config.window {
            continue;
        }
        let window = &series[series.len() - config.window..];
        let peak = window.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max);
        if peak > th.max_level {
            return Detection::Alarm { metric: metric.clone(), reason: AlarmReason::Level };
        }
        if ls_slope(window) > th.max_slope {
            return Detection::Alarm { metric: metric.clone(), reason: AlarmReason::Trend };
        }
    }
    Detection::Clear
}

/// A job running on the monitored node with its attributed share of the
/// alarmed metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobLoad {
    pub job: JobId,
    pub criticality: Criticality,
    pub contribution: f64,
}

/// The lower-criticality job with the largest contribution. Ties go to the
/// lower criticality, then to the smaller id. `None` when every job shares
/// the node's top criticality.
pub fn identify_guilty(jobs: &[JobLoad]) -> Option<JobId> {
    let top = jobs.iter().map(|j| j.criticality).max()?;
    jobs.iter()
        .filter(|j| j.criticality < top)
        .max_by(|a, b| {
            a.contribution
                .total_cmp(&b.contribution)
                .then(b.criticality.cmp(&a.criticality))
                .then(b.job.cmp(&a.job))
        })
        .map(|j| j.job.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HazardPhase {
    Clear,
    Alarmed,
    Killing,
    Downgraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardState {
    pub phase: HazardPhase,
    pub since: Micros,
    pub suspect: Option<JobId>,
    /// Start of the current run of clear detections, if any.
    #[serde(default)]
    pub clear_since: Option<Micros>,
}

impl HazardState {
    pub fn clear(at: Micros) -> Self {
        HazardState { phase: HazardPhase::Clear, since: at, suspect: None, clear_since: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Alarm { metric: String, reason: AlarmReason },
    KillJob { job: JobId },
    GammaDowngrade { delta: i64 },
    GammaRestore { delta: i64 },
    MigrateRequest { jobs: Vec<JobId> },
}

/// Jobs the control plane should move: those at the node's top
/// criticality, when that is above NO.
fn critical_jobs(jobs: &[JobLoad]) -> Vec<JobId> {
    let Some(top) = jobs.iter().map(|j| j.criticality).max() else { return Vec::new() };
    if top == Criticality::No {
        return Vec::new();
    }
    let mut out: Vec<JobId> = jobs.iter().filter(|j| j.criticality == top).map(|j| j.job.clone()).collect();
    out.sort();
    out
}

/// Advances the hazard state machine by one detection result.
pub fn step(
    state: &HazardState,
    now: Micros,
    detection: &Detection,
    jobs: &[JobLoad],
    config: &MonitorConfig,
) -> (HazardState, Vec<Action>) {
    let mut next = state.clone();
    let mut actions = Vec::new();
    let alarmed = matches!(detection, Detection::Alarm { .. });
    match (state.phase, detection) {
        (HazardPhase::Clear, Detection::Clear) => {}
        (HazardPhase::Clear | HazardPhase::Alarmed, Detection::Alarm { metric, reason }) => {
            actions.push(Action::Alarm { metric: metric.clone(), reason: *reason });
            let suspect = identify_guilty(jobs);
            if let Some(job) = &suspect {
                actions.push(Action::KillJob { job: job.clone() });
            }
            next = HazardState { phase: HazardPhase::Killing, since: now, suspect, clear_since: None };
        }
        (HazardPhase::Alarmed, Detection::Clear) => next = HazardState::clear(now),
        (HazardPhase::Killing, _) if alarmed => {
            next.clear_since = None;
            if now.saturating_sub(state.since) >= config.downgrade_timeout {
                actions.push(Action::GammaDowngrade { delta: -config.gamma_penalty });
                actions.push(Action::MigrateRequest { jobs: critical_jobs(jobs) });
                next = HazardState { phase: HazardPhase::Downgraded, since: now, suspect: state.suspect.clone(), clear_since: None };
            }
        }
        (HazardPhase::Killing, _) => {
            next.clear_since.get_or_insert(now);
            if now.saturating_sub(state.since) >= config.kill_grace {
                next = HazardState::clear(now);
            }
        }
        (HazardPhase::Downgraded, _) if alarmed => next.clear_since = None,
        (HazardPhase::Downgraded, _) => {
            let since = *next.clear_since.get_or_insert(now);
            let hold = config.window as Micros * config.sampling_period;
            if now.saturating_sub(since) >= hold {
                actions.push(Action::GammaRestore { delta: config.gamma_penalty });
                next = HazardState::clear(now);
            }
        }
    }
    (next, actions)
}

/// Stateful monitor for one node: buffers samples, runs detection and the
/// state machine on every tick, and owns the node's gamma.
#[derive(Debug, Clone)]
pub struct AssuranceAgent {
    pub config: MonitorConfig,
    pub assurance: AssuranceLevel,
    state: HazardState,
    node_samples: BTreeMap<String, VecDeque<MetricSample>>,
    job_samples: BTreeMap<(JobId, String), VecDeque<f64>>,
}

impl AssuranceAgent {
    pub fn new(config: MonitorConfig, assurance: AssuranceLevel) -> Self {
        AssuranceAgent {
            config,
            assurance,
            state: HazardState::clear(0),
            node_samples: BTreeMap::new(),
            job_samples: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &HazardState {
        &self.state
    }

    pub fn record(&mut self, sample: MetricSample) {
        let w = self.config.window;
        let buf = self.node_samples.entry(sample.metric.clone()).or_default();
        if buf.back().is_some_and(|last| last.timestamp >= sample.timestamp) {
            return; // timestamps must strictly increase per metric
        }
        buf.push_back(sample);
        while buf.len() > w {
            buf.pop_front();
        }
    }

    /// Per-job attribution of a metric (supplied by the job or the environment).
    pub fn record_job(&mut self, job: &str, metric: &str, value: f64) {
        let w = self.config.window;
        let buf = self.job_samples.entry((job.to_string(), metric.to_string())).or_default();
        buf.push_back(value);
        while buf.len() > w {
            buf.pop_front();
        }
    }

    pub fn forget_job(&mut self, job: &str) {
        self.job_samples.retain(|(j, _), _| j != job);
    }

    /// Mean attributed value of `metric` for `job` over the window.
    pub fn contribution(&self, job: &str, metric: &str) -> f64 {
        match self.job_samples.get(&(job.to_string(), metric.to_string())) {
            Some(buf) if !buf.is_empty() => buf.iter().sum::<f64>() / buf.len() as f64,
            _ => 0.0,
        }
    }

    pub fn detect(&self) -> Detection {
        let flat: Vec<MetricSample> = self.node_samples.values().flat_map(|b| b.iter().cloned()).collect();
        detect(&flat, &self.config)
    }

    /// One monitoring period. `jobs` lists the jobs currently on the node.
    /// Gamma changes are applied here before the actions are returned.
    pub fn tick(&mut self, now: Micros, jobs: &[(JobId, Criticality)]) -> Vec<Action> {
        let detection = self.detect();
        let metric = match &detection {
            Detection::Alarm { metric, .. } => Some(metric.clone()),
            Detection::Clear => None,
        };
        let loads: Vec<JobLoad> = jobs
            .iter()
            .map(|(job, c)| JobLoad {
                job: job.clone(),
                criticality: *c,
                contribution: metric.as_deref().map_or(0.0, |m| self.contribution(job, m)),
            })
            .collect();
        let (next, actions) = step(&self.state, now, &detection, &loads, &self.config);
        for a in &actions {
            match a {
                Action::GammaDowngrade { delta } | Action::GammaRestore { delta } => {
                    self.assurance.apply_gamma_delta(*delta);
                }
                _ => {}
            }
        }
        self.state = next;
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(window: usize, level: f64, slope: f64) -> MonitorConfig {
        MonitorConfig {
            sampling_period: 1000,
            window,
            thresholds: [("m".to_string(), Threshold { max_level: level, max_slope: slope })].into(),
            kill_grace: 5_000,
            downgrade_timeout: 20_000,
            gamma_penalty: 4,
            watched_metrics: vec!["m".into()],
        }
    }

    fn series(values: &[f64]) -> Vec<MetricSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| MetricSample { metric: "m".into(), timestamp: i as u64 * 1000, value: *v })
            .collect()
    }

    #[test]
    fn flat_trace_is_clear() {
        assert_eq!(detect(&series(&[0.1; 10]), &cfg(10, 1.0, 10.0)), Detection::Clear);
    }

    #[test]
    fn spike_raises_level_alarm() {
        let mut v = vec![0.1; 10];
        v[4] = 5.0;
        assert_eq!(
            detect(&series(&v), &cfg(10, 1.0, 1e9)),
            Detection::Alarm { metric: "m".into(), reason: AlarmReason::Level }
        );
    }

    #[test]
    fn ramp_raises_trend_alarm() {
        // 0 -> 1 over 10 ms, sampled every millisecond: slope 100/s
        let v: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let s = series(&v);
        assert!((ls_slope(&s) - 100.0).abs() < 1e-9);
        assert_eq!(
            detect(&s, &cfg(11, 2.0, 50.0)),
            Detection::Alarm { metric: "m".into(), reason: AlarmReason::Trend }
        );
    }

    #[test]
    fn short_window_is_not_judged() {
        assert_eq!(detect(&series(&[9.0; 3]), &cfg(10, 1.0, 1.0)), Detection::Clear);
    }

    fn load(job: &str, c: Criticality, x: f64) -> JobLoad {
        JobLoad { job: job.into(), criticality: c, contribution: x }
    }

    #[test]
    fn guilty_job() {
        assert_eq!(
            identify_guilty(&[load("hi", Criticality::Hi, 0.1), load("no", Criticality::No, 0.9)]),
            Some("no".into())
        );
        assert_eq!(identify_guilty(&[load("a", Criticality::Hi, 0.1), load("b", Criticality::Hi, 0.9)]), None);
        assert_eq!(
            identify_guilty(&[
                load("hi", Criticality::Hi, 0.0),
                load("low", Criticality::Low, 0.4),
                load("no", Criticality::No, 0.4)
            ]),
            Some("no".into())
        );
        assert_eq!(identify_guilty(&[]), None);
    }

    fn alarm() -> Detection {
        Detection::Alarm { metric: "m".into(), reason: AlarmReason::Level }
    }

    #[test]
    fn three_stages() {
        let c = cfg(10, 1.0, 1.0);
        let jobs = [load("ctrl", Criticality::Hi, 0.0), load("noisy", Criticality::No, 3.0)];
        let (s1, a1) = step(&HazardState::clear(0), 1000, &alarm(), &jobs, &c);
        assert_eq!(s1.phase, HazardPhase::Killing);
        assert_eq!(
            a1,
            vec![
                Action::Alarm { metric: "m".into(), reason: AlarmReason::Level },
                Action::KillJob { job: "noisy".into() }
            ]
        );
        let after_kill = [load("ctrl", Criticality::Hi, 0.0)];
        let (s2, a2) = step(&s1, 20_999, &alarm(), &after_kill, &c);
        assert_eq!(s2.phase, HazardPhase::Killing);
        assert!(a2.is_empty());
        let (s3, a3) = step(&s2, 21_000, &alarm(), &after_kill, &c);
        assert_eq!(s3.phase, HazardPhase::Downgraded);
        assert_eq!(
            a3,
            vec![Action::GammaDowngrade { delta: -4 }, Action::MigrateRequest { jobs: vec!["ctrl".into()] }]
        );
        // persisting hazard: no repeated notification
        let (s4, a4) = step(&s3, 40_000, &alarm(), &after_kill, &c);
        assert_eq!(s4.phase, HazardPhase::Downgraded);
        assert!(a4.is_empty());
    }

    #[test]
    fn recovery_within_grace() {
        let c = cfg(10, 1.0, 1.0);
        let jobs = [load("ctrl", Criticality::Hi, 0.0), load("noisy", Criticality::No, 3.0)];
        let (s1, _) = step(&HazardState::clear(0), 0, &alarm(), &jobs, &c);
        let (s2, a2) = step(&s1, 2000, &Detection::Clear, &jobs, &c);
        assert_eq!(s2.phase, HazardPhase::Killing);
        assert!(a2.is_empty());
        let (s3, a3) = step(&s2, 5000, &Detection::Clear, &jobs, &c);
        assert_eq!(s3.phase, HazardPhase::Clear);
        assert!(a3.is_empty());
    }

    #[test]
    fn downgraded_restores_after_a_clear_window() {
        let c = cfg(10, 1.0, 1.0);
        let s = HazardState { phase: HazardPhase::Downgraded, since: 0, suspect: None, clear_since: None };
        let (s1, a1) = step(&s, 1000, &Detection::Clear, &[], &c);
        assert!(a1.is_empty());
        let (s2, a2) = step(&s1, 10_999, &Detection::Clear, &[], &c);
        assert!(a2.is_empty());
        let (s3, a3) = step(&s2, 11_000, &Detection::Clear, &[], &c);
        assert_eq!(s3.phase, HazardPhase::Clear);
        assert_eq!(a3, vec![Action::GammaRestore { delta: 4 }]);
    }

    #[test]
    fn agent_owns_gamma() {
        let c = cfg(3, 1.0, 1e9);
        let mut agent = AssuranceAgent::new(c, AssuranceLevel::new(5, 4));
        let jobs = vec![("ctrl".to_string(), Criticality::Hi)];
        for (i, t) in (0..40u64).map(|i| (i, i * 1000)) {
            agent.record(MetricSample { metric: "m".into(), timestamp: t, value: if i >= 5 { 3.0 } else { 0.0 } });
            agent.tick(t, &jobs);
        }
        assert_eq!(agent.state().phase, HazardPhase::Downgraded);
        assert_eq!(agent.assurance.effective(), 5);
        assert_eq!(agent.assurance.gamma, -4);
    }
}
