//! Discrete-event cluster simulation over virtual time.
//!
//! Each sampling period every live node produces its metric channels
//! (seeded Gaussian baseline plus injected stress), feeds its assurance
//! agent and queues any resulting reports. Every reconciliation interval
//! the nodes heartbeat to the control plane and its actions are applied
//! to the simulated agents. Admitted servers are executed exactly once a
//! job stops or the horizon is reached.

mod scenarios;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::admission::exec::{execute, ExecConfig, Supply};
use crate::admission::{resolve_tasks_at, ResolvedTask, ServerParams};
use crate::assurance::{Action, AlarmReason, AssuranceAgent, MetricSample, MonitorConfig, TraceRow};
use crate::control::{
    ControlAction, ControlConfig, ControlPlane, Decision, DeploymentView, JobView, NodeReport, NodeView,
    SchedulingPolicy,
};
use crate::metrics::{slack, TargetRow};
use crate::model::{validate_network, validate_node, Criticality, JobId, JobSpec, Micros, Network, NodeId, Rational, Violation, WorkerNode};
use crate::protocol::{encode, read_frame, Message};

pub use scenarios::{stress_phase_scenario, three_stage_scenario, PHASES, STRESSED_CHANNELS};

/// Stress on this pseudo-metric withholds CPU from the node's servers.
pub const SUPPLY_METRIC: &str = "cpu_supply";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `(source, factor)`: the channel is an exact scaled copy of another.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror: Option<(String, f64)>,
}

/// Synthetic activation probe producing latency and slack targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub node: NodeId,
    /// Relative deadline of the probe activation.
    pub period: Micros,
    pub wcet: Micros,
    pub base_latency: f64,
    pub noise_sd: f64,
    /// Latency added per unit of stress on each channel.
    pub gains: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    SubmitJob {
        job: JobSpec,
    },
    NodeCrash {
        node: NodeId,
    },
    StressInject {
        node: NodeId,
        metric: String,
        magnitude: f64,
        duration: Micros,
        /// Job the stress is attributed to.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        job: Option<JobId>,
        /// Keep stressing after the attributed job stops.
        #[serde(default)]
        persists: bool,
    },
    ReplicaFail {
        job: JobId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub at: Micros,
    #[serde(flatten)]
    pub event: SimEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub seed: u64,
    pub horizon: Micros,
    pub nodes: Vec<WorkerNode>,
    #[serde(default)]
    pub networks: Vec<Network>,
    #[serde(default)]
    pub events: Vec<TimedEvent>,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<SchedulingPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlConfig>,
    /// Defaults to the monitor sampling period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_period: Option<Micros>,
    #[serde(default = "default_interval")]
    pub reconcile_interval: Micros,
}

fn default_interval() -> Micros {
    50_000
}

/// Monitoring used when a scenario does not configure its own: nothing is
/// watched, so agents never alarm.
pub fn quiet_monitor() -> MonitorConfig {
    MonitorConfig {
        sampling_period: 10_000,
        window: 10,
        thresholds: BTreeMap::new(),
        kill_grace: 50_000,
        downgrade_timeout: 100_000,
        gamma_penalty: 1,
        watched_metrics: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioInvalid {
    #[error("events are not sorted by time")]
    Unsorted,
    #[error("event at {at} lies beyond the horizon {horizon}")]
    BeyondHorizon { at: Micros, horizon: Micros },
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("duplicate node {0:?}")]
    DuplicateNode(NodeId),
    #[error("invalid node or network")]
    Model(Vec<Violation>),
    #[error("invalid monitor configuration")]
    Monitor,
    #[error("sampling period must be positive and divide the reconcile interval")]
    Timing,
    #[error("mirror channel {0:?} refers to an unknown or later channel")]
    Mirror(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimelineEvent {
    Submitted { job: JobId },
    Rejected { job: JobId, violations: Vec<String> },
    Placed { job: JobId, node: NodeId },
    Preempted { job: JobId, node: NodeId, victims: Vec<JobId> },
    Unschedulable { job: JobId },
    Evicted { job: JobId, node: NodeId },
    Migrated { job: JobId, from: NodeId, to: NodeId },
    NodeCrash { node: NodeId },
    NodeLost { node: NodeId },
    StressStart { node: NodeId, metric: String, magnitude: f64, job: Option<JobId> },
    StressEnd { node: NodeId, metric: String },
    Alarm { node: NodeId, metric: String, reason: AlarmReason },
    KillJob { node: NodeId, job: JobId },
    JobFailed { job: JobId },
    GammaDowngrade { node: NodeId, delta: i64, effective: i64 },
    GammaRestore { node: NodeId, delta: i64, effective: i64 },
    MigrateRequest { node: NodeId, jobs: Vec<JobId> },
    ReplicaFail { job: JobId },
    Routed { deployment: String, leader: JobId, promoted: bool },
    RouteFailed { deployment: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at: Micros,
    #[serde(flatten)]
    pub event: TimelineEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissRecord {
    pub job: JobId,
    pub node: NodeId,
    pub task: String,
    pub deadline: Micros,
    pub remaining: Micros,
    /// The supply was deliberately withheld before this deadline.
    pub injected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub at: Micros,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalState {
    pub nodes: Vec<NodeView>,
    pub jobs: Vec<JobView>,
    pub deployments: Vec<DeploymentView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub horizon: Micros,
    pub timeline: Vec<TimelineEntry>,
    pub misses: Vec<MissRecord>,
    pub violations: Vec<InvariantViolation>,
    pub final_state: FinalState,
    /// Node-level and job-attributed metric samples.
    pub traces: Vec<TraceRow>,
    /// Probe latency and slack, when a probe is configured.
    pub targets: Vec<TargetRow>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Timeline entries matching `pred`, in order.
    pub fn events<'a>(&'a self, pred: impl Fn(&TimelineEvent) -> bool + 'a) -> impl Iterator<Item = &'a TimelineEntry> {
        self.timeline.iter().filter(move |e| pred(&e.event))
    }

    pub fn injected_misses(&self) -> usize {
        self.misses.iter().filter(|m| m.injected).count()
    }
}

struct Stress {
    metric: String,
    magnitude: f64,
    until: Micros,
    job: Option<JobId>,
    persists: bool,
}

struct Running {
    criticality: Criticality,
    started: Micros,
    server: Option<(ServerParams, usize, Vec<ResolvedTask>)>,
}

struct SimNode {
    spec: WorkerNode,
    alive: bool,
    agent: AssuranceAgent,
    running: BTreeMap<JobId, Running>,
    stresses: Vec<Stress>,
    /// Absolute intervals during which servers got no CPU.
    stolen: Vec<(Micros, Micros)>,
}

impl SimNode {
    fn stress_on(&self, metric: &str) -> f64 {
        self.stresses.iter().filter(|s| s.metric == metric).map(|s| s.magnitude).sum()
    }

    fn attributed(&self, job: &str, metric: &str) -> f64 {
        self.stresses.iter().filter(|s| s.metric == metric && s.job.as_deref() == Some(job)).map(|s| s.magnitude).sum()
    }

    fn per_core_utilization(&self) -> Vec<Rational> {
        let mut u = vec![Rational::ZERO; self.spec.cores as usize];
        for r in self.running.values() {
            if let Some((p, core, _)) = &r.server {
                u[*core] += p.utilization();
            }
        }
        u
    }
}

pub fn validate_scenario(s: &SimScenario) -> Result<(), ScenarioInvalid> {
    let mut ids = BTreeSet::new();
    let mut violations = Vec::new();
    for n in &s.nodes {
        if !ids.insert(n.id.clone()) {
            return Err(ScenarioInvalid::DuplicateNode(n.id.clone()));
        }
        violations.extend(validate_node(n));
    }
    for net in &s.networks {
        violations.extend(validate_network(net));
    }
    if !violations.is_empty() {
        return Err(ScenarioInvalid::Model(violations));
    }
    if s.events.windows(2).any(|w| w[0].at > w[1].at) {
        return Err(ScenarioInvalid::Unsorted);
    }
    if let Some(e) = s.events.iter().find(|e| e.at > s.horizon) {
        return Err(ScenarioInvalid::BeyondHorizon { at: e.at, horizon: s.horizon });
    }
    for e in &s.events {
        let node = match &e.event {
            SimEvent::NodeCrash { node } | SimEvent::StressInject { node, .. } => node,
            _ => continue,
        };
        if !ids.contains(node) {
            return Err(ScenarioInvalid::UnknownNode(node.clone()));
        }
    }
    if let Some(p) = &s.probe {
        if !ids.contains(&p.node) {
            return Err(ScenarioInvalid::UnknownNode(p.node.clone()));
        }
    }
    let monitor = s.monitor.clone().unwrap_or_else(quiet_monitor);
    if !monitor.is_valid() {
        return Err(ScenarioInvalid::Monitor);
    }
    let sp = s.sampling_period.unwrap_or(monitor.sampling_period);
    if sp == 0 || s.reconcile_interval == 0 || !s.reconcile_interval.is_multiple_of(sp) {
        return Err(ScenarioInvalid::Timing);
    }
    for (i, c) in s.channels.iter().enumerate() {
        if let Some((src, _)) = &c.mirror {
            if !s.channels[..i].iter().any(|o| &o.name == src && o.mirror.is_none()) {
                return Err(ScenarioInvalid::Mirror(c.name.clone()));
            }
        }
    }
    Ok(())
}

struct Sim {
    plane: ControlPlane,
    nodes: BTreeMap<NodeId, SimNode>,
    rng: ChaCha8Rng,
    timeline: Vec<TimelineEntry>,
    misses: Vec<MissRecord>,
    violations: Vec<InvariantViolation>,
    traces: Vec<TraceRow>,
    targets: Vec<TargetRow>,
    reports: Vec<NodeReport>,
    route_probes: BTreeSet<String>,
    stuck: BTreeSet<JobId>,
}

/// Runs `scenario` to its horizon.
pub fn run(scenario: &SimScenario) -> Result<SimReport, ScenarioInvalid> {
    validate_scenario(scenario)?;
    let monitor = scenario.monitor.clone().unwrap_or_else(quiet_monitor);
    let sp = scenario.sampling_period.unwrap_or(monitor.sampling_period);
    let interval = scenario.reconcile_interval;
    let control = scenario
        .control
        .clone()
        .unwrap_or(ControlConfig { heartbeat_timeout: 3 * interval, replica_timeout: 2 * interval });
    let mut plane = ControlPlane::new(scenario.policy.clone().unwrap_or_default(), control);
    for net in &scenario.networks {
        plane.state.add_network(net.clone()).map_err(|_| ScenarioInvalid::Model(Vec::new()))?;
    }
    let mut nodes = BTreeMap::new();
    for n in &scenario.nodes {
        plane.state.register_node(n.clone(), 0).map_err(|_| ScenarioInvalid::DuplicateNode(n.id.clone()))?;
        nodes.insert(
            n.id.clone(),
            SimNode {
                spec: n.clone(),
                alive: true,
                agent: AssuranceAgent::new(monitor.clone(), n.assurance),
                running: BTreeMap::new(),
                stresses: Vec::new(),
                stolen: Vec::new(),
            },
        );
    }
    let mut sim = Sim {
        plane,
        nodes,
        rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        timeline: Vec::new(),
        misses: Vec::new(),
        violations: Vec::new(),
        traces: Vec::new(),
        targets: Vec::new(),
        reports: Vec::new(),
        route_probes: BTreeSet::new(),
        stuck: BTreeSet::new(),
    };

    let mut next_event = 0;
    let mut t: Micros = 0;
    while t <= scenario.horizon {
        while next_event < scenario.events.len() && scenario.events[next_event].at <= t {
            sim.apply_event(t, &scenario.events[next_event].event);
            next_event += 1;
        }
        sim.expire_stress(t);
        sim.sample(t, scenario);
        if t.is_multiple_of(interval) {
            sim.reconcile(t);
        }
        t += sp;
    }
    let end = scenario.horizon;
    let ids: Vec<NodeId> = sim.nodes.keys().cloned().collect();
    for id in ids {
        let jobs: Vec<JobId> = sim.nodes[&id].running.keys().cloned().collect();
        for j in jobs {
            sim.stop_job(&id, &j, end);
        }
    }
    Ok(SimReport {
        seed: scenario.seed,
        horizon: scenario.horizon,
        timeline: sim.timeline,
        misses: sim.misses,
        violations: sim.violations,
        final_state: FinalState {
            nodes: sim.plane.nodes(),
            jobs: sim.plane.jobs(),
            deployments: sim.plane.deployments(),
        },
        traces: sim.traces,
        targets: sim.targets,
    })
}

impl Sim {
    fn log(&mut self, at: Micros, event: TimelineEvent) {
        self.timeline.push(TimelineEntry { at, event });
    }

    fn violation(&mut self, at: Micros, message: String) {
        self.violations.push(InvariantViolation { at, message });
    }

    fn apply_event(&mut self, t: Micros, ev: &SimEvent) {
        match ev {
            SimEvent::SubmitJob { job } => match self.plane.submit(job.clone()) {
                Ok(ids) => {
                    for id in ids {
                        self.log(t, TimelineEvent::Submitted { job: id });
                    }
                }
                Err(e) => {
                    let violations = match &e {
                        crate::control::ControlError::Invalid(v) => v.iter().map(|v| v.to_string()).collect(),
                        other => vec![other.to_string()],
                    };
                    self.log(t, TimelineEvent::Rejected { job: job.name.clone(), violations });
                }
            },
            SimEvent::NodeCrash { node } => {
                let jobs: Vec<JobId> = self.nodes[node].running.keys().cloned().collect();
                for j in jobs {
                    self.stop_job(node, &j, t);
                }
                let n = self.nodes.get_mut(node).unwrap();
                n.alive = false;
                n.stresses.clear();
                self.log(t, TimelineEvent::NodeCrash { node: node.clone() });
            }
            SimEvent::StressInject { node, metric, magnitude, duration, job, persists } => {
                let n = self.nodes.get_mut(node).unwrap();
                if !n.alive {
                    return;
                }
                n.stresses.push(Stress {
                    metric: metric.clone(),
                    magnitude: *magnitude,
                    until: t + duration,
                    job: job.clone(),
                    persists: *persists,
                });
                self.log(
                    t,
                    TimelineEvent::StressStart { node: node.clone(), metric: metric.clone(), magnitude: *magnitude, job: job.clone() },
                );
            }
            SimEvent::ReplicaFail { job } => {
                let host = self.nodes.iter().find(|(_, n)| n.running.contains_key(job)).map(|(id, _)| id.clone());
                self.log(t, TimelineEvent::ReplicaFail { job: job.clone() });
                if let Some(host) = host {
                    self.stop_job(&host, job, t);
                    self.reports.push(NodeReport::Killed { node: host, job: job.clone() });
                }
                if let Some(dep) = self.plane.state.jobs.get(job).and_then(|e| e.deployment.clone()) {
                    self.route_probes.insert(dep);
                }
            }
        }
    }

    fn expire_stress(&mut self, t: Micros) {
        let mut ended = Vec::new();
        for (id, n) in self.nodes.iter_mut() {
            let running = &n.running;
            n.stresses.retain(|s| {
                let job_gone = !s.persists && s.job.as_ref().is_some_and(|j| !running.contains_key(j));
                let keep = s.until > t && !job_gone;
                if !keep {
                    ended.push((id.clone(), s.metric.clone()));
                }
                keep
            });
        }
        for (node, metric) in ended {
            self.log(t, TimelineEvent::StressEnd { node, metric });
        }
    }

    fn sample(&mut self, t: Micros, scenario: &SimScenario) {
        let sp = scenario.sampling_period.unwrap_or_else(|| {
            scenario.monitor.as_ref().map_or(quiet_monitor().sampling_period, |m| m.sampling_period)
        });
        let ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        for id in ids {
            if !self.nodes[&id].alive {
                continue;
            }
            let mut values: BTreeMap<&str, f64> = BTreeMap::new();
            let mut ordered = Vec::with_capacity(scenario.channels.len());
            for c in &scenario.channels {
                let v = match &c.mirror {
                    Some((src, k)) => values[src.as_str()] * k,
                    None => {
                        let noise = if c.sd > 0.0 { Normal::new(0.0, c.sd).unwrap().sample(&mut self.rng) } else { 0.0 };
                        c.mean + noise + self.nodes[&id].stress_on(&c.name)
                    }
                };
                values.insert(c.name.as_str(), v);
                ordered.push((c.name.clone(), v));
            }
            let node = self.nodes.get_mut(&id).unwrap();
            let supply_cut = node.stress_on(SUPPLY_METRIC).clamp(0.0, 1.0);
            if supply_cut > 0.0 {
                let len = (sp as f64 * supply_cut).round() as Micros;
                if len > 0 {
                    node.stolen.push((t, t + len));
                }
            }
            for (metric, value) in &ordered {
                node.agent.record(MetricSample { metric: metric.clone(), timestamp: t, value: *value });
                self.traces.push(TraceRow { timestamp_us: t, metric: metric.clone(), value: *value, job: None });
            }
            let jobs: Vec<JobId> = node.running.keys().cloned().collect();
            for j in &jobs {
                for (metric, _) in &ordered {
                    let a = node.attributed(j, metric);
                    node.agent.record_job(j, metric, a);
                    if a != 0.0 {
                        self.traces.push(TraceRow { timestamp_us: t, metric: metric.clone(), value: a, job: Some(j.clone()) });
                    }
                }
            }
            if let Some(p) = scenario.probe.as_ref().filter(|p| p.node == id) {
                let noise = if p.noise_sd > 0.0 { Normal::new(0.0, p.noise_sd).unwrap().sample(&mut self.rng).abs() } else { 0.0 };
                let load: f64 = p.gains.iter().map(|(ch, g)| g * node.stress_on(ch)).sum();
                let latency = (p.base_latency + load + noise).round();
                let s = slack(p.period as i64, latency as i64, p.wcet as i64);
                self.targets.push(TargetRow { timestamp_us: t, latency_us: latency, slack_us: s as f64 });
            }

            let crits: Vec<(JobId, Criticality)> = node.running.iter().map(|(j, r)| (j.clone(), r.criticality)).collect();
            let actions = node.agent.tick(t, &crits);
            let effective = node.agent.assurance.effective();
            for a in actions {
                match a {
                    Action::Alarm { metric, reason } => self.log(t, TimelineEvent::Alarm { node: id.clone(), metric, reason }),
                    Action::KillJob { job } => {
                        self.log(t, TimelineEvent::KillJob { node: id.clone(), job: job.clone() });
                        self.stop_job(&id, &job, t);
                        self.nodes.get_mut(&id).unwrap().agent.forget_job(&job);
                        self.reports.push(NodeReport::Killed { node: id.clone(), job });
                    }
                    Action::GammaDowngrade { delta } => {
                        self.log(t, TimelineEvent::GammaDowngrade { node: id.clone(), delta, effective })
                    }
                    Action::GammaRestore { delta } => {
                        self.log(t, TimelineEvent::GammaRestore { node: id.clone(), delta, effective })
                    }
                    Action::MigrateRequest { jobs } => {
                        self.log(t, TimelineEvent::MigrateRequest { node: id.clone(), jobs: jobs.clone() });
                        self.reports.push(NodeReport::Migrate { node: id.clone(), jobs });
                    }
                }
            }
        }
    }

    fn start_job(&mut self, node: &str, job: &str, spec: &JobSpec, allocation: Option<crate::admission::Allocation>, t: Micros) {
        let Some(n) = self.nodes.get_mut(node) else { return };
        if !n.alive || n.running.contains_key(job) {
            return;
        }
        let server = match (allocation, spec.realtime) {
            (Some(a), true) => resolve_tasks_at(spec, spec.criticality, &n.spec)
                .ok()
                .map(|tasks| (ServerParams::new(a.budget, a.period), a.core, tasks)),
            _ => None,
        };
        n.running.insert(job.to_string(), Running { criticality: spec.criticality, started: t, server });
    }

    /// Stops a job and executes its server over the time it ran.
    fn stop_job(&mut self, node: &str, job: &str, t: Micros) {
        let Some(n) = self.nodes.get_mut(node) else { return };
        let Some(r) = n.running.remove(job) else { return };
        n.agent.forget_job(job);
        let Some((params, _, tasks)) = r.server else { return };
        let span = t.saturating_sub(r.started);
        if span == 0 {
            return;
        }
        // executor time is shifted by Q; stolen intervals are relative to the first release
        let stolen: Vec<(Micros, Micros)> = n
            .stolen
            .iter()
            .filter(|(a, b)| *b > r.started && *a < t)
            .map(|(a, b)| (a.saturating_sub(r.started), b - r.started))
            .collect();
        let report = execute(&tasks, params, &ExecConfig { supply: Supply::WorstCase, span, stolen });
        let periods: BTreeMap<&str, Micros> = tasks.iter().map(|t| (t.name.as_str(), t.period)).collect();
        for m in report.misses {
            let period = periods.get(m.task.as_str()).copied().unwrap_or(0);
            let deadline = r.started + m.deadline - params.budget;
            let window = (deadline.saturating_sub(period), deadline);
            let injected = n.stolen.iter().any(|(a, b)| *a < window.1 && *b > window.0);
            self.misses.push(MissRecord {
                job: job.to_string(),
                node: node.to_string(),
                task: m.task,
                deadline,
                remaining: m.remaining,
                injected,
            });
        }
    }

    fn check_wire(&mut self, t: Micros, msg: Message) {
        let bytes = encode(&msg);
        match read_frame(&mut bytes.as_slice()) {
            Ok(back) if back == msg => {}
            _ => self.violation(t, format!("message does not round-trip: {msg:?}")),
        }
    }

    fn reconcile(&mut self, t: Micros) {
        let mut reports: Vec<NodeReport> = Vec::new();
        for (id, n) in &self.nodes {
            if n.alive {
                reports.push(NodeReport::Heartbeat {
                    node: id.clone(),
                    at: t,
                    per_core_utilization: n.per_core_utilization(),
                    effective_assurance: n.agent.assurance.effective(),
                    running: n.running.keys().cloned().collect(),
                });
            }
        }
        reports.append(&mut self.reports);
        for r in reports.clone() {
            let msg = match r {
                NodeReport::Heartbeat { node, at, per_core_utilization, effective_assurance, running } => {
                    Message::Heartbeat { node, at, per_core_utilization, effective_assurance, running }
                }
                NodeReport::Migrate { node, jobs } => Message::MigrateRequest { node, jobs },
                NodeReport::Killed { node, job } => Message::KillJob { node, job },
            };
            self.check_wire(t, msg);
        }

        let crit_before: BTreeMap<JobId, Criticality> =
            self.plane.state.placements.iter().map(|(j, p)| (j.clone(), p.criticality)).collect();
        let out = self.plane.reconcile(t, &reports);

        for node in &out.lost_nodes {
            self.log(t, TimelineEvent::NodeLost { node: node.clone() });
        }
        for job in &out.failed_jobs {
            self.log(t, TimelineEvent::JobFailed { job: job.clone() });
        }
        let displaced: BTreeMap<&JobId, &NodeId> = out.displaced.iter().map(|(j, n)| (j, n)).collect();
        for d in &out.decisions {
            match d {
                Decision::Placed { job, node, .. } => {
                    self.stuck.remove(job);
                    let ev = match displaced.get(job) {
                        Some(from) if *from != node => {
                            TimelineEvent::Migrated { job: job.clone(), from: (*from).clone(), to: node.clone() }
                        }
                        _ => TimelineEvent::Placed { job: job.clone(), node: node.clone() },
                    };
                    self.log(t, ev);
                }
                Decision::Preempted { job, node, victims, .. } => {
                    self.stuck.remove(job);
                    let crit = self.plane.state.jobs[job].spec.criticality;
                    for v in victims {
                        let vc = crit_before.get(v).copied().or_else(|| self.plane.state.jobs.get(v).map(|e| e.spec.criticality));
                        if vc.is_none_or(|vc| vc >= crit) {
                            self.violation(t, format!("{job} preempted {v} of equal or higher criticality"));
                        }
                    }
                    self.log(t, TimelineEvent::Preempted { job: job.clone(), node: node.clone(), victims: victims.clone() });
                }
                Decision::Unschedulable { job, .. } => {
                    if self.stuck.insert(job.clone()) {
                        self.log(t, TimelineEvent::Unschedulable { job: job.clone() });
                    }
                }
            }
        }

        for a in out.actions {
            self.check_wire(t, a.clone().into());
            match a {
                ControlAction::Evict { job, node } => {
                    self.stop_job(&node, &job, t);
                    self.log(t, TimelineEvent::Evicted { job, node });
                }
                ControlAction::Deploy { job, node, spec, allocation } => self.start_job(&node, &job, &spec, allocation, t),
                ControlAction::SlotGrant(_) => {}
            }
        }

        let probes = std::mem::take(&mut self.route_probes);
        for dep in probes {
            match self.plane.route(&dep, Vec::new(), t) {
                Ok(r) => self.log(t, TimelineEvent::Routed { deployment: dep, leader: r.leader, promoted: r.promoted }),
                Err(e) => self.log(t, TimelineEvent::RouteFailed { deployment: dep, error: e.to_string() }),
            }
        }
        self.check_safety(t);
    }

    fn check_safety(&mut self, t: Micros) {
        let mut found = self.plane.state.check_invariants();
        let state = &self.plane.state;
        for (job, p) in &state.placements {
            let node = &state.nodes[&p.node];
            if node.effective_assurance() < self.plane.policy.threshold(p.criticality) {
                found.push(format!("{job} on {} below its assurance threshold", p.node));
            }
            if state.jobs[job].spec.realtime && !node.spec.rt_capable {
                found.push(format!("{job} is real-time on non-rt node {}", p.node));
            }
            if !node.ready {
                found.push(format!("{job} placed on lost node {}", p.node));
            }
        }
        for m in found {
            self.violation(t, m);
        }
    }
}

#[cfg(test)]
mod tests;
