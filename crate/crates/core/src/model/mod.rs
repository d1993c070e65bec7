//! Domain types shared by every subsystem: nodes, resources, jobs, tasks and
//! networks, plus the validation rules that tie them together.

mod network;
mod ratio;
mod resources;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use network::{DelayMatrix, LinkCapacity, Network, NetworkKind};
pub use ratio::Rational;
pub use resources::{AdditionalResources, BasicResources};
pub use validate::{validate_job, validate_network, validate_node, Violation};

/// Time in microseconds.
pub type Micros = u64;

pub type NodeId = String;
pub type JobId = String;
pub type NetworkId = String;

/// Job criticality. The derived order is the total order `NO < LOW < HI`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criticality {
    #[serde(rename = "NO")]
    No,
    #[serde(rename = "LOW")]
    Low,
    #[serde(rename = "HI")]
    Hi,
}

impl Criticality {
    pub const ALL: [Criticality; 3] = [Criticality::No, Criticality::Low, Criticality::Hi];

    /// Small integer weight used when summing victim criticalities.
    pub fn rank(self) -> u32 {
        match self {
            Criticality::No => 0,
            Criticality::Low => 1,
            Criticality::Hi => 2,
        }
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::No => "NO",
            Criticality::Low => "LOW",
            Criticality::Hi => "HI",
        })
    }
}

impl std::str::FromStr for Criticality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NO" => Ok(Criticality::No),
            "LOW" => Ok(Criticality::Low),
            "HI" => Ok(Criticality::Hi),
            other => Err(format!("unknown criticality {other:?}")),
        }
    }
}

/// Node assurance split into hardware (`alpha`), software (`beta`) and a
/// runtime penalty (`gamma`, always in `[-(alpha + beta), 0]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssuranceLevel {
    pub alpha: u32,
    pub beta: u32,
    #[serde(default)]
    pub gamma: i64,
}

impl AssuranceLevel {
    pub fn new(alpha: u32, beta: u32) -> Self {
        AssuranceLevel { alpha, beta, gamma: 0 }
    }

    pub fn effective(&self) -> i64 {
        self.alpha as i64 + self.beta as i64 + self.gamma
    }

    pub fn static_level(&self) -> i64 {
        self.alpha as i64 + self.beta as i64
    }

    /// Sets gamma, clamped to `[-(alpha + beta), 0]`.
    pub fn set_gamma(&mut self, gamma: i64) {
        self.gamma = gamma.clamp(-self.static_level(), 0);
    }

    /// Adds `delta` to gamma (clamped) and returns the change actually applied.
    pub fn apply_gamma_delta(&mut self, delta: i64) -> i64 {
        let before = self.gamma;
        self.set_gamma(self.gamma.saturating_add(delta));
        self.gamma - before
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerNode {
    pub id: NodeId,
    pub rt_capable: bool,
    pub assurance: AssuranceLevel,
    pub platform: String,
    /// Rescale factor applied to baseline WCETs of LOW jobs.
    pub speed_factor: Rational,
    pub cores: u32,
    pub basic_capacity: BasicResources,
    #[serde(default)]
    pub additional_inventory: AdditionalResources,
    #[serde(default)]
    pub networks: BTreeSet<NetworkId>,
}

/// Worst-case execution time declaration of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wcet {
    /// Measured per hardware platform; only these platforms are eligible.
    PerPlatform(BTreeMap<String, Micros>),
    /// Baseline to be multiplied by the node speed factor.
    Baseline(Micros),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtTask {
    pub name: String,
    pub period: Micros,
    /// Larger is higher. Defaults to rate-monotonic order when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<i64>,
    pub wcet: Wcet,
}

impl RtTask {
    pub fn per_platform(name: &str, period: Micros, wcets: &[(&str, Micros)]) -> Self {
        RtTask {
            name: name.to_string(),
            period,
            priority: None,
            wcet: Wcet::PerPlatform(wcets.iter().map(|(p, c)| (p.to_string(), *c)).collect()),
        }
    }

    pub fn baseline(name: &str, period: Micros, wcet: Micros) -> Self {
        RtTask { name: name.to_string(), period, priority: None, wcet: Wcet::Baseline(wcet) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkRequirementKind {
    Tdma { slot_length: Micros, slot_period: Micros },
    BestEffort { target: NodeId, max_delay: Micros, min_bandwidth: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkRequirement {
    pub network: NetworkId,
    pub kind: NetworkRequirementKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaPolicy {
    pub replicas: u32,
    pub leader_criticality: Criticality,
    pub backup_criticality: Criticality,
    #[serde(default)]
    pub tmr: bool,
}

/// The unit of scheduling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub name: JobId,
    pub criticality: Criticality,
    pub realtime: bool,
    #[serde(default)]
    pub basic_request: BasicResources,
    #[serde(default)]
    pub additional_request: AdditionalResources,
    #[serde(default)]
    pub network_requirements: Vec<NetworkRequirement>,
    #[serde(default)]
    pub tasks: Vec<RtTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment: Option<ReplicaPolicy>,
}

impl JobSpec {
    /// A best-effort job with no requests at all.
    pub fn best_effort(name: &str, criticality: Criticality) -> Self {
        JobSpec {
            name: name.to_string(),
            criticality,
            realtime: false,
            basic_request: BasicResources::default(),
            additional_request: AdditionalResources::default(),
            network_requirements: Vec::new(),
            tasks: Vec::new(),
            deployment: None,
        }
    }

    pub fn realtime(name: &str, criticality: Criticality, tasks: Vec<RtTask>) -> Self {
        JobSpec { realtime: true, tasks, ..JobSpec::best_effort(name, criticality) }
    }
}

/// Returned when a task has no usable WCET on a node; the node must be
/// filtered out for the job.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("task {task:?} has no WCET for platform {platform:?}")]
pub struct WcetUnavailable {
    pub task: String,
    pub platform: String,
}

/// WCET of `task` on `node` for a job of the given criticality.
///
/// Baseline values are multiplied by the node speed factor and rounded up
/// to whole microseconds. HI jobs may only use per-platform measurements.
pub fn resolve_wcet(
    task: &RtTask,
    node: &WorkerNode,
    criticality: Criticality,
) -> Result<Micros, WcetUnavailable> {
    let unavailable = || WcetUnavailable { task: task.name.clone(), platform: node.platform.clone() };
    match &task.wcet {
        Wcet::PerPlatform(map) => map.get(&node.platform).copied().ok_or_else(unavailable),
        Wcet::Baseline(_) if criticality == Criticality::Hi => Err(unavailable()),
        Wcet::Baseline(base) => {
            let scaled = Rational::from_int(*base as i128) * node.speed_factor;
            let v = scaled.ceil_int();
            if v <= 0 || v > u64::MAX as i128 {
                return Err(unavailable());
            }
            Ok(v as Micros)
        }
    }
}

/// Indices of `tasks` from highest to lowest priority.
///
/// Explicit priorities rank above tasks without one (larger is higher);
/// remaining ties fall back to rate-monotonic order, then name.
pub fn priority_order(tasks: &[RtTask]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..tasks.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ta, tb) = (&tasks[a], &tasks[b]);
        tb.priority
            .map(|p| (1, p))
            .unwrap_or((0, 0))
            .cmp(&ta.priority.map(|p| (1, p)).unwrap_or((0, 0)))
            .then(ta.period.cmp(&tb.period))
            .then(ta.name.cmp(&tb.name))
            .then(a.cmp(&b))
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(platform: &str, speed: Rational) -> WorkerNode {
        WorkerNode {
            id: "n".into(),
            rt_capable: true,
            assurance: AssuranceLevel::new(5, 5),
            platform: platform.into(),
            speed_factor: speed,
            cores: 2,
            basic_capacity: BasicResources::new(Rational::from_int(2), 1000, 1000),
            additional_inventory: AdditionalResources::default(),
            networks: BTreeSet::new(),
        }
    }

    #[test]
    fn criticality_order_is_total() {
        assert!(Criticality::No < Criticality::Low);
        assert!(Criticality::Low < Criticality::Hi);
        let parsed: Vec<Criticality> = serde_json::from_str(r#"["HI","NO","LOW"]"#).unwrap();
        let mut sorted = parsed.clone();
        sorted.sort();
        assert_eq!(sorted, Criticality::ALL.to_vec());
    }

    #[test]
    fn resolve_per_platform() {
        let t = RtTask::per_platform("t", 10_000, &[("x86-i5", 1900)]);
        let n = node("x86-i5", Rational::ONE);
        assert_eq!(resolve_wcet(&t, &n, Criticality::Hi), Ok(1900));
        let other = node("armv8-a53", Rational::ONE);
        assert!(resolve_wcet(&t, &other, Criticality::Hi).is_err());
    }

    #[test]
    fn resolve_baseline() {
        let t = RtTask::baseline("t", 10_000, 1000);
        assert_eq!(resolve_wcet(&t, &node("p", Rational::ONE), Criticality::Low), Ok(1000));
        assert_eq!(resolve_wcet(&t, &node("p", Rational::new(5, 2)), Criticality::Low), Ok(2500));
        // ceiling: 1000 * 1/3 = 333.33..
        assert_eq!(resolve_wcet(&t, &node("p", Rational::new(1, 3)), Criticality::Low), Ok(334));
        assert!(resolve_wcet(&t, &node("p", Rational::ONE), Criticality::Hi).is_err());
    }

    #[test]
    fn gamma_is_clamped() {
        let mut a = AssuranceLevel::new(3, 4);
        assert_eq!(a.apply_gamma_delta(-5), -5);
        assert_eq!(a.effective(), 2);
        assert_eq!(a.apply_gamma_delta(-5), -2);
        assert_eq!(a.effective(), 0);
        assert_eq!(a.apply_gamma_delta(100), 7);
        assert_eq!(a.gamma, 0);
    }

    #[test]
    fn default_priority_is_rate_monotonic() {
        let tasks = vec![
            RtTask::baseline("slow", 20_000, 10),
            RtTask::baseline("fast", 5_000, 10),
            RtTask { priority: Some(1), ..RtTask::baseline("pinned", 50_000, 10) },
        ];
        assert_eq!(priority_order(&tasks), vec![2, 1, 0]);
    }

    #[test]
    fn jobspec_json_field_names() {
        let job = JobSpec::realtime(
            "ctrl",
            Criticality::Hi,
            vec![RtTask::per_platform("loop", 10_000, &[("x86-i5", 1900)])],
        );
        let v: serde_json::Value = serde_json::to_value(&job).unwrap();
        assert_eq!(v["criticality"], "HI");
        assert_eq!(v["tasks"][0]["wcet"]["per_platform"]["x86-i5"], 1900);
        assert!(v.get("basic_request").is_some());
        let back: JobSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, job);
    }
}
