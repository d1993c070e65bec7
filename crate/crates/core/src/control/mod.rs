//! Master-side control plane.
//!
//! [`ClusterState`] is the single state store. The scheduler filters and
//! scores nodes per criticality, falls back to preempting strictly lower
//! criticality jobs, and commits placements atomically (real-time server,
//! network reservations, resources). Reconciliation turns node reports into
//! corrective actions; the replica manager routes requests to deployment
//! leaders and the voter settles TMR responses.

mod reconcile;
mod replica;
mod schedule;
pub mod service;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::admission::{resolve_tasks_at, Allocation, RtAgent, Server};
use crate::model::{
    validate_job, validate_network, validate_node, AdditionalResources, BasicResources, Criticality, JobId, JobSpec,
    Micros, Network, NodeId, Rational, Violation, WorkerNode,
};
use crate::net::{NetworkManager, Reservation, SlotGrant};

pub use reconcile::{ControlAction, NodeReport, ReconcileOutcome};
pub use replica::{tmr_vote, NoMajority, RouteError, Routed};
pub use schedule::{filter, score, Decision, Rejection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Spread,
    Pack,
}

/// Per-criticality placement configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulingPolicy {
    pub min_assurance: BTreeMap<Criticality, i64>,
    /// Consulted for NO-criticality jobs; HI and LOW use fixed orderings.
    pub strategy: BTreeMap<Criticality, Strategy>,
}

impl Default for SchedulingPolicy {
    fn default() -> Self {
        SchedulingPolicy {
            min_assurance: [(Criticality::No, 0), (Criticality::Low, 3), (Criticality::Hi, 7)].into(),
            strategy: [(Criticality::No, Strategy::Pack), (Criticality::Low, Strategy::Spread), (Criticality::Hi, Strategy::Spread)]
                .into(),
        }
    }
}

impl SchedulingPolicy {
    pub fn threshold(&self, c: Criticality) -> i64 {
        self.min_assurance.get(&c).copied().unwrap_or(0)
    }

    pub fn strategy(&self, c: Criticality) -> Strategy {
        self.strategy.get(&c).copied().unwrap_or(Strategy::Pack)
    }

    pub fn is_valid(&self) -> bool {
        self.threshold(Criticality::No) == 0
            && self.threshold(Criticality::No) <= self.threshold(Criticality::Low)
            && self.threshold(Criticality::Low) <= self.threshold(Criticality::Hi)
    }
}

/// A registered node with its live allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub spec: WorkerNode,
    pub allocated_basic: BasicResources,
    pub allocated_additional: AdditionalResources,
    pub rt: RtAgent,
    pub ready: bool,
    pub last_heartbeat: Micros,
}

impl NodeEntry {
    pub fn new(spec: WorkerNode, now: Micros) -> Self {
        let cores = spec.cores as usize;
        NodeEntry {
            spec,
            allocated_basic: BasicResources::default(),
            allocated_additional: AdditionalResources::default(),
            rt: RtAgent::new(cores),
            ready: true,
            last_heartbeat: now,
        }
    }

    pub fn effective_assurance(&self) -> i64 {
        self.spec.assurance.effective()
    }

    /// `1 - utilization` of the least-loaded core.
    pub fn remaining_least_loaded(&self) -> Rational {
        Rational::ONE - self.rt.min_core_utilization()
    }

    pub fn total_utilization(&self) -> Rational {
        self.allocated_basic.cpu_utilization
    }
}

/// Resources and reservations held by a placed job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub node: NodeId,
    pub criticality: Criticality,
    pub server: Option<Server>,
    pub reservations: Vec<Reservation>,
    pub basic: BasicResources,
    pub additional: AdditionalResources,
}

impl Placement {
    pub fn allocation(&self) -> Option<Allocation> {
        self.server.map(|s| Allocation { core: s.core, budget: s.params.budget, period: s.params.period })
    }

    pub fn slot_grants(&self) -> Vec<SlotGrant> {
        self.reservations
            .iter()
            .filter_map(|r| match r {
                Reservation::Slot(g) => Some(g.clone()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Placed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobEntry {
    /// Spec as scheduled; replicas carry their own criticality.
    pub spec: JobSpec,
    pub deployment: Option<String>,
    pub status: JobStatus,
    /// Submission order, used to keep the pending queue stable.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub leader: JobId,
    pub backups: Vec<JobId>,
    pub tmr: bool,
}

impl Deployment {
    pub fn replicas(&self) -> impl Iterator<Item = &JobId> {
        std::iter::once(&self.leader).chain(self.backups.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// A node whose last heartbeat is older than this is considered lost.
    pub heartbeat_timeout: Micros,
    /// A replica not reported running for this long is considered dead.
    pub replica_timeout: Micros,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig { heartbeat_timeout: 500_000, replica_timeout: 300_000 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("validation failed")]
    Invalid(Vec<Violation>),
    #[error("duplicate job {0:?}")]
    DuplicateJob(JobId),
    #[error("duplicate node {0:?}")]
    DuplicateNode(NodeId),
    #[error("unknown job or deployment {0:?}")]
    UnknownJob(JobId),
}

/// Global state of nodes, jobs and deployments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub nodes: BTreeMap<NodeId, NodeEntry>,
    pub jobs: BTreeMap<JobId, JobEntry>,
    pub placements: BTreeMap<JobId, Placement>,
    pub deployments: BTreeMap<String, Deployment>,
    pub pending: VecDeque<JobId>,
    pub networks: NetworkManager,
    /// Last time each job was reported running.
    pub job_last_seen: BTreeMap<JobId, Micros>,
    next_seq: u64,
}

impl Default for ClusterState {
    fn default() -> Self {
        ClusterState {
            nodes: BTreeMap::new(),
            jobs: BTreeMap::new(),
            placements: BTreeMap::new(),
            deployments: BTreeMap::new(),
            pending: VecDeque::new(),
            networks: NetworkManager::new(),
            job_last_seen: BTreeMap::new(),
            next_seq: 0,
        }
    }
}

impl ClusterState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_node(&mut self, node: WorkerNode, now: Micros) -> Result<(), ControlError> {
        let v = validate_node(&node);
        if !v.is_empty() {
            return Err(ControlError::Invalid(v));
        }
        if self.nodes.contains_key(&node.id) {
            return Err(ControlError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), NodeEntry::new(node, now));
        Ok(())
    }

    pub fn add_network(&mut self, net: Network) -> Result<(), ControlError> {
        let v = validate_network(&net);
        if !v.is_empty() {
            return Err(ControlError::Invalid(v));
        }
        self.networks.add_network(net);
        Ok(())
    }

    /// Validates `spec`, expands replica deployments and queues every
    /// resulting job. Returns the queued job ids.
    pub fn submit(&mut self, spec: JobSpec) -> Result<Vec<JobId>, ControlError> {
        let v = validate_job(&spec);
        if !v.is_empty() {
            return Err(ControlError::Invalid(v));
        }
        let name = spec.name.clone();
        if self.jobs.contains_key(&name) || self.deployments.contains_key(&name) {
            return Err(ControlError::DuplicateJob(name));
        }
        let Some(policy) = spec.deployment else {
            self.enqueue(spec, None);
            return Ok(vec![name]);
        };
        let ids: Vec<JobId> = (0..policy.replicas).map(|i| format!("{name}-r{i}")).collect();
        if let Some(dup) = ids.iter().find(|id| self.jobs.contains_key(*id)) {
            return Err(ControlError::DuplicateJob(dup.clone()));
        }
        for (i, id) in ids.iter().enumerate() {
            let criticality = if i == 0 { policy.leader_criticality } else { policy.backup_criticality };
            let replica = JobSpec { name: id.clone(), criticality, deployment: None, ..spec.clone() };
            self.enqueue(replica, Some(name.clone()));
        }
        self.deployments.insert(
            name,
            Deployment { leader: ids[0].clone(), backups: ids[1..].to_vec(), tmr: policy.tmr },
        );
        Ok(ids)
    }

    fn enqueue(&mut self, spec: JobSpec, deployment: Option<String>) {
        let id = spec.name.clone();
        self.jobs.insert(id.clone(), JobEntry { spec, deployment, status: JobStatus::Pending, seq: self.next_seq });
        self.next_seq += 1;
        self.pending.push_back(id);
    }

    /// Removes a job, or every replica of a deployment.
    pub fn delete(&mut self, name: &str) -> Result<Vec<JobId>, ControlError> {
        let ids: Vec<JobId> = match self.deployments.remove(name) {
            Some(d) => d.replicas().cloned().collect(),
            None if self.jobs.contains_key(name) => vec![name.to_string()],
            None => return Err(ControlError::UnknownJob(name.to_string())),
        };
        for id in &ids {
            self.unplace(id);
            self.pending.retain(|p| p != id);
            self.jobs.remove(id);
            self.job_last_seen.remove(id);
        }
        Ok(ids)
    }

    /// Jobs placed on `node`, sorted by id.
    pub fn jobs_on(&self, node: &str) -> Vec<JobId> {
        self.placements.iter().filter(|(_, p)| p.node == node).map(|(j, _)| j.clone()).collect()
    }

    /// Commits `job` onto `node`. The caller has checked feasibility; on any
    /// failure everything already reserved is rolled back.
    pub(crate) fn place(&mut self, job: &str, node_id: &str) -> Result<Placement, Rejection> {
        let spec = self.jobs.get(job).ok_or(Rejection::UnknownJob)?.spec.clone();
        let demand = schedule::evaluate(self, &spec, node_id)?;
        let node = self.nodes.get_mut(node_id).ok_or(Rejection::NotReady)?;
        let server = if spec.realtime {
            let tasks = resolve_tasks_at(&spec, spec.criticality, &node.spec).map_err(|_| Rejection::Platform)?;
            let resp = node.rt.admit_tasks(job, &tasks, false).map_err(|_| Rejection::Admission)?;
            if !resp.schedulable {
                return Err(Rejection::Admission);
            }
            node.rt.server_of(job)
        } else {
            None
        };
        let reservations = match self.networks.network_feasible(job, &spec.network_requirements, node_id, false) {
            Some(plan) => plan,
            None => {
                if server.is_some() {
                    let _ = self.nodes.get_mut(node_id).unwrap().rt.release(job);
                }
                return Err(Rejection::Network);
            }
        };
        let node = self.nodes.get_mut(node_id).unwrap();
        node.allocated_basic.add(&demand.basic);
        node.allocated_additional.add(&spec.additional_request);
        let placement = Placement {
            node: node_id.to_string(),
            criticality: spec.criticality,
            server,
            reservations,
            basic: demand.basic,
            additional: spec.additional_request.clone(),
        };
        self.placements.insert(job.to_string(), placement.clone());
        self.pending.retain(|p| p != job);
        self.job_last_seen.remove(job);
        if let Some(e) = self.jobs.get_mut(job) {
            e.status = JobStatus::Placed;
        }
        Ok(placement)
    }

    /// Releases everything `job` holds. The job itself stays registered.
    pub(crate) fn unplace(&mut self, job: &str) -> Option<Placement> {
        let p = self.placements.remove(job)?;
        if let Some(node) = self.nodes.get_mut(&p.node) {
            if p.server.is_some() {
                let _ = node.rt.release(job);
            }
            node.allocated_basic.sub(&p.basic);
            node.allocated_additional.sub(&p.additional);
        }
        self.networks.release_job(job);
        Some(p)
    }

    /// Moves a placed job back to the pending queue.
    pub(crate) fn requeue(&mut self, job: &str) -> Option<Placement> {
        let p = self.unplace(job);
        if let Some(e) = self.jobs.get_mut(job) {
            e.status = JobStatus::Pending;
            if !self.pending.iter().any(|x| x == job) {
                self.pending.push_back(job.to_string());
            }
        }
        p
    }

    pub(crate) fn mark_failed(&mut self, job: &str) -> Option<Placement> {
        let p = self.unplace(job);
        self.pending.retain(|x| x != job);
        if let Some(e) = self.jobs.get_mut(job) {
            e.status = JobStatus::Failed;
        }
        p
    }

    /// Broken state-store invariants; empty when consistent.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (id, n) in &self.nodes {
            if !n.allocated_basic.le(&n.spec.basic_capacity) {
                out.push(format!("{id}: basic allocation exceeds capacity"));
            }
            if !n.allocated_additional.le(&n.spec.additional_inventory) {
                out.push(format!("{id}: device allocation exceeds inventory"));
            }
            for c in n.rt.cores() {
                if c.utilization > Rational::ONE {
                    out.push(format!("{id}: core {} utilization above 1", c.core));
                }
            }
            let mut basic = BasicResources::default();
            let mut add = AdditionalResources::default();
            for p in self.placements.values().filter(|p| &p.node == id) {
                basic.add(&p.basic);
                add.add(&p.additional);
            }
            if basic != n.allocated_basic || add != n.allocated_additional {
                out.push(format!("{id}: allocation differs from the sum of placements"));
            }
        }
        for (job, p) in &self.placements {
            if !self.nodes.contains_key(&p.node) {
                out.push(format!("{job}: placed on unknown node {}", p.node));
            }
        }
        for (name, d) in &self.deployments {
            let leader = self.jobs.get(&d.leader).map(|e| e.status);
            if !matches!(leader, Some(JobStatus::Placed) | Some(JobStatus::Failed) | Some(JobStatus::Pending)) {
                out.push(format!("{name}: leader {} is unknown", d.leader));
            }
        }
        for (n, a, b) in self.networks.capacity_violations() {
            out.push(format!("{n}: reservations {a}->{b} exceed capacity"));
        }
        out
    }
}

/// Read-only views served by the user API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub platform: String,
    pub rt_capable: bool,
    pub ready: bool,
    pub effective_assurance: i64,
    pub per_core_utilization: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobView {
    pub name: JobId,
    pub criticality: Criticality,
    pub status: JobStatus,
    pub node: Option<NodeId>,
    pub allocation: Option<Allocation>,
    pub deployment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentView {
    pub name: String,
    pub leader: JobId,
    pub backups: Vec<JobId>,
    pub tmr: bool,
}

/// The control plane: state store plus policy and bookkeeping for one
/// logical scheduling loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPlane {
    pub state: ClusterState,
    pub policy: SchedulingPolicy,
    pub config: ControlConfig,
    /// Nodes each job must avoid during the next scheduling round.
    exclusions: BTreeMap<JobId, BTreeSet<NodeId>>,
}

impl ControlPlane {
    pub fn new(policy: SchedulingPolicy, config: ControlConfig) -> Self {
        ControlPlane { state: ClusterState::new(), policy, config, exclusions: BTreeMap::new() }
    }

    pub fn submit(&mut self, spec: JobSpec) -> Result<Vec<JobId>, ControlError> {
        self.state.submit(spec)
    }

    pub fn delete(&mut self, name: &str) -> Result<Vec<JobId>, ControlError> {
        let ids = self.state.delete(name)?;
        for id in &ids {
            self.exclusions.remove(id);
        }
        Ok(ids)
    }

    pub fn exclude(&mut self, job: &str, node: &str) {
        self.exclusions.entry(job.to_string()).or_default().insert(node.to_string());
    }

    pub fn schedule(&mut self, job: &str) -> Decision {
        let excluded = self.exclusions.get(job).cloned().unwrap_or_default();
        schedule::schedule(&mut self.state, &self.policy, job, &excluded)
    }

    /// One pass over the pending queue, highest criticality first. Evicted
    /// victims get one attempt in the same pass. Exclusions expire after.
    pub fn schedule_pending(&mut self) -> Vec<Decision> {
        let mut queue: Vec<JobId> = self.state.pending.iter().cloned().collect();
        let key = |s: &ClusterState, j: &JobId| {
            let e = &s.jobs[j];
            (std::cmp::Reverse(e.spec.criticality), e.seq)
        };
        queue.sort_by_key(|j| key(&self.state, j));
        let mut queue: VecDeque<JobId> = queue.into();
        let mut decisions = Vec::new();
        let mut attempts: BTreeMap<JobId, u32> = BTreeMap::new();
        while let Some(job) = queue.pop_front() {
            if !self.state.jobs.contains_key(&job) || self.state.placements.contains_key(&job) {
                continue;
            }
            let n = attempts.entry(job.clone()).or_insert(0);
            *n += 1;
            if *n > 2 {
                continue;
            }
            let d = self.schedule(&job);
            if let Decision::Preempted { victims, .. } = &d {
                queue.extend(victims.iter().cloned());
            }
            decisions.push(d);
        }
        self.exclusions.clear();
        decisions
    }

    pub fn route(&mut self, deployment: &str, payload: Vec<u8>, now: Micros) -> Result<Routed, RouteError> {
        replica::route(&mut self.state, deployment, payload, now, self.config.replica_timeout)
    }

    pub fn nodes(&self) -> Vec<NodeView> {
        self.state
            .nodes
            .values()
            .map(|n| NodeView {
                id: n.spec.id.clone(),
                platform: n.spec.platform.clone(),
                rt_capable: n.spec.rt_capable,
                ready: n.ready,
                effective_assurance: n.effective_assurance(),
                per_core_utilization: n.rt.per_core_utilization(),
            })
            .collect()
    }

    pub fn jobs(&self) -> Vec<JobView> {
        self.state
            .jobs
            .iter()
            .map(|(id, e)| {
                let p = self.state.placements.get(id);
                JobView {
                    name: id.clone(),
                    criticality: e.spec.criticality,
                    status: e.status,
                    node: p.map(|p| p.node.clone()),
                    allocation: p.and_then(Placement::allocation),
                    deployment: e.deployment.clone(),
                }
            })
            .collect()
    }

    pub fn deployments(&self) -> Vec<DeploymentView> {
        self.state
            .deployments
            .iter()
            .map(|(name, d)| DeploymentView {
                name: name.clone(),
                leader: d.leader.clone(),
                backups: d.backups.clone(),
                tmr: d.tmr,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests;
