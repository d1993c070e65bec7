use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ClusterState, NodeEntry, SchedulingPolicy, Strategy};
use crate::admission::{resolve_tasks_at, Allocation};
use crate::model::{BasicResources, Criticality, JobId, JobSpec, NodeId, Wcet};
use crate::net::NetworkManager;

/// Why a node cannot host a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    UnknownJob,
    NotReady,
    Excluded,
    Assurance,
    NotRtCapable,
    Platform,
    AntiAffinity,
    Resources,
    Devices,
    Admission,
    Network,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Placed { job: JobId, node: NodeId, allocation: Option<Allocation> },
    Preempted { job: JobId, node: NodeId, allocation: Option<Allocation>, victims: Vec<JobId> },
    Unschedulable { job: JobId, reasons: BTreeMap<NodeId, Rejection> },
}

impl Decision {
    pub fn job(&self) -> &str {
        match self {
            Decision::Placed { job, .. } | Decision::Preempted { job, .. } | Decision::Unschedulable { job, .. } => job,
        }
    }
}

/// What a job would take from a node.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Demand {
    pub basic: BasicResources,
    pub allocation: Option<Allocation>,
}

/// Checks that no eviction can fix.
fn static_check(
    state: &ClusterState,
    policy: &SchedulingPolicy,
    spec: &JobSpec,
    node: &NodeEntry,
    excluded: &BTreeSet<NodeId>,
) -> Result<(), Rejection> {
    if !node.ready {
        return Err(Rejection::NotReady);
    }
    if excluded.contains(&node.spec.id) {
        return Err(Rejection::Excluded);
    }
    if node.effective_assurance() < policy.threshold(spec.criticality) {
        return Err(Rejection::Assurance);
    }
    if spec.realtime {
        if !node.spec.rt_capable {
            return Err(Rejection::NotRtCapable);
        }
        if spec.criticality == Criticality::Hi
            && spec.tasks.iter().any(|t| !matches!(&t.wcet, Wcet::PerPlatform(m) if m.contains_key(&node.spec.platform)))
        {
            return Err(Rejection::Platform);
        }
    }
    let deployment = state.jobs.get(&spec.name).and_then(|e| e.deployment.as_ref());
    if let Some(dep) = deployment.and_then(|d| state.deployments.get(d)) {
        let clash = dep
            .replicas()
            .filter(|r| **r != spec.name)
            .any(|r| state.placements.get(r).is_some_and(|p| p.node == node.spec.id));
        if clash {
            return Err(Rejection::AntiAffinity);
        }
    }
    Ok(())
}

/// Capacity checks against the node's current load: resources, devices,
/// real-time admission and network reservations, all as dry runs.
fn capacity_check(node: &NodeEntry, networks: &NetworkManager, spec: &JobSpec) -> Result<Demand, Rejection> {
    let (basic, allocation) = if spec.realtime {
        let tasks = resolve_tasks_at(spec, spec.criticality, &node.spec).map_err(|_| Rejection::Platform)?;
        let resp = node.rt.clone().admit_tasks(&spec.name, &tasks, true).map_err(|_| Rejection::Admission)?;
        let Some(a) = resp.allocated.filter(|_| resp.schedulable) else { return Err(Rejection::Admission) };
        let u = crate::admission::ServerParams::new(a.budget, a.period).utilization();
        (BasicResources { cpu_utilization: u, ..spec.basic_request.clone() }, Some(a))
    } else {
        (spec.basic_request.clone(), None)
    };
    if !node.allocated_basic.fits_with(&basic, &node.spec.basic_capacity) {
        return Err(Rejection::Resources);
    }
    if !node.allocated_additional.fits_with(&spec.additional_request, &node.spec.additional_inventory) {
        return Err(Rejection::Devices);
    }
    if !spec.network_requirements.is_empty()
        && networks.clone().network_feasible(&spec.name, &spec.network_requirements, &node.spec.id, true).is_none()
    {
        return Err(Rejection::Network);
    }
    Ok(Demand { basic, allocation })
}

pub(crate) fn evaluate(state: &ClusterState, spec: &JobSpec, node: &str) -> Result<Demand, Rejection> {
    let entry = state.nodes.get(node).ok_or(Rejection::NotReady)?;
    capacity_check(entry, &state.networks, spec)
}

fn why_not(
    state: &ClusterState,
    policy: &SchedulingPolicy,
    spec: &JobSpec,
    node: &NodeEntry,
    excluded: &BTreeSet<NodeId>,
) -> Result<Demand, Rejection> {
    static_check(state, policy, spec, node, excluded)?;
    capacity_check(node, &state.networks, spec)
}

/// Nodes able to host `job` right now, in id order.
pub fn filter(state: &ClusterState, policy: &SchedulingPolicy, job: &str, excluded: &BTreeSet<NodeId>) -> Vec<NodeId> {
    let Some(entry) = state.jobs.get(job) else { return Vec::new() };
    state
        .nodes
        .values()
        .filter(|n| why_not(state, policy, &entry.spec, n, excluded).is_ok())
        .map(|n| n.spec.id.clone())
        .collect()
}

/// Orders `candidates` best first for a job of criticality `crit`.
pub fn score(state: &ClusterState, policy: &SchedulingPolicy, crit: Criticality, candidates: &[NodeId]) -> Vec<NodeId> {
    let mut nodes: Vec<&NodeEntry> = candidates.iter().filter_map(|c| state.nodes.get(c)).collect();
    match crit {
        Criticality::Hi => nodes.sort_by(|a, b| {
            b.effective_assurance()
                .cmp(&a.effective_assurance())
                .then(b.remaining_least_loaded().cmp(&a.remaining_least_loaded()))
                .then(a.spec.id.cmp(&b.spec.id))
        }),
        Criticality::Low => nodes.sort_by(|a, b| {
            b.remaining_least_loaded()
                .cmp(&a.remaining_least_loaded())
                .then(a.effective_assurance().cmp(&b.effective_assurance()))
                .then(a.spec.id.cmp(&b.spec.id))
        }),
        Criticality::No => {
            let pack = policy.strategy(Criticality::No) == Strategy::Pack;
            nodes.sort_by(|a, b| {
                let by_load = a.total_utilization().cmp(&b.total_utilization());
                (if pack { by_load.reverse() } else { by_load }).then(a.spec.id.cmp(&b.spec.id))
            })
        }
    }
    nodes.into_iter().map(|n| n.spec.id.clone()).collect()
}

/// Places `job`, preempting strictly lower-criticality jobs if needed.
pub(crate) fn schedule(
    state: &mut ClusterState,
    policy: &SchedulingPolicy,
    job: &str,
    excluded: &BTreeSet<NodeId>,
) -> Decision {
    let Some(entry) = state.jobs.get(job) else {
        return Decision::Unschedulable { job: job.to_string(), reasons: BTreeMap::new() };
    };
    let spec = entry.spec.clone();
    let mut reasons = BTreeMap::new();
    let mut feasible = Vec::new();
    for n in state.nodes.values() {
        match why_not(state, policy, &spec, n, excluded) {
            Ok(_) => feasible.push(n.spec.id.clone()),
            Err(r) => {
                reasons.insert(n.spec.id.clone(), r);
            }
        }
    }
    if let Some(best) = score(state, policy, spec.criticality, &feasible).into_iter().next() {
        if let Ok(p) = state.place(job, &best) {
            return Decision::Placed { job: job.to_string(), node: best, allocation: p.allocation() };
        }
    }

    let mut best: Option<((usize, u32, NodeId), Vec<JobId>)> = None;
    for (id, node) in &state.nodes {
        if static_check(state, policy, &spec, node, excluded).is_err() {
            continue;
        }
        if let Some(victims) = victims_for(state, &spec, id) {
            let key = (victims.len(), crit_sum(state, &victims), id.clone());
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, victims));
            }
        }
    }
    let Some(((_, _, node), victims)) = best else {
        return Decision::Unschedulable { job: job.to_string(), reasons };
    };
    for v in &victims {
        state.requeue(v);
    }
    match state.place(job, &node) {
        Ok(p) => Decision::Preempted { job: job.to_string(), node, allocation: p.allocation(), victims },
        Err(r) => {
            // unreachable when the trial above was exact; keep state sane
            reasons.insert(node, r);
            Decision::Unschedulable { job: job.to_string(), reasons }
        }
    }
}

fn crit_sum(state: &ClusterState, victims: &[JobId]) -> u32 {
    victims.iter().map(|v| state.placements[v].criticality.rank()).sum()
}

/// Whether `spec` fits on `node` once `victims` are gone.
fn fits_without(state: &ClusterState, spec: &JobSpec, node: &str, victims: &[&JobId]) -> bool {
    let mut entry = state.nodes[node].clone();
    let mut networks = if spec.network_requirements.is_empty() { None } else { Some(state.networks.clone()) };
    for v in victims {
        let p = &state.placements[*v];
        if p.server.is_some() {
            let _ = entry.rt.release(v);
        }
        entry.allocated_basic.sub(&p.basic);
        entry.allocated_additional.sub(&p.additional);
        if let Some(n) = networks.as_mut() {
            n.release_job(v);
        }
    }
    let empty = NetworkManager::new();
    capacity_check(&entry, networks.as_ref().unwrap_or(&empty), spec).is_ok()
}

/// Cheapest victim set on `node`: exhaustive up to three victims, ordered
/// by (count, summed criticality, ids); greedy by ascending criticality
/// beyond that.
fn victims_for(state: &ClusterState, spec: &JobSpec, node: &str) -> Option<Vec<JobId>> {
    let mut pool: Vec<&JobId> = state
        .placements
        .iter()
        .filter(|(_, p)| p.node == node && p.criticality < spec.criticality)
        .map(|(j, _)| j)
        .collect();
    if pool.is_empty() {
        return None;
    }
    pool.sort_by_key(|j| (state.placements[*j].criticality, *j));
    if !fits_without(state, spec, node, &pool) {
        return None;
    }
    for k in 1..=pool.len().min(3) {
        let mut best: Option<(u32, Vec<JobId>)> = None;
        for combo in combinations(pool.len(), k) {
            let set: Vec<&JobId> = combo.iter().map(|&i| pool[i]).collect();
            if fits_without(state, spec, node, &set) {
                let ids: Vec<JobId> = set.into_iter().cloned().collect();
                let key = (crit_sum(state, &ids), ids);
                if best.as_ref().is_none_or(|b| key < *b) {
                    best = Some(key);
                }
            }
        }
        if let Some((_, ids)) = best {
            return Some(ids);
        }
    }
    for n in 4..=pool.len() {
        if fits_without(state, spec, node, &pool[..n]) {
            return Some(pool[..n].iter().map(|j| (*j).clone()).collect());
        }
    }
    None
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return out };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert!(combinations(2, 3).is_empty());
    }
}
