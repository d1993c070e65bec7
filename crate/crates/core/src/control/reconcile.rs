use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ControlPlane, Decision};
use crate::admission::Allocation;
use crate::model::{JobId, JobSpec, Micros, NodeId, Rational};
use crate::net::SlotGrant;

/// What node agents tell the master.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum NodeReport {
    Heartbeat {
        node: NodeId,
        at: Micros,
        per_core_utilization: Vec<Rational>,
        effective_assurance: i64,
        running: Vec<JobId>,
    },
    Migrate { node: NodeId, jobs: Vec<JobId> },
    Killed { node: NodeId, job: JobId },
}

/// Corrective actions sent to node agents and TDMA masters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlAction {
    Deploy { job: JobId, node: NodeId, spec: JobSpec, allocation: Option<Allocation> },
    Evict { job: JobId, node: NodeId },
    SlotGrant(SlotGrant),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReconcileOutcome {
    pub actions: Vec<ControlAction>,
    pub decisions: Vec<Decision>,
    pub lost_nodes: Vec<NodeId>,
    pub failed_jobs: Vec<JobId>,
    /// `(job, node it was moved off)`.
    pub displaced: Vec<(JobId, NodeId)>,
}

impl ControlPlane {
    /// One reconciliation round at time `now`.
    pub fn reconcile(&mut self, now: Micros, reports: &[NodeReport]) -> ReconcileOutcome {
        let mut out = ReconcileOutcome::default();
        let mut reported: BTreeMap<NodeId, BTreeSet<JobId>> = BTreeMap::new();
        let mut moved: BTreeMap<JobId, NodeId> = BTreeMap::new();

        for r in reports {
            if let NodeReport::Heartbeat { node, at, effective_assurance, running, .. } = r {
                let Some(n) = self.state.nodes.get_mut(node) else { continue };
                n.last_heartbeat = n.last_heartbeat.max(*at);
                n.ready = true;
                let gamma = *effective_assurance - n.spec.assurance.static_level();
                n.spec.assurance.set_gamma(gamma);
                for j in running {
                    if self.state.placements.get(j).is_some_and(|p| &p.node == node) {
                        self.state.job_last_seen.insert(j.clone(), *at);
                    }
                }
                reported.entry(node.clone()).or_default().extend(running.iter().cloned());
            }
        }

        let timeout = self.config.heartbeat_timeout;
        let lost: Vec<NodeId> = self
            .state
            .nodes
            .values()
            .filter(|n| n.ready && now.saturating_sub(n.last_heartbeat) > timeout)
            .map(|n| n.spec.id.clone())
            .collect();
        for id in &lost {
            self.state.nodes.get_mut(id).unwrap().ready = false;
            for j in self.state.jobs_on(id) {
                self.state.requeue(&j);
                out.displaced.push((j, id.clone()));
            }
        }
        out.lost_nodes = lost;

        for r in reports {
            match r {
                NodeReport::Killed { node, job } => {
                    if self.state.placements.get(job).is_some_and(|p| &p.node == node) {
                        self.state.mark_failed(job);
                        out.failed_jobs.push(job.clone());
                    }
                }
                NodeReport::Migrate { node, jobs } => {
                    for j in jobs {
                        if self.state.placements.get(j).is_some_and(|p| &p.node == node) {
                            self.state.requeue(j);
                            self.exclude(j, node);
                            moved.insert(j.clone(), node.clone());
                        }
                    }
                }
                NodeReport::Heartbeat { .. } => {}
            }
        }

        // safety sweep: nothing may stay on a node below its threshold
        let unsafe_jobs: Vec<(JobId, NodeId)> = self
            .state
            .placements
            .iter()
            .filter(|(_, p)| {
                self.state.nodes[&p.node].effective_assurance() < self.policy.threshold(p.criticality)
            })
            .map(|(j, p)| (j.clone(), p.node.clone()))
            .collect();
        for (j, n) in unsafe_jobs {
            self.state.requeue(&j);
            self.exclude(&j, &n);
            moved.insert(j, n);
        }

        let decisions = self.schedule_pending();
        let mut fresh: BTreeSet<JobId> = BTreeSet::new();
        for d in &decisions {
            match d {
                Decision::Placed { job, .. } => {
                    fresh.insert(job.clone());
                }
                Decision::Preempted { job, node, victims, .. } => {
                    fresh.insert(job.clone());
                    for v in victims {
                        fresh.remove(v);
                        moved.entry(v.clone()).or_insert_with(|| node.clone());
                    }
                }
                Decision::Unschedulable { .. } => {}
            }
        }
        out.decisions = decisions;
        out.displaced.extend(moved.iter().map(|(j, n)| (j.clone(), n.clone())));

        let mut evict: BTreeSet<(JobId, NodeId)> = BTreeSet::new();
        let mut deploy: BTreeSet<JobId> = BTreeSet::new();
        for (job, old) in &moved {
            let now_on = self.state.placements.get(job).map(|p| &p.node);
            if now_on != Some(old) && self.state.nodes.get(old).is_some_and(|n| n.ready) {
                evict.insert((job.clone(), old.clone()));
            }
        }
        for (node, running) in &reported {
            if !self.state.nodes.get(node).is_some_and(|n| n.ready) {
                continue;
            }
            let desired: BTreeSet<JobId> = self.state.jobs_on(node).into_iter().collect();
            for j in running.difference(&desired) {
                evict.insert((j.clone(), node.clone()));
            }
            deploy.extend(desired.difference(running).cloned());
        }
        deploy.extend(fresh.into_iter().filter(|j| self.state.placements.contains_key(j)));

        out.actions.extend(evict.into_iter().map(|(job, node)| ControlAction::Evict { job, node }));
        for job in deploy {
            let p = &self.state.placements[&job];
            out.actions.push(ControlAction::Deploy {
                job: job.clone(),
                node: p.node.clone(),
                spec: self.state.jobs[&job].spec.clone(),
                allocation: p.allocation(),
            });
            out.actions.extend(p.slot_grants().into_iter().map(ControlAction::SlotGrant));
        }
        out
    }
}
