use serde::{Deserialize, Serialize};

use super::ClusterState;
use crate::model::{JobId, Micros, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routed {
    pub leader: JobId,
    pub node: NodeId,
    pub payload: Vec<u8>,
    /// Set when this call promoted a backup.
    pub promoted: bool,
    /// Every live replica for TMR deployments, leader first.
    pub fanout: Vec<(JobId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("unknown deployment {0:?}")]
    UnknownDeployment(String),
    #[error("deployment {0:?} has no live replica")]
    NoLiveReplica(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no strict majority among replica responses")]
pub struct NoMajority;

fn alive(state: &ClusterState, job: &str, now: Micros, timeout: Micros) -> Option<NodeId> {
    let p = state.placements.get(job)?;
    if !state.nodes.get(&p.node).is_some_and(|n| n.ready) {
        return None;
    }
    // not yet reported since placement counts as alive
    let seen = state.job_last_seen.get(job).copied();
    match seen {
        Some(t) if now.saturating_sub(t) > timeout => None,
        _ => Some(p.node.clone()),
    }
}

/// Forwards `payload` to the deployment leader, promoting the live backup
/// of highest criticality (ties to the smallest id) when the leader is down.
pub(crate) fn route(
    state: &mut ClusterState,
    deployment: &str,
    payload: Vec<u8>,
    now: Micros,
    timeout: Micros,
) -> Result<Routed, RouteError> {
    let dep = state.deployments.get(deployment).ok_or_else(|| RouteError::UnknownDeployment(deployment.into()))?;
    let mut promoted = false;
    let (leader, node) = match alive(state, &dep.leader, now, timeout) {
        Some(n) => (dep.leader.clone(), n),
        None => {
            let pick = dep
                .backups
                .iter()
                .filter_map(|b| alive(state, b, now, timeout).map(|n| (b, n)))
                .max_by(|(a, _), (b, _)| {
                    let ca = state.jobs[*a].spec.criticality;
                    let cb = state.jobs[*b].spec.criticality;
                    ca.cmp(&cb).then(b.cmp(a))
                })
                .map(|(b, n)| (b.clone(), n));
            let Some((new, n)) = pick else { return Err(RouteError::NoLiveReplica(deployment.into())) };
            let dep = state.deployments.get_mut(deployment).unwrap();
            let old = std::mem::replace(&mut dep.leader, new.clone());
            dep.backups.retain(|b| *b != new);
            dep.backups.push(old);
            promoted = true;
            (new, n)
        }
    };
    let dep = &state.deployments[deployment];
    let fanout = if dep.tmr {
        dep.replicas().filter_map(|r| alive(state, r, now, timeout).map(|n| (r.clone(), n))).collect()
    } else {
        Vec::new()
    };
    Ok(Routed { leader, node, payload, promoted, fanout })
}

/// Returns the response held by a strict majority of replicas, compared
/// byte for byte.
pub fn tmr_vote(responses: &[Vec<u8>]) -> Result<Vec<u8>, NoMajority> {
    for r in responses {
        if responses.iter().filter(|x| *x == r).count() * 2 > responses.len() {
            return Ok(r.clone());
        }
    }
    Err(NoMajority)
}
