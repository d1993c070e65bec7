//! Network manager: TDMA slot tables and best-effort delay/capacity
//! bookkeeping, with all-or-nothing reservation per job.

mod slots;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{JobId, Micros, Network, NetworkId, NetworkKind, NetworkRequirementKind, NodeId};

pub use slots::{Slot, SlotTable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("slot period {period} does not divide the major frame {major_frame}")]
    BadPeriod { period: Micros, major_frame: Micros },
    #[error("slot length {length} / period {period} must be positive multiples of tick {tick} with length <= period")]
    BadSlotRequest { length: Micros, period: Micros, tick: Micros },
    #[error("no free slot")]
    Infeasible,
    #[error("job {0:?} holds nothing here")]
    UnknownJob(JobId),
    #[error("unknown network {0:?}")]
    UnknownNetwork(NetworkId),
    #[error("target {0:?} is not a member of the network")]
    UnknownTarget(NodeId),
    #[error("node {0:?} is not a member of the network")]
    NotMember(NodeId),
    #[error("network {0:?} is not a TDMA network")]
    NotTdma(NetworkId),
}

/// Slot parameters forwarded to the TDMA master.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotGrant {
    pub network: NetworkId,
    pub job: JobId,
    pub offset: Micros,
    pub length: Micros,
    pub period: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reservation {
    Slot(SlotGrant),
    Bandwidth { network: NetworkId, from: NodeId, to: NodeId, kbps: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NetworkManager {
    networks: BTreeMap<NetworkId, Network>,
    tables: BTreeMap<NetworkId, SlotTable>,
    /// Reserved kbit/s per (network, from, to).
    reserved: BTreeMap<(NetworkId, NodeId, NodeId), u64>,
    holdings: BTreeMap<JobId, Vec<Reservation>>,
}

impl NetworkManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_network(&mut self, net: Network) {
        if let NetworkKind::Tdma { major_frame, tick } = net.kind {
            self.tables.insert(net.id.clone(), SlotTable::new(&net.id, major_frame, tick));
        }
        self.networks.insert(net.id.clone(), net);
    }

    pub fn network(&self, id: &str) -> Option<&Network> {
        self.networks.get(id)
    }

    pub fn networks(&self) -> impl Iterator<Item = &Network> {
        self.networks.values()
    }

    pub fn table(&self, id: &str) -> Option<&SlotTable> {
        self.tables.get(id)
    }

    pub fn holdings(&self, job: &str) -> &[Reservation] {
        self.holdings.get(job).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn reserved_between(&self, net: &str, from: &str, to: &str) -> u64 {
        self.reserved.get(&(net.to_string(), from.to_string(), to.to_string())).copied().unwrap_or(0)
    }

    pub fn allocate_slot(&mut self, network: &str, job: &str, length: Micros, period: Micros) -> Result<SlotGrant, NetError> {
        let table = match self.tables.get_mut(network) {
            Some(t) => t,
            None if self.networks.contains_key(network) => return Err(NetError::NotTdma(network.to_string())),
            None => return Err(NetError::UnknownNetwork(network.to_string())),
        };
        let offset = table.allocate(job, length, period)?;
        let grant = SlotGrant { network: network.to_string(), job: job.to_string(), offset, length, period };
        self.holdings.entry(job.to_string()).or_default().push(Reservation::Slot(grant.clone()));
        Ok(grant)
    }

    pub fn release_slot(&mut self, network: &str, job: &str) -> Result<Vec<Slot>, NetError> {
        let table = self.tables.get_mut(network).ok_or_else(|| NetError::UnknownNetwork(network.to_string()))?;
        let gone = table.release(job)?;
        if let Some(h) = self.holdings.get_mut(job) {
            h.retain(|r| !matches!(r, Reservation::Slot(g) if g.network == network));
            if h.is_empty() {
                self.holdings.remove(job);
            }
        }
        Ok(gone)
    }

    /// Whether `node` can reach `target` within `max_delay` with at least
    /// `min_bandwidth` kbit/s of unreserved capacity. Nothing is reserved.
    pub fn check_best_effort(
        &self,
        network: &str,
        node: &str,
        target: &str,
        max_delay: Micros,
        min_bandwidth: u64,
    ) -> Result<bool, NetError> {
        let net = self.networks.get(network).ok_or_else(|| NetError::UnknownNetwork(network.to_string()))?;
        if !net.members.contains(node) {
            return Err(NetError::NotMember(node.to_string()));
        }
        if !net.members.contains(target) {
            return Err(NetError::UnknownTarget(target.to_string()));
        }
        let delay_ok = net.delay.get(node, target).is_some_and(|d| d <= max_delay);
        let bw_ok = match net.capacity_between(node, target) {
            Some(cap) => cap.saturating_sub(self.reserved_between(network, node, target)) >= min_bandwidth,
            None => true,
        };
        Ok(delay_ok && bw_ok)
    }

    /// Checks and, on success, reserves bandwidth for a best-effort
    /// requirement.
    pub fn place_best_effort(
        &mut self,
        network: &str,
        job: &str,
        node: &str,
        target: &str,
        max_delay: Micros,
        min_bandwidth: u64,
    ) -> Result<bool, NetError> {
        if !self.check_best_effort(network, node, target, max_delay, min_bandwidth)? {
            return Ok(false);
        }
        *self.reserved.entry((network.to_string(), node.to_string(), target.to_string())).or_insert(0) += min_bandwidth;
        self.holdings.entry(job.to_string()).or_default().push(Reservation::Bandwidth {
            network: network.to_string(),
            from: node.to_string(),
            to: target.to_string(),
            kbps: min_bandwidth,
        });
        Ok(true)
    }

    /// Reserves every network requirement of `job_id` on `node`, or nothing.
    ///
    /// Returns the reservation plan when feasible. With `dry_run` the plan
    /// is computed but the manager is left untouched.
    pub fn network_feasible(
        &mut self,
        job_id: &str,
        requirements: &[crate::model::NetworkRequirement],
        node: &str,
        dry_run: bool,
    ) -> Option<Vec<Reservation>> {
        if requirements.is_empty() {
            return Some(Vec::new());
        }
        // phase one: reserve on a scratch copy
        let mut scratch = self.clone();
        let mut plan = Vec::new();
        for req in requirements {
            let net = scratch.networks.get(&req.network)?;
            if !net.members.contains(node) {
                return None;
            }
            match &req.kind {
                NetworkRequirementKind::Tdma { slot_length, slot_period } => {
                    let grant = scratch.allocate_slot(&req.network, job_id, *slot_length, *slot_period).ok()?;
                    plan.push(Reservation::Slot(grant));
                }
                NetworkRequirementKind::BestEffort { target, max_delay, min_bandwidth } => {
                    if !scratch
                        .place_best_effort(&req.network, job_id, node, target, *max_delay, *min_bandwidth)
                        .ok()?
                    {
                        return None;
                    }
                    plan.push(Reservation::Bandwidth {
                        network: req.network.clone(),
                        from: node.to_string(),
                        to: target.clone(),
                        kbps: *min_bandwidth,
                    });
                }
            }
        }
        // phase two: commit
        if !dry_run {
            *self = scratch;
        }
        Some(plan)
    }

    /// Drops every reservation held by `job`.
    pub fn release_job(&mut self, job: &str) -> Vec<Reservation> {
        let held = self.holdings.remove(job).unwrap_or_default();
        for r in &held {
            match r {
                Reservation::Slot(g) => {
                    if let Some(t) = self.tables.get_mut(&g.network) {
                        let _ = t.release(job);
                    }
                }
                Reservation::Bandwidth { network, from, to, kbps } => {
                    let key = (network.clone(), from.clone(), to.clone());
                    if let Some(v) = self.reserved.get_mut(&key) {
                        *v -= kbps;
                        if *v == 0 {
                            self.reserved.remove(&key);
                        }
                    }
                }
            }
        }
        held
    }

    /// Every (network, from, to) whose reservations exceed the configured
    /// capacity. Empty in a consistent manager.
    pub fn capacity_violations(&self) -> Vec<(NetworkId, NodeId, NodeId)> {
        self.reserved
            .iter()
            .filter(|((n, a, b), &used)| {
                self.networks.get(n).and_then(|net| net.capacity_between(a, b)).is_some_and(|cap| used > cap)
            })
            .map(|(k, _)| k.clone())
            .collect()
    }
}
