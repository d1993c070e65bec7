//! Worker-side real-time admission.
//!
//! Each admitted job gets one deferrable server `(Q, T_s)` pinned to a core.
//! The job's tasks run under fixed priorities inside the server, and the
//! server is checked against a linear supply bound
//!
//! ```text
//! lsbf(t) = max(0, Q/T_s * (t - 2 (T_s - Q)))
//! ```
//!
//! Cores accept servers while their summed bandwidth stays at or below one.

pub mod exec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    priority_order, resolve_wcet, Criticality, JobId, JobSpec, Micros, Rational, WcetUnavailable, WorkerNode,
};

/// Candidate server periods are `T_min / k` for integer `k` up to this bound.
pub const MAX_PERIOD_DIVISOR: u64 = 10;

/// A task with its WCET resolved for one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedTask {
    pub name: String,
    pub wcet: Micros,
    pub period: Micros,
}

impl ResolvedTask {
    pub fn new(name: &str, wcet: Micros, period: Micros) -> Self {
        ResolvedTask { name: name.to_string(), wcet, period }
    }

    pub fn utilization(&self) -> Rational {
        Rational::new(self.wcet as i128, self.period as i128)
    }
}

/// Resolves every task of `job` on `node` and returns them from highest to
/// lowest priority.
pub fn resolve_tasks(job: &JobSpec, node: &WorkerNode) -> Result<Vec<ResolvedTask>, WcetUnavailable> {
    resolve_tasks_at(job, job.criticality, node)
}

pub fn resolve_tasks_at(
    job: &JobSpec,
    criticality: Criticality,
    node: &WorkerNode,
) -> Result<Vec<ResolvedTask>, WcetUnavailable> {
    priority_order(&job.tasks)
        .into_iter()
        .map(|i| {
            let t = &job.tasks[i];
            Ok(ResolvedTask { name: t.name.clone(), wcet: resolve_wcet(t, node, criticality)?, period: t.period })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerParams {
    pub budget: Micros,
    pub period: Micros,
}

impl ServerParams {
    pub fn new(budget: Micros, period: Micros) -> Self {
        ServerParams { budget, period }
    }

    pub fn utilization(&self) -> Rational {
        Rational::new(self.budget as i128, self.period as i128)
    }

    /// Linear supply bound at interval length `t`.
    pub fn lsbf(&self, t: Micros) -> Rational {
        let blackout = 2 * (self.period as i128 - self.budget as i128);
        let span = t as i128 - blackout;
        if span <= 0 {
            Rational::ZERO
        } else {
            self.utilization() * Rational::from_int(span)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Server {
    pub core: usize,
    pub params: ServerParams,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdmissionError {
    #[error("task set utilization exceeds one")]
    Infeasible,
    #[error(transparent)]
    WcetUnavailable(#[from] WcetUnavailable),
    #[error("task {0:?} has WCET above its period on this node")]
    WcetExceedsPeriod(String),
    #[error("job {0:?} holds no server on this node")]
    UnknownJob(JobId),
    #[error("job {0:?} already holds a server on this node")]
    AlreadyAdmitted(JobId),
    #[error("job {0:?} is not real-time")]
    NotRealtime(JobId),
}

/// Demand of task `i` plus all higher-priority interference in `[0, t)`.
/// `tasks` must be in priority order.
pub fn dbf(tasks: &[ResolvedTask], i: usize, t: Micros) -> u64 {
    tasks[i].wcet + tasks[..i].iter().map(|j| t.div_ceil(j.period) * j.wcet).sum::<u64>()
}

/// Scheduling points for task `i`: multiples of higher-priority periods up
/// to `T_i`, plus `T_i` itself. Sorted and deduplicated.
pub fn testing_set(tasks: &[ResolvedTask], i: usize) -> Vec<Micros> {
    let limit = tasks[i].period;
    let mut points = vec![limit];
    for j in &tasks[..i] {
        let mut k = j.period;
        while k <= limit {
            points.push(k);
            k += j.period;
        }
    }
    points.sort_unstable();
    points.dedup();
    points
}

/// Fixed-priority schedulability of `tasks` (priority order, implicit
/// deadlines) inside server `server`.
pub fn inner_schedulable(tasks: &[ResolvedTask], server: ServerParams) -> bool {
    if server.budget == 0 || server.budget > server.period {
        return tasks.is_empty();
    }
    (0..tasks.len()).all(|i| {
        testing_set(tasks, i)
            .into_iter()
            .any(|t| Rational::from_int(dbf(tasks, i, t) as i128) <= server.lsbf(t))
    })
}

fn total_utilization(tasks: &[ResolvedTask]) -> Rational {
    tasks.iter().map(ResolvedTask::utilization).sum()
}

/// Smallest budget for period `period` under which `tasks` pass
/// [`inner_schedulable`], if any.
pub fn min_budget(tasks: &[ResolvedTask], period: Micros) -> Option<Micros> {
    let lower = (total_utilization(tasks) * Rational::from_int(period as i128)).ceil_int().max(1) as u64;
    if lower > period || !inner_schedulable(tasks, ServerParams::new(period, period)) {
        return None;
    }
    // the test is monotone in the budget
    let (mut lo, mut hi) = (lower, period);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if inner_schedulable(tasks, ServerParams::new(mid, period)) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

/// Picks the server with the least bandwidth that passes the inner test.
///
/// Candidate periods are the divisors `T_min / k`, `k <= MAX_PERIOD_DIVISOR`;
/// ties on bandwidth go to the longer period.
pub fn derive_server(tasks: &[ResolvedTask]) -> Result<ServerParams, AdmissionError> {
    if tasks.is_empty() {
        return Err(AdmissionError::Infeasible);
    }
    if let Some(t) = tasks.iter().find(|t| t.wcet > t.period || t.period == 0) {
        return Err(AdmissionError::WcetExceedsPeriod(t.name.clone()));
    }
    if total_utilization(tasks) > Rational::ONE {
        return Err(AdmissionError::Infeasible);
    }
    let t_min = tasks.iter().map(|t| t.period).min().unwrap_or(0);
    let mut best: Option<ServerParams> = None;
    for k in 1..=MAX_PERIOD_DIVISOR {
        if t_min % k != 0 {
            continue;
        }
        let period = t_min / k;
        let Some(budget) = min_budget(tasks, period) else { continue };
        let cand = ServerParams::new(budget, period);
        // k ascends, so periods descend: strict improvement only
        if best.is_none_or(|b| cand.utilization() < b.utilization()) {
            best = Some(cand);
        }
    }
    best.ok_or(AdmissionError::Infeasible)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoreState {
    pub core: usize,
    pub servers: BTreeMap<JobId, ServerParams>,
    pub utilization: Rational,
}

/// Where a server was placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub core: usize,
    pub budget: Micros,
    pub period: Micros,
}

/// Admission request as sent by the scheduler to a node agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionRequest {
    pub job: JobSpec,
    /// Criticality the job runs at on this node (replicas may differ from
    /// the job's own level).
    pub criticality: Criticality,
    /// When set, nothing is reserved.
    #[serde(default)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionResponse {
    pub schedulable: bool,
    pub per_core_utilization: Vec<Rational>,
    pub allocated: Option<Allocation>,
}

/// Per-node admission state: one deferrable server per admitted job,
/// partitioned onto cores by worst fit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtAgent {
    cores: Vec<CoreState>,
    owners: BTreeMap<JobId, usize>,
}

impl RtAgent {
    pub fn new(cores: usize) -> Self {
        RtAgent {
            cores: (0..cores).map(|core| CoreState { core, ..Default::default() }).collect(),
            owners: BTreeMap::new(),
        }
    }

    /// Builds an agent whose cores already carry the given utilizations
    /// (as anonymous reservations).
    pub fn with_utilizations(utils: &[Rational]) -> Self {
        let mut agent = RtAgent::new(utils.len());
        for (c, u) in utils.iter().enumerate() {
            agent.cores[c].utilization = *u;
        }
        agent
    }

    pub fn cores(&self) -> &[CoreState] {
        &self.cores
    }

    pub fn per_core_utilization(&self) -> Vec<Rational> {
        self.cores.iter().map(|c| c.utilization).collect()
    }

    pub fn server_of(&self, job: &str) -> Option<Server> {
        let core = *self.owners.get(job)?;
        Some(Server { core, params: self.cores[core].servers[job] })
    }

    pub fn holds(&self, job: &str) -> bool {
        self.owners.contains_key(job)
    }

    /// Utilization of the least-loaded core.
    pub fn min_core_utilization(&self) -> Rational {
        self.cores.iter().map(|c| c.utilization).min().unwrap_or(Rational::ONE)
    }

    /// Worst fit: lowest utilization, ties to the lowest index.
    fn pick_core(&self) -> Option<usize> {
        self.cores.iter().min_by(|a, b| a.utilization.cmp(&b.utilization).then(a.core.cmp(&b.core))).map(|c| c.core)
    }

    /// Derives the server for `tasks` and reserves it unless `dry_run`.
    pub fn admit_tasks(
        &mut self,
        job: &str,
        tasks: &[ResolvedTask],
        dry_run: bool,
    ) -> Result<AdmissionResponse, AdmissionError> {
        if self.owners.contains_key(job) {
            return Err(AdmissionError::AlreadyAdmitted(job.to_string()));
        }
        let rejected = |s: &Self| AdmissionResponse {
            schedulable: false,
            per_core_utilization: s.per_core_utilization(),
            allocated: None,
        };
        let params = match derive_server(tasks) {
            Ok(p) => p,
            Err(AdmissionError::Infeasible) | Err(AdmissionError::WcetExceedsPeriod(_)) => return Ok(rejected(self)),
            Err(e) => return Err(e),
        };
        let Some(core) = self.pick_core() else { return Ok(rejected(self)) };
        let u = params.utilization();
        if self.cores[core].utilization + u > Rational::ONE || !inner_schedulable(tasks, params) {
            return Ok(rejected(self));
        }
        let allocated = Some(Allocation { core, budget: params.budget, period: params.period });
        if dry_run {
            let mut utils = self.per_core_utilization();
            utils[core] += u;
            return Ok(AdmissionResponse { schedulable: true, per_core_utilization: utils, allocated });
        }
        let c = &mut self.cores[core];
        c.servers.insert(job.to_string(), params);
        c.utilization += u;
        self.owners.insert(job.to_string(), core);
        Ok(AdmissionResponse { schedulable: true, per_core_utilization: self.per_core_utilization(), allocated })
    }

    /// Resolves `job` against `node` and admits it.
    pub fn admit(&mut self, job: &JobSpec, node: &WorkerNode) -> Result<AdmissionResponse, AdmissionError> {
        self.handle(&AdmissionRequest { job: job.clone(), criticality: job.criticality, dry_run: false }, node)
    }

    pub fn handle(&mut self, req: &AdmissionRequest, node: &WorkerNode) -> Result<AdmissionResponse, AdmissionError> {
        if !req.job.realtime {
            return Err(AdmissionError::NotRealtime(req.job.name.clone()));
        }
        let tasks = resolve_tasks_at(&req.job, req.criticality, node)?;
        self.admit_tasks(&req.job.name, &tasks, req.dry_run)
    }

    pub fn release(&mut self, job: &str) -> Result<Server, AdmissionError> {
        let core = self.owners.remove(job).ok_or_else(|| AdmissionError::UnknownJob(job.to_string()))?;
        let c = &mut self.cores[core];
        let params = c.servers.remove(job).expect("owner map and core state agree");
        c.utilization -= params.utilization();
        Ok(Server { core, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(wcet: u64, period: u64) -> ResolvedTask {
        ResolvedTask::new(&format!("t{period}"), wcet, period)
    }

    #[test]
    fn lsbf_shape() {
        let s = ServerParams::new(2000, 5000);
        assert_eq!(s.lsbf(6000), Rational::ZERO);
        assert_eq!(s.lsbf(10_000), Rational::from_int(1600));
        assert_eq!(s.lsbf(0), Rational::ZERO);
    }

    #[test]
    fn inner_test_examples() {
        assert!(inner_schedulable(&[rt(1000, 10_000)], ServerParams::new(2000, 5000)));
        assert!(!inner_schedulable(&[rt(1000, 1000)], ServerParams::new(999, 1000)));
        assert!(inner_schedulable(&[], ServerParams::new(1, 10)));
    }

    #[test]
    fn testing_set_points() {
        let tasks = vec![rt(1, 3000), rt(1, 4000), rt(1, 10_000)];
        assert_eq!(testing_set(&tasks, 2), vec![3000, 4000, 6000, 8000, 9000, 10_000]);
        assert_eq!(testing_set(&tasks, 0), vec![3000]);
    }

    #[test]
    fn saturated_task_gets_full_server() {
        let s = derive_server(&[rt(10_000, 10_000)]).unwrap();
        assert_eq!(s, ServerParams::new(10_000, 10_000));
        assert_eq!(s.utilization(), Rational::ONE);
    }

    #[test]
    fn overload_is_infeasible() {
        assert_eq!(derive_server(&[rt(6000, 10_000), rt(5000, 10_000)]), Err(AdmissionError::Infeasible));
    }

    #[test]
    fn derived_server_passes_inner_test() {
        let tasks = vec![rt(1000, 10_000), rt(2000, 20_000)];
        let s = derive_server(&tasks).unwrap();
        assert!(inner_schedulable(&tasks, s));
        assert!(s.utilization() >= Rational::new(1, 5));
    }

    #[test]
    fn release_unknown_job() {
        let mut a = RtAgent::new(1);
        assert_eq!(a.release("ghost"), Err(AdmissionError::UnknownJob("ghost".into())));
    }

    #[test]
    fn full_cores_reject() {
        let mut a = RtAgent::with_utilizations(&[Rational::ONE, Rational::ONE]);
        let r = a.admit_tasks("j", &[rt(100, 10_000)], false).unwrap();
        assert!(!r.schedulable);
        assert_eq!(r.per_core_utilization, vec![Rational::ONE, Rational::ONE]);
        assert!(r.allocated.is_none());
    }

    #[test]
    fn second_server_for_same_job_is_refused() {
        let mut a = RtAgent::new(2);
        a.admit_tasks("j", &[rt(100, 10_000)], false).unwrap();
        assert_eq!(
            a.admit_tasks("j", &[rt(100, 10_000)], false),
            Err(AdmissionError::AlreadyAdmitted("j".into()))
        );
    }
}
