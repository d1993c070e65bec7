use serde::{Deserialize, Serialize};

use super::{
    Criticality, JobSpec, Network, NetworkKind, NetworkRequirementKind, Rational, Wcet, WorkerNode,
};

/// One broken rule. Violations are data: validation collects all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    #[error("{job}: real-time jobs have at least LOW criticality")]
    RealtimeBelowLow { job: String },
    #[error("{job}: real-time job has no tasks")]
    RealtimeWithoutTasks { job: String },
    #[error("{job}: non-real-time job declares tasks")]
    TasksWithoutRealtime { job: String },
    #[error("{job}/{task}: HI requires per-platform WCET")]
    HiRequiresPerPlatform { job: String, task: String },
    #[error("{job}/{task}: period must be positive")]
    ZeroPeriod { job: String, task: String },
    #[error("{job}/{task}: WCET values must be positive")]
    ZeroWcet { job: String, task: String },
    #[error("{job}/{task}: WCET {wcet} exceeds period {period}")]
    WcetExceedsPeriod { job: String, task: String, wcet: u64, period: u64 },
    #[error("{job}/{task}: per-platform WCET map is empty")]
    EmptyPlatformMap { job: String, task: String },
    #[error("{job}: negative cpu_utilization request")]
    NegativeCpu { job: String },
    #[error("{job}: TDMA requirement on {network} needs 0 < slot_length <= slot_period")]
    BadTdmaRequirement { job: String, network: String },
    #[error("{job}: best-effort requirement on {network} needs max_delay > 0")]
    BadBestEffortRequirement { job: String, network: String },
    #[error("{job}: replica count must be positive")]
    ZeroReplicas { job: String },
    #[error("{job}: backup criticality exceeds leader criticality")]
    BackupAboveLeader { job: String },
    #[error("{job}: TMR deployments have exactly 3 replicas")]
    TmrNeedsThree { job: String },
    #[error("{node}: speed_factor must be positive")]
    NonPositiveSpeed { node: String },
    #[error("{node}: at least one core required")]
    NoCores { node: String },
    #[error("{node}: cpu capacity must lie in [0, cores]")]
    CpuCapacityRange { node: String },
    #[error("{node}: gamma must lie in [-(alpha+beta), 0]")]
    GammaRange { node: String },
    #[error("{network}: delay from {node} to itself must be 0")]
    NonZeroSelfDelay { network: String, node: String },
    #[error("{network}: tick must be positive and divide the major frame")]
    TickDoesNotDivideFrame { network: String },
}

fn check_criticality(job: &JobSpec, crit: Criticality, out: &mut Vec<Violation>) {
    if job.realtime && crit < Criticality::Low {
        out.push(Violation::RealtimeBelowLow { job: job.name.clone() });
    }
    if job.realtime && crit == Criticality::Hi {
        for t in &job.tasks {
            if !matches!(t.wcet, Wcet::PerPlatform(_)) {
                out.push(Violation::HiRequiresPerPlatform { job: job.name.clone(), task: t.name.clone() });
            }
        }
    }
}

/// Every violated invariant of `job` and its nested types. Empty means ok.
pub fn validate_job(job: &JobSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let name = || job.name.clone();

    check_criticality(job, job.criticality, &mut out);
    if job.realtime && job.tasks.is_empty() {
        out.push(Violation::RealtimeWithoutTasks { job: name() });
    }
    if !job.realtime && !job.tasks.is_empty() {
        out.push(Violation::TasksWithoutRealtime { job: name() });
    }
    if job.basic_request.cpu_utilization < Rational::ZERO {
        out.push(Violation::NegativeCpu { job: name() });
    }

    for t in &job.tasks {
        let task = || t.name.clone();
        if t.period == 0 {
            out.push(Violation::ZeroPeriod { job: name(), task: task() });
        }
        let values: Vec<u64> = match &t.wcet {
            Wcet::PerPlatform(m) => {
                if m.is_empty() {
                    out.push(Violation::EmptyPlatformMap { job: name(), task: task() });
                }
                m.values().copied().collect()
            }
            Wcet::Baseline(c) => vec![*c],
        };
        if values.contains(&0) {
            out.push(Violation::ZeroWcet { job: name(), task: task() });
        }
        if let Some(&worst) = values.iter().max() {
            if t.period > 0 && worst > t.period {
                out.push(Violation::WcetExceedsPeriod { job: name(), task: task(), wcet: worst, period: t.period });
            }
        }
    }

    for req in &job.network_requirements {
        match &req.kind {
            NetworkRequirementKind::Tdma { slot_length, slot_period } => {
                if *slot_length == 0 || slot_length > slot_period {
                    out.push(Violation::BadTdmaRequirement { job: name(), network: req.network.clone() });
                }
            }
            NetworkRequirementKind::BestEffort { max_delay, .. } => {
                if *max_delay == 0 {
                    out.push(Violation::BadBestEffortRequirement { job: name(), network: req.network.clone() });
                }
            }
        }
    }

    if let Some(d) = &job.deployment {
        if d.replicas == 0 {
            out.push(Violation::ZeroReplicas { job: name() });
        }
        if d.backup_criticality > d.leader_criticality {
            out.push(Violation::BackupAboveLeader { job: name() });
        }
        if d.tmr && d.replicas != 3 {
            out.push(Violation::TmrNeedsThree { job: name() });
        }
        // replicas run at their own criticality; the same rules apply to them
        for crit in [d.leader_criticality, d.backup_criticality] {
            if crit != job.criticality {
                check_criticality(job, crit, &mut out);
            }
        }
    }
    out.dedup();
    out
}

pub fn validate_node(node: &WorkerNode) -> Vec<Violation> {
    let mut out = Vec::new();
    let id = || node.id.clone();
    if node.speed_factor <= Rational::ZERO {
        out.push(Violation::NonPositiveSpeed { node: id() });
    }
    if node.cores == 0 {
        out.push(Violation::NoCores { node: id() });
    }
    let cpu = node.basic_capacity.cpu_utilization;
    if cpu < Rational::ZERO || cpu > Rational::from_int(node.cores as i128) {
        out.push(Violation::CpuCapacityRange { node: id() });
    }
    let g = node.assurance.gamma;
    if g > 0 || g < -node.assurance.static_level() {
        out.push(Violation::GammaRange { node: id() });
    }
    out
}

pub fn validate_network(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    for m in &net.members {
        let own = net.delay.0.get(m).and_then(|row| row.get(m)).copied().flatten();
        if matches!(own, Some(d) if d != 0) || net.delay.0.get(m).is_some_and(|r| matches!(r.get(m), Some(None))) {
            out.push(Violation::NonZeroSelfDelay { network: net.id.clone(), node: m.clone() });
        }
    }
    if let NetworkKind::Tdma { major_frame, tick } = net.kind {
        if tick == 0 || major_frame == 0 || major_frame % tick != 0 {
            out.push(Violation::TickDoesNotDivideFrame { network: net.id.clone() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReplicaPolicy, RtTask};

    #[test]
    fn realtime_needs_low() {
        let job = JobSpec::realtime("j", Criticality::No, vec![RtTask::baseline("t", 1000, 10)]);
        let v = validate_job(&job);
        assert_eq!(v, vec![Violation::RealtimeBelowLow { job: "j".into() }]);
        assert!(v[0].to_string().contains("real-time jobs have at least LOW"));
    }

    #[test]
    fn vacuous_job_is_ok() {
        assert!(validate_job(&JobSpec::best_effort("j", Criticality::No)).is_empty());
    }

    #[test]
    fn hi_realtime_needs_per_platform() {
        let job = JobSpec::realtime("j", Criticality::Hi, vec![RtTask::baseline("t", 1000, 10)]);
        let v = validate_job(&job);
        assert_eq!(v, vec![Violation::HiRequiresPerPlatform { job: "j".into(), task: "t".into() }]);
        assert!(v[0].to_string().contains("HI requires per-platform WCET"));
    }

    #[test]
    fn collects_every_violation() {
        let mut job = JobSpec::realtime("j", Criticality::No, vec![RtTask::baseline("t", 100, 200)]);
        job.deployment = Some(ReplicaPolicy {
            replicas: 2,
            leader_criticality: Criticality::Low,
            backup_criticality: Criticality::Hi,
            tmr: true,
        });
        let v = validate_job(&job);
        assert!(v.contains(&Violation::RealtimeBelowLow { job: "j".into() }));
        assert!(v.contains(&Violation::WcetExceedsPeriod { job: "j".into(), task: "t".into(), wcet: 200, period: 100 }));
        assert!(v.contains(&Violation::BackupAboveLeader { job: "j".into() }));
        assert!(v.contains(&Violation::TmrNeedsThree { job: "j".into() }));
        assert!(v.contains(&Violation::HiRequiresPerPlatform { job: "j".into(), task: "t".into() }));
    }

    #[test]
    fn tdma_network_tick_must_divide_frame() {
        let net = Network {
            id: "tsn".into(),
            kind: NetworkKind::Tdma { major_frame: 1000, tick: 300 },
            members: ["a".to_string()].into(),
            delay: Default::default(),
            capacity: vec![],
        };
        assert_eq!(validate_network(&net), vec![Violation::TickDoesNotDivideFrame { network: "tsn".into() }]);
    }
}
