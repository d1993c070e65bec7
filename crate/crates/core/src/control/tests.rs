use super::*;
use crate::model::{AssuranceLevel, ReplicaPolicy, RtTask};

fn node(id: &str, alpha: u32, beta: u32, cores: u32) -> WorkerNode {
    WorkerNode {
        id: id.into(),
        rt_capable: true,
        assurance: AssuranceLevel::new(alpha, beta),
        platform: "x86-i5".into(),
        speed_factor: Rational::ONE,
        cores,
        basic_capacity: BasicResources::new(Rational::from_int(cores as i128), 1000, 1000),
        additional_inventory: AdditionalResources::default(),
        networks: BTreeSet::new(),
    }
}

fn cpu_job(name: &str, crit: Criticality, n: i128, d: i128) -> JobSpec {
    let mut j = JobSpec::best_effort(name, crit);
    j.basic_request.cpu_utilization = Rational::new(n, d);
    j
}

fn plane(nodes: Vec<WorkerNode>) -> ControlPlane {
    let mut p = ControlPlane::new(SchedulingPolicy::default(), ControlConfig::default());
    for n in nodes {
        p.state.register_node(n, 0).unwrap();
    }
    p
}

fn place(p: &mut ControlPlane, job: JobSpec) -> Decision {
    let name = job.name.clone();
    p.submit(job).unwrap();
    p.schedule(&name)
}

#[test]
fn filter_threshold_rt_and_platform() {
    let mut p = plane(vec![node("low", 2, 2, 1), {
        let mut n = node("nort", 5, 5, 1);
        n.rt_capable = false;
        n
    }, {
        let mut n = node("arm", 5, 5, 1);
        n.platform = "armv8-a53".into();
        n
    }, node("ok", 5, 5, 1)]);
    p.policy.min_assurance.insert(Criticality::Hi, 5);
    let job = JobSpec::realtime("h", Criticality::Hi, vec![RtTask::per_platform("t", 10_000, &[("x86-i5", 1000)])]);
    p.submit(job).unwrap();
    assert_eq!(filter(&p.state, &p.policy, "h", &BTreeSet::new()), vec!["ok".to_string()]);
}

#[test]
fn score_orderings() {
    let p = plane(vec![node("a", 3, 4, 1), node("b", 4, 5, 1)]);
    let ids = vec!["a".to_string(), "b".to_string()];
    assert_eq!(score(&p.state, &p.policy, Criticality::Hi, &ids)[0], "b");
    assert_eq!(score(&p.state, &p.policy, Criticality::Low, &ids)[0], "a");
}

#[test]
fn remaining_least_loaded_core() {
    let mut n = NodeEntry::new(node("a", 5, 5, 2), 0);
    n.rt = RtAgent::with_utilizations(&[Rational::new(1, 2), Rational::new(1, 5)]);
    assert_eq!(n.remaining_least_loaded(), Rational::new(4, 5));
}

#[test]
fn pack_and_spread_for_no_jobs() {
    let mut p = plane(vec![node("a", 1, 1, 1), node("b", 1, 1, 1)]);
    assert!(matches!(place(&mut p, cpu_job("x", Criticality::No, 1, 10)), Decision::Placed { node, .. } if node == "a"));
    assert!(matches!(place(&mut p, cpu_job("y", Criticality::No, 1, 10)), Decision::Placed { node, .. } if node == "a"));
    p.policy.strategy.insert(Criticality::No, Strategy::Spread);
    assert!(matches!(place(&mut p, cpu_job("z", Criticality::No, 1, 10)), Decision::Placed { node, .. } if node == "b"));
}

#[test]
fn preempts_lower_criticality() {
    let mut p = plane(vec![node("a", 5, 5, 1)]);
    place(&mut p, cpu_job("no", Criticality::No, 1, 2));
    let d = place(&mut p, cpu_job("hi", Criticality::Hi, 7, 10));
    assert_eq!(
        d,
        Decision::Preempted { job: "hi".into(), node: "a".into(), allocation: None, victims: vec!["no".into()] }
    );
    assert_eq!(p.state.jobs["no"].status, JobStatus::Pending);
    assert!(p.state.check_invariants().is_empty());
}

#[test]
fn hi_never_preempts_hi() {
    let mut p = plane(vec![node("a", 5, 5, 1)]);
    place(&mut p, cpu_job("h1", Criticality::Hi, 1, 2));
    let d = place(&mut p, cpu_job("h2", Criticality::Hi, 7, 10));
    assert!(matches!(d, Decision::Unschedulable { .. }));
    assert_eq!(p.state.jobs["h2"].status, JobStatus::Pending);
}

#[test]
fn preemption_prefers_fewest_then_cheapest() {
    let mut p = plane(vec![node("a", 5, 5, 1)]);
    place(&mut p, cpu_job("n1", Criticality::No, 3, 10));
    place(&mut p, cpu_job("l1", Criticality::Low, 3, 10));
    place(&mut p, cpu_job("n2", Criticality::No, 2, 10));
    // needs 0.4: either n1 or l1 alone suffices, n1 is cheaper
    let d = place(&mut p, cpu_job("h", Criticality::Hi, 4, 10));
    assert!(matches!(d, Decision::Preempted { victims, .. } if victims == vec!["n1".to_string()]));
}

#[test]
fn release_restores_allocation() {
    let mut p = plane(vec![node("a", 5, 5, 2)]);
    let before = p.state.nodes["a"].clone();
    let job = JobSpec::realtime("r", Criticality::Low, vec![RtTask::baseline("t", 10_000, 1000)]);
    assert!(matches!(place(&mut p, job), Decision::Placed { allocation: Some(_), .. }));
    p.delete("r").unwrap();
    assert_eq!(p.state.nodes["a"], before);
}

#[test]
fn reconcile_diff() {
    let mut p = plane(vec![node("a", 5, 5, 1)]);
    p.submit(cpu_job("j1", Criticality::Low, 1, 10)).unwrap();
    let out = p.reconcile(0, &[]);
    assert!(matches!(&out.actions[..], [ControlAction::Deploy { job, node, .. }] if job == "j1" && node == "a"));

    let hb = |running: Vec<&str>| NodeReport::Heartbeat {
        node: "a".into(),
        at: 10,
        per_core_utilization: vec![Rational::ZERO],
        effective_assurance: 10,
        running: running.into_iter().map(String::from).collect(),
    };
    assert!(p.reconcile(10, &[hb(vec!["j1"])]).actions.is_empty());
    let out = p.reconcile(10, &[hb(vec!["j1", "ghost"])]);
    assert_eq!(out.actions, vec![ControlAction::Evict { job: "ghost".into(), node: "a".into() }]);
    let out = p.reconcile(10, &[hb(vec![])]);
    assert!(matches!(&out.actions[..], [ControlAction::Deploy { job, .. }] if job == "j1"));
}

#[test]
fn migrate_request_moves_job_off_node() {
    let mut p = plane(vec![node("a", 9, 9, 1), node("b", 4, 4, 1)]);
    p.submit(cpu_job("h", Criticality::Hi, 1, 2)).unwrap();
    p.reconcile(0, &[]);
    assert_eq!(p.state.placements["h"].node, "a");
    let out = p.reconcile(1, &[NodeReport::Migrate { node: "a".into(), jobs: vec!["h".into()] }]);
    assert_eq!(p.state.placements["h"].node, "b");
    assert!(out.actions.contains(&ControlAction::Evict { job: "h".into(), node: "a".into() }));
    // the taint lasts one round only
    assert!(p.exclusions.is_empty());
}

#[test]
fn lost_node_requeues_jobs() {
    let mut p = plane(vec![node("a", 5, 5, 1), node("b", 5, 5, 1)]);
    p.submit(cpu_job("j", Criticality::Low, 1, 10)).unwrap();
    p.reconcile(0, &[]);
    let first = p.state.placements["j"].node.clone();
    let other = if first == "a" { "b" } else { "a" };
    let hb = NodeReport::Heartbeat {
        node: other.into(),
        at: 900_000,
        per_core_utilization: vec![],
        effective_assurance: 10,
        running: vec![],
    };
    let out = p.reconcile(900_000, &[hb]);
    assert_eq!(out.lost_nodes, vec![first]);
    assert_eq!(p.state.placements["j"].node, other);
}

#[test]
fn deployment_expansion_and_anti_affinity() {
    let mut p = plane(vec![node("a", 5, 5, 1), node("b", 5, 5, 1)]);
    let mut spec = cpu_job("svc", Criticality::Low, 1, 10);
    spec.deployment =
        Some(ReplicaPolicy { replicas: 3, leader_criticality: Criticality::Low, backup_criticality: Criticality::No, tmr: true });
    let ids = p.submit(spec).unwrap();
    assert_eq!(ids, vec!["svc-r0", "svc-r1", "svc-r2"]);
    p.schedule_pending();
    let a = &p.state.placements["svc-r0"].node;
    let b = &p.state.placements["svc-r1"].node;
    assert_ne!(a, b);
    assert_eq!(p.state.jobs["svc-r2"].status, JobStatus::Pending);
}

#[test]
fn route_promotes_highest_live_backup() {
    let mut p = plane(vec![node("a", 5, 5, 1), node("b", 5, 5, 1), node("c", 5, 5, 1)]);
    let mut spec = cpu_job("svc", Criticality::Low, 1, 10);
    spec.deployment =
        Some(ReplicaPolicy { replicas: 3, leader_criticality: Criticality::Low, backup_criticality: Criticality::No, tmr: false });
    p.submit(spec).unwrap();
    p.schedule_pending();
    p.state.jobs.get_mut("svc-r2").unwrap().spec.criticality = Criticality::Low;
    let r = p.route("svc", b"x".to_vec(), 0).unwrap();
    assert_eq!((r.leader.as_str(), r.promoted), ("svc-r0", false));

    p.state.job_last_seen.insert("svc-r0".into(), 0);
    let r = p.route("svc", b"x".to_vec(), 1_000_000).unwrap();
    assert_eq!((r.leader.as_str(), r.promoted), ("svc-r2", true));
    assert_eq!(p.state.deployments["svc"].backups, vec!["svc-r1".to_string(), "svc-r0".to_string()]);

    for j in ["svc-r1", "svc-r2"] {
        p.state.job_last_seen.insert(j.into(), 0);
    }
    assert_eq!(p.route("svc", vec![], 1_000_000), Err(RouteError::NoLiveReplica("svc".into())));
    assert!(matches!(p.route("nope", vec![], 0), Err(RouteError::UnknownDeployment(_))));
}

#[test]
fn tmr_examples() {
    let (a, b, c) = (b"A".to_vec(), b"B".to_vec(), b"C".to_vec());
    assert_eq!(tmr_vote(&[a.clone(), a.clone(), b.clone()]), Ok(a.clone()));
    assert_eq!(tmr_vote(&[a.clone(), b.clone(), c]), Err(NoMajority));
    assert_eq!(tmr_vote(&[a.clone(), a.clone(), a.clone()]), Ok(a.clone()));
    assert_eq!(tmr_vote(&[a.clone(), b.clone()]), Err(NoMajority));
}

#[test]
fn submit_rejects_invalid_and_duplicates() {
    let mut p = plane(vec![]);
    let bad = JobSpec::realtime("b", Criticality::Hi, vec![RtTask::baseline("t", 1000, 10)]);
    assert!(matches!(p.submit(bad), Err(ControlError::Invalid(_))));
    p.submit(JobSpec::best_effort("j", Criticality::No)).unwrap();
    assert_eq!(p.submit(JobSpec::best_effort("j", Criticality::No)), Err(ControlError::DuplicateJob("j".into())));
}
