use super::*;
use crate::model::{AdditionalResources, AssuranceLevel, BasicResources, ReplicaPolicy, RtTask};

fn node(id: &str) -> WorkerNode {
    WorkerNode {
        id: id.into(),
        rt_capable: true,
        assurance: AssuranceLevel::new(5, 5),
        platform: "x86-i5".into(),
        speed_factor: Rational::ONE,
        cores: 1,
        basic_capacity: BasicResources::new(Rational::ONE, 100, 100),
        additional_inventory: AdditionalResources::default(),
        networks: BTreeSet::new(),
    }
}

fn scenario(nodes: Vec<WorkerNode>, events: Vec<TimedEvent>, horizon: Micros) -> SimScenario {
    SimScenario {
        seed: 7,
        horizon,
        nodes,
        networks: Vec::new(),
        events,
        channels: vec![ChannelSpec { name: "loadavg".into(), mean: 0.5, sd: 0.1, mirror: None }],
        probe: None,
        policy: None,
        monitor: None,
        control: None,
        sampling_period: None,
        reconcile_interval: 50_000,
    }
}

fn at(at: Micros, event: SimEvent) -> TimedEvent {
    TimedEvent { at, event }
}

fn rt_job(name: &str) -> JobSpec {
    JobSpec::realtime(name, Criticality::Low, vec![RtTask::baseline("t", 10_000, 1_000)])
}

fn kinds(r: &SimReport) -> Vec<&'static str> {
    r.timeline
        .iter()
        .map(|e| match &e.event {
            TimelineEvent::Alarm { .. } => "alarm",
            TimelineEvent::KillJob { .. } => "kill",
            TimelineEvent::GammaDowngrade { .. } => "downgrade",
            TimelineEvent::MigrateRequest { .. } => "migrate_request",
            TimelineEvent::Migrated { .. } => "migrated",
            _ => "",
        })
        .filter(|k| !k.is_empty())
        .collect()
}

#[test]
fn single_rt_job_runs_clean() {
    let s = scenario(vec![node("a")], vec![at(0, SimEvent::SubmitJob { job: rt_job("j") })], 1_000_000);
    let r = run(&s).unwrap();
    assert!(r.events(|e| matches!(e, TimelineEvent::Placed { job, node } if job == "j" && node == "a")).next().is_some());
    assert!(r.misses.is_empty());
    assert!(r.violations.is_empty(), "{:?}", r.violations);
}

#[test]
fn three_stage_sequence() {
    let r = run(&three_stage_scenario(1)).unwrap();
    assert!(r.violations.is_empty(), "{:?}", r.violations);
    assert_eq!(kinds(&r), vec!["alarm", "kill", "downgrade", "migrate_request", "migrated"]);
    let kill = r.events(|e| matches!(e, TimelineEvent::KillJob { .. })).next().unwrap();
    assert!(matches!(&kill.event, TimelineEvent::KillJob { job, .. } if job == "batch"));
    let m = r.events(|e| matches!(e, TimelineEvent::Migrated { .. })).next().unwrap();
    assert!(matches!(&m.event, TimelineEvent::Migrated { job, from, to } if job == "control" && from == "A" && to == "B"));
}

#[test]
fn same_seed_same_bytes() {
    let s = three_stage_scenario(42);
    assert_eq!(run(&s).unwrap().to_json(), run(&s).unwrap().to_json());
    let other = three_stage_scenario(43);
    assert_ne!(run(&s).unwrap().to_json(), run(&other).unwrap().to_json());
}

#[test]
fn supply_theft_misses_are_flagged() {
    let events = vec![
        at(0, SimEvent::SubmitJob { job: rt_job("j") }),
        at(
            200_000,
            SimEvent::StressInject {
                node: "a".into(),
                metric: SUPPLY_METRIC.into(),
                magnitude: 1.0,
                duration: 100_000,
                job: None,
                persists: false,
            },
        ),
    ];
    let r = run(&scenario(vec![node("a")], events, 600_000)).unwrap();
    assert!(!r.misses.is_empty());
    assert_eq!(r.injected_misses(), r.misses.len());
}

#[test]
fn crash_moves_jobs() {
    let events = vec![at(0, SimEvent::SubmitJob { job: rt_job("j") }), at(300_000, SimEvent::NodeCrash { node: "a".into() })];
    let r = run(&scenario(vec![node("a"), node("b")], events, 1_000_000)).unwrap();
    assert!(r.events(|e| matches!(e, TimelineEvent::NodeLost { node } if node == "a")).next().is_some());
    assert!(r.events(|e| matches!(e, TimelineEvent::Migrated { job, to, .. } if job == "j" && to == "b")).next().is_some());
    assert!(r.violations.is_empty(), "{:?}", r.violations);
}

#[test]
fn replica_failure_promotes_backup() {
    let mut spec = rt_job("svc");
    spec.deployment =
        Some(ReplicaPolicy { replicas: 2, leader_criticality: Criticality::Low, backup_criticality: Criticality::Low, tmr: false });
    let events = vec![at(0, SimEvent::SubmitJob { job: spec }), at(200_000, SimEvent::ReplicaFail { job: "svc-r0".into() })];
    let r = run(&scenario(vec![node("a"), node("b")], events, 500_000)).unwrap();
    let routed = r.events(|e| matches!(e, TimelineEvent::Routed { .. })).next().unwrap();
    assert!(matches!(&routed.event, TimelineEvent::Routed { leader, promoted: true, .. } if leader == "svc-r1"));
}

#[test]
fn rejects_bad_scenarios() {
    let mut s = scenario(vec![node("a")], vec![at(10, SimEvent::NodeCrash { node: "a".into() }), at(5, SimEvent::NodeCrash { node: "a".into() })], 100);
    assert_eq!(run(&s).unwrap_err(), ScenarioInvalid::Unsorted);
    s.events = vec![at(500, SimEvent::NodeCrash { node: "a".into() })];
    assert!(matches!(run(&s).unwrap_err(), ScenarioInvalid::BeyondHorizon { .. }));
    s.events = vec![at(5, SimEvent::NodeCrash { node: "z".into() })];
    assert_eq!(run(&s).unwrap_err(), ScenarioInvalid::UnknownNode("z".into()));
}

#[test]
fn scenario_json_round_trip() {
    let s = three_stage_scenario(3);
    let text = serde_json::to_string(&s).unwrap();
    let back: SimScenario = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
}

#[test]
fn phase_scenario_shape() {
    let s = stress_phase_scenario(1);
    let r = run(&s).unwrap();
    assert_eq!(r.targets.len(), 1400);
    let stressed = r.targets[250].latency_us;
    let quiet = r.targets[100].latency_us;
    assert!(stressed > quiet + 50.0);
    assert!(r.traces.iter().all(|t| t.job.is_none()));
}
