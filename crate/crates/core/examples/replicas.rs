//! Three replicas of a logger: routing with leader failover, then a TMR
//! vote over replica responses.

use std::collections::BTreeSet;

use mcorch::control::{tmr_vote, ControlConfig, ControlPlane, SchedulingPolicy};
use mcorch::model::{AdditionalResources, AssuranceLevel, BasicResources, Criticality, JobSpec, Rational, ReplicaPolicy, WorkerNode};

fn node(id: &str) -> WorkerNode {
    WorkerNode {
        id: id.into(),
        rt_capable: false,
        assurance: AssuranceLevel::new(3, 3),
        platform: "x86-i5".into(),
        speed_factor: Rational::ONE,
        cores: 1,
        basic_capacity: BasicResources::new(Rational::ONE, 100, 100),
        additional_inventory: AdditionalResources::default(),
        networks: BTreeSet::new(),
    }
}

fn main() {
    let mut plane = ControlPlane::new(SchedulingPolicy::default(), ControlConfig::default());
    for id in ["n1", "n2", "n3"] {
        plane.state.register_node(node(id), 0).unwrap();
    }
    let mut spec = JobSpec::best_effort("logger", Criticality::Low);
    spec.deployment =
        Some(ReplicaPolicy { replicas: 3, leader_criticality: Criticality::Low, backup_criticality: Criticality::No, tmr: true });
    println!("replicas: {:?}", plane.submit(spec).unwrap());
    plane.schedule_pending();

    let r = plane.route("logger", b"entry".to_vec(), 0).unwrap();
    println!("leader {} on {} fanout {:?}", r.leader, r.node, r.fanout);

    // the leader stops reporting
    plane.state.job_last_seen.insert("logger-r0".into(), 0);
    let r = plane.route("logger", b"entry".to_vec(), 1_000_000).unwrap();
    println!("after failover: leader {} on {} promoted={}", r.leader, r.node, r.promoted);
    println!("{:?}", plane.deployments());

    let votes = [b"ok:42".to_vec(), b"ok:42".to_vec(), b"ok:41".to_vec()];
    println!("vote: {:?}", tmr_vote(&votes).map(|v| String::from_utf8(v).unwrap()));
    println!("split vote: {:?}", tmr_vote(&[b"a".to_vec(), b"b".to_vec(), b"c".to_vec()]));
}
