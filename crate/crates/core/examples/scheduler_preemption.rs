//! A HI job arrives at a full node and evicts the cheapest set of
//! lower-criticality jobs.

use std::collections::BTreeSet;

use mcorch::control::{ControlConfig, ControlPlane, SchedulingPolicy};
use mcorch::model::{AdditionalResources, AssuranceLevel, BasicResources, Criticality, JobSpec, Rational, WorkerNode};

fn cpu_job(name: &str, crit: Criticality, tenths: i128) -> JobSpec {
    let mut j = JobSpec::best_effort(name, crit);
    j.basic_request.cpu_utilization = Rational::new(tenths, 10);
    j
}

fn main() {
    let mut plane = ControlPlane::new(SchedulingPolicy::default(), ControlConfig::default());
    plane
        .state
        .register_node(
            WorkerNode {
                id: "edge".into(),
                rt_capable: true,
                assurance: AssuranceLevel::new(5, 4),
                platform: "x86-i5".into(),
                speed_factor: Rational::ONE,
                cores: 1,
                basic_capacity: BasicResources::new(Rational::ONE, 1024, 1024),
                additional_inventory: AdditionalResources::default(),
                networks: BTreeSet::new(),
            },
            0,
        )
        .unwrap();

    for job in [cpu_job("video", Criticality::No, 3), cpu_job("hmi", Criticality::Low, 3), cpu_job("backup", Criticality::No, 3)] {
        plane.submit(job).unwrap();
    }
    plane.schedule_pending();
    // 0.9 in use; brake needs 0.4, so one 0.3 job has to go
    plane.submit(cpu_job("brake", Criticality::Hi, 4)).unwrap();
    println!("{}", serde_json::to_string(&plane.schedule("brake")).unwrap());
    // the victim is requeued and retried
    for d in plane.schedule_pending() {
        println!("{}", serde_json::to_string(&d).unwrap());
    }
    for j in plane.jobs() {
        println!("{:<7} {:<4} {:?} {:?}", j.name, j.criticality.to_string(), j.status, j.node);
    }
}
