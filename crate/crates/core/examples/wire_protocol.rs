//! Starts a master on an ephemeral port and talks to it over the framed
//! JSON protocol.

use std::collections::BTreeSet;
use std::net::TcpListener;

use mcorch::control::service::{request, serve, Master};
use mcorch::control::{ControlConfig, ControlPlane, SchedulingPolicy};
use mcorch::model::{AdditionalResources, AssuranceLevel, BasicResources, Criticality, JobSpec, Rational, WorkerNode};
use mcorch::protocol::{encode, Message};

fn main() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let master = Master::new(ControlPlane::new(SchedulingPolicy::default(), ControlConfig::default()));
    std::thread::spawn(move || serve(listener, master));

    let node = WorkerNode {
        id: "edge".into(),
        rt_capable: true,
        assurance: AssuranceLevel::new(4, 4),
        platform: "x86-i5".into(),
        speed_factor: Rational::ONE,
        cores: 2,
        basic_capacity: BasicResources::new(Rational::from_int(2), 512, 512),
        additional_inventory: AdditionalResources::default(),
        networks: BTreeSet::new(),
    };
    let frame = encode(&Message::Register(node.clone()));
    println!("register frame: {} bytes, header {:02x?}", frame.len(), &frame[..4]);
    println!("{:?}", request(addr, &Message::Register(node)).unwrap());
    println!("{:?}", request(addr, &Message::Submit(JobSpec::best_effort("web", Criticality::Low))).unwrap());
    println!("{:?}", request(addr, &Message::Submit(JobSpec::best_effort("web", Criticality::Low))).unwrap());
    if let Message::Jobs(jobs) = request(addr, &Message::GetJobs).unwrap() {
        for j in jobs {
            println!("{} -> {:?}", j.name, j.node);
        }
    }
}
