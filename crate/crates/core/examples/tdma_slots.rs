//! Grants repeating TDMA slots on a 10 ms frame and prints the expanded
//! schedule.

use std::collections::BTreeSet;

use mcorch::model::{Network, NetworkKind};
use mcorch::net::NetworkManager;

fn main() {
    let mut nets = NetworkManager::new();
    nets.add_network(Network {
        id: "fieldbus".into(),
        kind: NetworkKind::Tdma { major_frame: 10_000, tick: 100 },
        members: BTreeSet::from(["a".to_string(), "b".to_string()]),
        delay: Default::default(),
        capacity: Vec::new(),
    });
    for (job, length, period) in [("brake", 300, 2_000), ("steer", 200, 5_000), ("telemetry", 1_000, 10_000)] {
        let g = nets.allocate_slot("fieldbus", job, length, period).unwrap();
        println!("{job:<10} offset={:>5} length={:>5} period={:>6}", g.offset, g.length, g.period);
    }
    nets.release_slot("fieldbus", "steer").unwrap();
    let g = nets.allocate_slot("fieldbus", "camera", 500, 5_000).unwrap();
    println!("camera     offset={:>5}", g.offset);

    let table = nets.table("fieldbus").unwrap();
    let mut instances = table.instances();
    instances.sort();
    for (start, end, slot) in instances {
        println!("{start:>6} .. {end:>6}  {}", table.slots[slot].job);
    }
}
