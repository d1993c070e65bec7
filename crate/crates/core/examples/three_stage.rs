//! Runs the persistent-stress scenario and prints the cluster timeline.

use mcorch::sim::{run, three_stage_scenario};

fn main() {
    let report = run(&three_stage_scenario(1)).unwrap();
    for e in &report.timeline {
        println!("{:>8} {}", e.at, serde_json::to_string(&e.event).unwrap());
    }
    println!("misses={} violations={}", report.misses.len(), report.violations.len());
}
