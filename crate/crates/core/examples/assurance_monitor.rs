//! Feeds a load spike to a node's assurance agent and prints the three
//! stages: alarm and kill, then downgrade and migration, then restore.

use std::collections::BTreeMap;

use mcorch::assurance::{AssuranceAgent, MetricSample, MonitorConfig, Threshold};
use mcorch::model::{AssuranceLevel, Criticality};

fn main() {
    let config = MonitorConfig {
        sampling_period: 10_000,
        window: 5,
        thresholds: BTreeMap::from([("loadavg".to_string(), Threshold { max_level: 3.0, max_slope: 1e9 })]),
        kill_grace: 50_000,
        downgrade_timeout: 100_000,
        gamma_penalty: 4,
        watched_metrics: vec!["loadavg".into()],
    };
    let mut agent = AssuranceAgent::new(config, AssuranceLevel::new(6, 5));
    let jobs = vec![("control".to_string(), Criticality::Hi), ("batch".to_string(), Criticality::No)];

    for i in 0..40u64 {
        let t = i * 10_000;
        let load = if (10..25).contains(&i) { 5.0 } else { 1.0 };
        agent.record(MetricSample { metric: "loadavg".into(), timestamp: t, value: load });
        agent.record_job("batch", "loadavg", load - 1.0);
        for a in agent.tick(t, &jobs) {
            println!("t={:>6} A={:>2} {}", t, agent.assurance.effective(), serde_json::to_string(&a).unwrap());
        }
    }
}
