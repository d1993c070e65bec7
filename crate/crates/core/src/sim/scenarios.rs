//! Built-in scenarios: the three-stage hazard response and the alternating
//! cooldown/stress benchmark behind the metric-selection fixtures.

use std::collections::{BTreeMap, BTreeSet};

use super::{ChannelSpec, ProbeSpec, SimEvent, SimScenario, TimedEvent};
use crate::assurance::{MonitorConfig, Threshold};
use crate::model::{
    AdditionalResources, AssuranceLevel, BasicResources, Criticality, JobSpec, Micros, Rational, RtTask, WorkerNode,
};

pub const PHASES: usize = 9;
const COOLDOWN: Micros = 2_000_000;
const STRESS: Micros = 1_000_000;
const SAMPLING: Micros = 10_000;

/// Channels raised during stress phases: step, latency added per unit of
/// step, and the start of the channel's burst within the phase. Each burst
/// lasts `BURST`, so the channels overlap without being copies.
const STRESS_PROFILE: [(&str, f64, f64, Micros); 5] = [
    ("loadavg", 4.0, 8.0, 0),
    ("intr/s", 3000.0, 0.01, 100_000),
    ("RES/s", 900.0, 0.03, 200_000),
    ("TIMER/s", 500.0, 0.04, 300_000),
    ("sys%", 20.0, 1.0, 400_000),
];
const BURST: Micros = 600_000;

pub const STRESSED_CHANNELS: [&str; 5] = ["loadavg", "intr/s", "RES/s", "TIMER/s", "sys%"];

fn channel(name: &str, mean: f64, sd: f64) -> ChannelSpec {
    ChannelSpec { name: name.into(), mean, sd, mirror: None }
}

/// Nine phases, cooldown first, alternating with stress phases half as
/// long. Stress intensity varies a little between stress phases.
pub fn stress_phase_scenario(seed: u64) -> SimScenario {
    let node = WorkerNode {
        id: "bench".into(),
        rt_capable: true,
        assurance: AssuranceLevel::new(6, 6),
        platform: "x86-i5".into(),
        speed_factor: Rational::ONE,
        cores: 4,
        basic_capacity: BasicResources::new(Rational::from_int(4), 64_000, 16_000),
        additional_inventory: AdditionalResources::default(),
        networks: BTreeSet::new(),
    };
    let channels = vec![
        channel("loadavg", 0.6, 0.05),
        channel("intr/s", 1200.0, 40.0),
        channel("RES/s", 300.0, 20.0),
        channel("TIMER/s", 1000.0, 30.0),
        channel("sys%", 4.0, 0.5),
        channel("pgfault/s", 50.0, 15.0),
        channel("rxkB/s", 200.0, 60.0),
        channel("await_ms", 3.0, 1.0),
        channel("memfree_MB", 3000.0, 20.0),
        ChannelSpec { name: "loadavg_dup".into(), mean: 0.0, sd: 0.0, mirror: Some(("loadavg".into(), 2.0)) },
    ];
    let probe_job = JobSpec::realtime("probe", Criticality::Low, vec![RtTask::baseline("activate", 1000, 200)]);
    let mut events = vec![TimedEvent { at: 0, event: SimEvent::SubmitJob { job: probe_job } }];
    let intensity = [1.0, 1.2, 0.9, 1.1];
    let mut t = 0;
    for phase in 0..PHASES {
        if phase % 2 == 1 {
            let k = intensity[phase / 2];
            for (metric, step, _, offset) in STRESS_PROFILE {
                events.push(TimedEvent {
                    at: t + offset,
                    event: SimEvent::StressInject {
                        node: "bench".into(),
                        metric: metric.into(),
                        magnitude: step * k,
                        duration: BURST,
                        job: None,
                        persists: true,
                    },
                });
            }
            t += STRESS;
        } else {
            t += COOLDOWN;
        }
    }
    let gains: BTreeMap<String, f64> = STRESS_PROFILE.iter().map(|(m, _, g, _)| (m.to_string(), *g)).collect();
    SimScenario {
        seed,
        horizon: t - SAMPLING,
        nodes: vec![node],
        networks: Vec::new(),
        events,
        channels,
        probe: Some(ProbeSpec { node: "bench".into(), period: 1000, wcet: 200, base_latency: 40.0, noise_sd: 4.0, gains }),
        policy: None,
        monitor: None,
        control: None,
        sampling_period: Some(SAMPLING),
        reconcile_interval: 50_000,
    }
}

fn node(id: &str, alpha: u32, beta: u32) -> WorkerNode {
    WorkerNode {
        id: id.into(),
        rt_capable: true,
        assurance: AssuranceLevel::new(alpha, beta),
        platform: "x86-i5".into(),
        speed_factor: Rational::ONE,
        cores: 2,
        basic_capacity: BasicResources::new(Rational::from_int(2), 8_000, 4_000),
        additional_inventory: AdditionalResources::default(),
        networks: BTreeSet::new(),
    }
}

/// A HI control job shares node `A` with a NO batch job. Persistent load
/// attributed to the batch job starts at 0.5 s and outlives it, so the
/// monitor kills the batch job, then downgrades `A` and asks for the HI job
/// to move to `B`.
pub fn three_stage_scenario(seed: u64) -> SimScenario {
    let control = JobSpec::realtime(
        "control",
        Criticality::Hi,
        vec![RtTask::per_platform("loop", 10_000, &[("x86-i5", 2_000)])],
    );
    let mut batch = JobSpec::best_effort("batch", Criticality::No);
    batch.basic_request.cpu_utilization = Rational::new(3, 10);
    let monitor = MonitorConfig {
        sampling_period: SAMPLING,
        window: 10,
        thresholds: [("loadavg".to_string(), Threshold { max_level: 3.0, max_slope: 1000.0 })].into(),
        kill_grace: 100_000,
        downgrade_timeout: 300_000,
        gamma_penalty: 6,
        watched_metrics: vec!["loadavg".into()],
    };
    SimScenario {
        seed,
        horizon: 2_000_000,
        nodes: vec![node("A", 6, 5), node("B", 4, 4)],
        networks: Vec::new(),
        events: vec![
            TimedEvent { at: 0, event: SimEvent::SubmitJob { job: control } },
            TimedEvent { at: 50_000, event: SimEvent::SubmitJob { job: batch } },
            TimedEvent {
                at: 500_000,
                event: SimEvent::StressInject {
                    node: "A".into(),
                    metric: "loadavg".into(),
                    magnitude: 5.0,
                    duration: 1_500_000,
                    job: Some("batch".into()),
                    persists: true,
                },
            },
        ],
        channels: vec![channel("loadavg", 0.5, 0.05)],
        probe: None,
        policy: None,
        monitor: Some(monitor),
        control: None,
        sampling_period: None,
        reconcile_interval: 50_000,
    }
}
