mod common;

use std::fs;
use std::path::PathBuf;

use mcorch::admission::exec::check_schedulable;
use mcorch::admission::{derive_server, resolve_tasks, RtAgent, ResolvedTask, MAX_PERIOD_DIVISOR};
use mcorch::assurance::write_trace_csv;
use mcorch::metrics::{slack, write_targets_csv};
use mcorch::model::{JobSpec, Rational};
use mcorch::sim::{self, SimScenario};

use common::{node, server_oracle};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Closed form for one task `(C, T)`: the best point is `t = T`, so the
/// least budget for period `P` is the smallest `Q` with
/// `C P <= Q (T - 2P + 2Q)`.
fn single_task_server(c: u64, t: u64) -> (u64, u64) {
    let mut best: Option<(u64, u64)> = None;
    for k in 1..=MAX_PERIOD_DIVISOR {
        if !t.is_multiple_of(k) {
            continue;
        }
        let p = t / k;
        let q = (1..=p).find(|&q| (c * p) as i128 <= q as i128 * (t as i128 - 2 * p as i128 + 2 * q as i128));
        if let Some(q) = q {
            if best.is_none_or(|(bq, bp)| q * bp < bq * p) {
                best = Some((q, p));
            }
        }
    }
    best.unwrap()
}

#[test]
fn brake_control_server() {
    let spec: JobSpec = serde_json::from_str(&fs::read_to_string(fixture("control.jobspec")).unwrap()).unwrap();
    let tasks = resolve_tasks(&spec, &node("edge-1", 6, 5, 2)).unwrap();
    let s = derive_server(&tasks).unwrap();
    assert_eq!((s.budget, s.period), single_task_server(1_900, 10_000));
    assert_eq!((s.budget, s.period), (225, 1_000));
}

#[test]
fn single_task_servers_match_closed_form() {
    for (c, t) in [(1, 10), (50, 100), (99, 100), (300, 5_000), (4_999, 5_000), (2_500, 20_000)] {
        let s = derive_server(&[ResolvedTask::new("t", c, t)]).unwrap();
        assert_eq!((s.budget, s.period), single_task_server(c, t), "C={c} T={t}");
    }
}

#[test]
fn two_task_server_matches_exhaustive_search() {
    let tasks = vec![ResolvedTask::new("a", 50, 500), ResolvedTask::new("b", 120, 1_000)];
    let s = derive_server(&tasks).unwrap();
    assert_eq!(Some((s.budget, s.period)), server_oracle(&tasks, MAX_PERIOD_DIVISOR));
    assert!(check_schedulable(&tasks, s).is_empty());
}

#[test]
fn worst_fit_fills_cores_evenly() {
    let tasks = vec![ResolvedTask::new("t", 1_900, 10_000)];
    let mut agent = RtAgent::new(2);
    let cores: Vec<usize> =
        (0..4).map(|i| agent.admit_tasks(&format!("j{i}"), &tasks, false).unwrap().allocated.unwrap().core).collect();
    assert_eq!(cores, vec![0, 1, 0, 1]);
    assert_eq!(agent.per_core_utilization(), vec![Rational::new(450, 1000); 2]);
    // four servers of 0.225 fit per core, a fifth would exceed one
    for i in 4..8 {
        assert!(agent.admit_tasks(&format!("j{i}"), &tasks, false).unwrap().schedulable);
    }
    assert_eq!(agent.per_core_utilization(), vec![Rational::new(900, 1000); 2]);
    assert!(!agent.admit_tasks("j8", &tasks, false).unwrap().schedulable);
}

#[test]
fn slack_edges() {
    assert_eq!(slack(10, 2, 3), 5);
    assert_eq!(slack(0, 0, 0), 0);
    assert_eq!(slack(i64::MIN, i64::MAX, i64::MAX), i64::MIN as i128 - 2 * i64::MAX as i128);
}

#[test]
fn bundled_traces_regenerate() {
    let s: SimScenario = serde_json::from_str(&fs::read_to_string(fixture("stress_phases.scenario")).unwrap()).unwrap();
    assert_eq!(s, sim::stress_phase_scenario(2024));
    let r = sim::run(&s).unwrap();
    let mut traces = Vec::new();
    write_trace_csv(&mut traces, &r.traces).unwrap();
    let mut targets = Vec::new();
    write_targets_csv(&mut targets, &r.targets).unwrap();
    assert!(traces == fs::read(fixture("traces.csv")).unwrap(), "traces.csv is stale");
    assert!(targets == fs::read(fixture("targets.csv")).unwrap(), "targets.csv is stale");
}

#[test]
fn bundled_three_stage_matches_builder() {
    let s: SimScenario = serde_json::from_str(&fs::read_to_string(fixture("three_stage.scenario")).unwrap()).unwrap();
    assert_eq!(s, sim::three_stage_scenario(1));
}
