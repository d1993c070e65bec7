//! Derives a deferrable server for a small task set, admits it onto a
//! two-core node and replays it under the worst-case supply pattern.

use mcorch::admission::exec::check_schedulable;
use mcorch::admission::{derive_server, RtAgent, ResolvedTask};

fn main() {
    let tasks = vec![
        ResolvedTask::new("sense", 500, 5_000),
        ResolvedTask::new("control", 1_200, 10_000),
        ResolvedTask::new("log", 2_000, 50_000),
    ];
    let server = derive_server(&tasks).expect("task set fits");
    println!("server Q={} T={} bandwidth={:.4}", server.budget, server.period, server.utilization().to_f64());
    println!("worst-case replay misses: {}", check_schedulable(&tasks, server).len());

    let mut agent = RtAgent::new(2);
    for job in ["a", "b", "c"] {
        let r = agent.admit_tasks(job, &tasks, false).unwrap();
        let util: Vec<String> = r.per_core_utilization.iter().map(|u| format!("{:.3}", u.to_f64())).collect();
        println!("admit {job}: schedulable={} at {:?} cores=[{}]", r.schedulable, r.allocated, util.join(", "));
    }
    agent.release("a").unwrap();
    println!("after releasing a: {:?}", agent.per_core_utilization().iter().map(|u| u.to_f64()).collect::<Vec<_>>());
}
