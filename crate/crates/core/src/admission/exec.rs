//! Exact (1 µs resolution) execution of a deferrable server hosting
//! fixed-priority periodic tasks.
//!
//! The executor is event driven: it jumps between releases, budget
//! replenishments, supply changes and completions, which gives the same
//! trace as stepping every microsecond. Every job consumes exactly its WCET.

use serde::{Deserialize, Serialize};

use super::{ResolvedTask, ServerParams};
use crate::model::Micros;

/// How the top level hands the CPU to the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Supply {
    /// The server runs whenever it has work and budget. Budget is refilled
    /// to `Q` at every multiple of `T_s`; tasks are released at time 0.
    Dedicated,
    /// Adversarial pattern that realizes the longest blackout of the
    /// guaranteed supply: the server runs in `[0, Q)`, then only in the last
    /// `Q` of each later period. Tasks are released at time `Q`.
    WorstCase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineMiss {
    pub task: String,
    /// Absolute deadline (equal to the next release) in executor time.
    pub deadline: Micros,
    /// Work left when the deadline passed.
    pub remaining: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecReport {
    pub misses: Vec<DeadlineMiss>,
    pub completed: u64,
    /// Time the server actually executed.
    pub busy: Micros,
}

/// Executor configuration.
#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub supply: Supply,
    /// Simulated span measured from the first task release.
    pub span: Micros,
    /// Half-open intervals (relative to the first task release) during
    /// which the top level withholds the CPU.
    pub stolen: Vec<(Micros, Micros)>,
}

/// `lcm` of all task periods and the server period.
pub fn hyperperiod(tasks: &[ResolvedTask], server: ServerParams) -> Micros {
    tasks.iter().fold(server.period.max(1), |acc, t| num_integer::lcm(acc, t.period))
}

struct Window {
    q: Micros,
    ts: Micros,
}

impl Window {
    /// Worst-case pattern: returns (available now, next change).
    fn at(&self, t: Micros) -> (bool, Micros) {
        let k = t / self.ts;
        let (start, end) = if k == 0 { (0, self.q) } else { (k * self.ts + self.ts - self.q, (k + 1) * self.ts) };
        if t < start {
            (false, start)
        } else if t < end {
            (true, end)
        } else {
            let next = k + 1;
            (false, next * self.ts + self.ts - self.q)
        }
    }
}

/// Runs `tasks` (priority order) inside `server` and records every missed
/// implicit deadline.
pub fn execute(tasks: &[ResolvedTask], server: ServerParams, cfg: &ExecConfig) -> ExecReport {
    let mut report = ExecReport::default();
    if tasks.is_empty() || server.period == 0 {
        return report;
    }
    let q = server.budget;
    let ts = server.period;
    let offset = match cfg.supply {
        Supply::Dedicated => 0,
        Supply::WorstCase => q,
    };
    let window = Window { q, ts };
    let end = offset + cfg.span;

    let n = tasks.len();
    let mut next_release = vec![offset; n];
    let mut remaining = vec![0 as Micros; n];
    let mut budget: Micros = 0;
    let mut next_refill: Micros = 0;
    let mut t: Micros = 0;

    loop {
        if matches!(cfg.supply, Supply::Dedicated) && t == next_refill {
            budget = q;
            next_refill += ts;
        }
        for i in 0..n {
            if next_release[i] == t {
                if remaining[i] > 0 {
                    report.misses.push(DeadlineMiss { task: tasks[i].name.clone(), deadline: t, remaining: remaining[i] });
                }
                remaining[i] = tasks[i].wcet;
                next_release[i] += tasks[i].period;
            }
        }
        if t >= end {
            break;
        }

        let (in_window, window_change) = match cfg.supply {
            Supply::Dedicated => (budget > 0, Micros::MAX),
            Supply::WorstCase => window.at(t),
        };
        let rel = t.saturating_sub(offset);
        let mut steal_change = Micros::MAX;
        let mut stolen = false;
        if t >= offset {
            for &(a, b) in &cfg.stolen {
                if rel >= a && rel < b {
                    stolen = true;
                    steal_change = steal_change.min(offset + b);
                } else if rel < a {
                    steal_change = steal_change.min(offset + a);
                }
            }
        }

        let running = if in_window && !stolen { remaining.iter().position(|&r| r > 0) } else { None };

        let mut next = end.min(window_change).min(steal_change);
        next = next.min(*next_release.iter().min().unwrap());
        if matches!(cfg.supply, Supply::Dedicated) {
            next = next.min(next_refill);
        }
        if let Some(i) = running {
            next = next.min(t + remaining[i]);
            if matches!(cfg.supply, Supply::Dedicated) {
                next = next.min(t + budget);
            }
        }
        debug_assert!(next > t);
        let dt = next - t;
        if let Some(i) = running {
            remaining[i] -= dt;
            report.busy += dt;
            if matches!(cfg.supply, Supply::Dedicated) {
                budget -= dt;
            }
            if remaining[i] == 0 {
                report.completed += 1;
            }
        }
        t = next;
    }
    report
}

/// Runs both supply patterns over two hyperperiods and returns all misses.
pub fn check_schedulable(tasks: &[ResolvedTask], server: ServerParams) -> Vec<DeadlineMiss> {
    let span = 2 * hyperperiod(tasks, server);
    let mut misses = Vec::new();
    for supply in [Supply::Dedicated, Supply::WorstCase] {
        misses.extend(execute(tasks, server, &ExecConfig { supply, span, stolen: Vec::new() }).misses);
    }
    misses
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(name: &str, wcet: u64, period: u64) -> ResolvedTask {
        ResolvedTask::new(name, wcet, period)
    }

    /// Literal 1 µs stepping, used to cross-check the event-driven executor.
    fn tick_reference(tasks: &[ResolvedTask], s: ServerParams, supply: Supply, span: u64) -> usize {
        let offset = if supply == Supply::WorstCase { s.budget } else { 0 };
        let mut rem = vec![0u64; tasks.len()];
        let mut budget = 0;
        let mut misses = 0;
        for t in 0..=offset + span {
            if supply == Supply::Dedicated && t % s.period == 0 {
                budget = s.budget;
            }
            for (i, task) in tasks.iter().enumerate() {
                if t >= offset && (t - offset) % task.period == 0 {
                    if rem[i] > 0 {
                        misses += 1;
                    }
                    rem[i] = task.wcet;
                }
            }
            if t == offset + span {
                break;
            }
            let avail = match supply {
                Supply::Dedicated => budget > 0,
                Supply::WorstCase => {
                    let k = t / s.period;
                    if k == 0 { t < s.budget } else { t % s.period >= s.period - s.budget }
                }
            };
            if avail {
                if let Some(i) = rem.iter().position(|&r| r > 0) {
                    rem[i] -= 1;
                    if supply == Supply::Dedicated {
                        budget -= 1;
                    }
                }
            }
        }
        misses
    }

    #[test]
    fn matches_tick_reference() {
        let cases = [
            (vec![rt("a", 30, 100), rt("b", 50, 250)], ServerParams::new(40, 50)),
            (vec![rt("a", 10, 100)], ServerParams::new(9, 100)),
            (vec![rt("a", 20, 60), rt("b", 35, 90), rt("c", 5, 45)], ServerParams::new(30, 40)),
            (vec![rt("a", 99, 100)], ServerParams::new(50, 50)),
        ];
        for (tasks, s) in cases {
            for supply in [Supply::Dedicated, Supply::WorstCase] {
                let span = 2 * hyperperiod(&tasks, s);
                let fast = execute(&tasks, s, &ExecConfig { supply, span, stolen: vec![] }).misses.len();
                assert_eq!(fast, tick_reference(&tasks, s, supply, span), "{tasks:?} {s:?} {supply:?}");
            }
        }
    }

    #[test]
    fn canonical_task_in_dedicated_server() {
        let tasks = [rt("loop", 1900, 10_000)];
        let r = execute(
            &tasks,
            ServerParams::new(1900, 10_000),
            &ExecConfig { supply: Supply::Dedicated, span: 100_000, stolen: vec![] },
        );
        assert!(r.misses.is_empty());
        assert_eq!(r.completed, 10);
        assert_eq!(r.busy, 19_000);
    }

    #[test]
    fn short_budget_misses() {
        let misses = check_schedulable(&[rt("t", 1000, 1000)], ServerParams::new(999, 1000));
        assert!(!misses.is_empty());
    }

    #[test]
    fn stolen_supply_causes_miss() {
        let tasks = [rt("t", 500, 1000)];
        let s = ServerParams::new(1000, 1000);
        let cfg = ExecConfig { supply: Supply::Dedicated, span: 10_000, stolen: vec![(2000, 2800)] };
        let r = execute(&tasks, s, &cfg);
        assert_eq!(r.misses.len(), 1);
        assert_eq!(r.misses[0].deadline, 3000);
    }
}
