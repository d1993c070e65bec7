#![allow(dead_code)]

use std::collections::BTreeSet;

use mcorch::admission::ResolvedTask;
use mcorch::model::{AdditionalResources, AssuranceLevel, BasicResources, Criticality, JobSpec, Rational, WorkerNode};

pub fn node(id: &str, alpha: u32, beta: u32, cores: u32) -> WorkerNode {
    WorkerNode {
        id: id.into(),
        rt_capable: true,
        assurance: AssuranceLevel::new(alpha, beta),
        platform: "x86-i5".into(),
        speed_factor: Rational::ONE,
        cores,
        basic_capacity: BasicResources::new(Rational::from_int(cores as i128), 1000, 1000),
        additional_inventory: AdditionalResources::default(),
        networks: BTreeSet::new(),
    }
}

pub fn cpu_job(name: &str, crit: Criticality, n: i128, d: i128) -> JobSpec {
    let mut j = JobSpec::best_effort(name, crit);
    j.basic_request.cpu_utilization = Rational::new(n, d);
    j
}

/// Exhaustive integer check of the server test: task `i` is fine when some
/// `t` in `1..=T_i` has demand at most the linear supply. Cross-multiplied
/// so no rationals are involved.
pub fn inner_oracle(tasks: &[ResolvedTask], budget: u64, period: u64) -> bool {
    if budget == 0 || budget > period {
        return tasks.is_empty();
    }
    let (q, p) = (budget as u128, period as u128);
    (0..tasks.len()).all(|i| {
        (1..=tasks[i].period).any(|t| {
            let mut demand = tasks[i].wcet as u128;
            for hp in &tasks[..i] {
                demand += (t as u128).div_ceil(hp.period as u128) * hp.wcet as u128;
            }
            let blackout = 2 * (p - q);
            let span = (t as u128).saturating_sub(blackout);
            demand * p <= q * span
        })
    })
}

/// Least-bandwidth server over all candidate periods and all budgets,
/// ties to the longer period.
pub fn server_oracle(tasks: &[ResolvedTask], divisors: u64) -> Option<(u64, u64)> {
    let t_min = tasks.iter().map(|t| t.period).min()?;
    let mut best: Option<(u64, u64)> = None;
    for k in 1..=divisors {
        if t_min % k != 0 {
            continue;
        }
        let period = t_min / k;
        let Some(budget) = (1..=period).find(|&q| inner_oracle(tasks, q, period)) else { continue };
        // q/p < bq/bp
        if best.is_none_or(|(bq, bp)| (budget as u128) * (bp as u128) < (bq as u128) * (period as u128)) {
            best = Some((budget, period));
        }
    }
    best
}

/// Sorted `[start, end)` instances of `(offset, length, period)` slots over
/// one frame.
pub fn expand(slots: &[(u64, u64, u64)], frame: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for &(offset, length, period) in slots {
        let mut s = offset;
        while s < frame {
            out.push((s, s + length));
            s += period;
        }
    }
    out.sort_unstable();
    out
}

pub fn overlaps(instances: &[(u64, u64)], frame: u64) -> bool {
    instances.windows(2).any(|w| w[1].0 < w[0].1) || instances.iter().any(|&(_, e)| e > frame)
}
