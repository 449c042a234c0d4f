//! Progress under a suspended worker.
//!
//! The same workload runs twice: once normally, once with thread 0 parked
//! in the middle of an update for the rest of the run. Each other worker's
//! step total is compared against its own total in the normal run.

use lftrie::OpKind;

use crate::trial::{run_trial, Mix, Structure, TrialSpec};

#[derive(Clone, Debug)]
pub struct ProgressReport {
    pub baseline_steps: Vec<u64>,
    pub suspended_steps: Vec<u64>,
    pub completed: Vec<usize>,
    pub victim_suspended: bool,
    /// Largest suspended/baseline step ratio over the other workers.
    pub worst_ratio: f64,
}

/// `workers` threads besides the victim, `ops` operations each.
pub fn progress_trial(bits: u32, workers: usize, ops: usize, suspend: OpKind, seed: u64) -> ProgressReport {
    let base = TrialSpec {
        structure: Structure::LockFree,
        bits,
        threads: workers + 1,
        ops,
        window: 0,
        mix: Mix::default(),
        seed,
        prefill: 50,
        yield_permille: 0,
        suspend: None,
    };
    let (_, normal) = run_trial(&base);
    let (_, parked) = run_trial(&TrialSpec {
        suspend: Some(suspend),
        ..base
    });
    let baseline_steps = normal.thread_steps[1..].to_vec();
    let suspended_steps = parked.thread_steps[1..].to_vec();
    let worst_ratio = baseline_steps
        .iter()
        .zip(&suspended_steps)
        .map(|(&b, &s)| s as f64 / b.max(1) as f64)
        .fold(0.0, f64::max);
    ProgressReport {
        baseline_steps,
        suspended_steps,
        completed: parked.thread_ops[1..].to_vec(),
        victim_suspended: parked.victim_suspended,
        worst_ratio,
    }
}
