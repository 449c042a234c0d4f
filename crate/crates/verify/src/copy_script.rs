//! Scripted interleavings of atomic copy.
//!
//! A script is a set of logical actors, each a list of operations; a copy
//! takes two atomic steps, writes and reads take one. Every interleaving of
//! the actors' steps is executed on a real `CopyCell` from one thread, and
//! the resulting history is checked against `CopyModel`.

use std::sync::atomic::{AtomicUsize, Ordering::SeqCst};

use lftrie::prims::{Collector, CopyCell, PendingCopy};

use crate::checker::{brute_force, check, Operation};
use crate::models::{CopyModel, CopyOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScriptOp {
    /// Owner only; at most one actor may copy.
    Copy,
    Write(usize),
    Read,
}

impl ScriptOp {
    fn steps(self) -> usize {
        match self {
            ScriptOp::Copy => 2,
            _ => 1,
        }
    }
}

/// How the owner copies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CopyImpl {
    /// `CopyCell`'s descriptor protocol.
    Atomic,
    /// Read the source, then store it. Not atomic.
    Naive,
}

/// Every merge of sequences with the given lengths, as actor indices.
pub fn interleavings(lens: &[usize]) -> Vec<Vec<usize>> {
    fn go(left: &mut [usize], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.iter().all(|&l| l == 0) {
            out.push(cur.clone());
            return;
        }
        for a in 0..left.len() {
            if left[a] > 0 {
                left[a] -= 1;
                cur.push(a);
                go(left, cur, out);
                cur.pop();
                left[a] += 1;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut lens.to_vec(), &mut Vec::new(), &mut out);
    out
}

/// Executes one schedule and returns its history. Timestamps: step i
/// happens between 2i and 2i+1.
pub fn run_schedule(
    init: (usize, usize),
    actors: &[Vec<ScriptOp>],
    schedule: &[usize],
    how: CopyImpl,
) -> Vec<Operation<CopyOp, usize>> {
    let collector = Collector::new();
    let guard = collector.pin();
    let src = AtomicUsize::new(init.0);
    let dst = CopyCell::new(init.1);
    let naive_dst = AtomicUsize::new(init.1);
    // Per actor: index of current op, steps taken in it.
    let mut pos = vec![(0usize, 0usize); actors.len()];
    let mut pending: Option<PendingCopy> = None;
    let mut naive_read = 0usize;
    let mut ops: Vec<Operation<CopyOp, usize>> = Vec::new();
    let mut open: Vec<Option<usize>> = vec![None; actors.len()];
    for (i, &a) in schedule.iter().enumerate() {
        let (k, s) = pos[a];
        let sop = actors[a][k];
        let t = 2 * i as u64;
        if s == 0 {
            let op = match sop {
                ScriptOp::Copy => CopyOp::Copy,
                ScriptOp::Write(v) => CopyOp::WriteSrc(v),
                ScriptOp::Read => CopyOp::ReadDst,
            };
            open[a] = Some(ops.len());
            ops.push(Operation {
                id: ops.len() as u64,
                thread: a,
                op,
                ret: None,
                invoke: t,
                respond: None,
            });
        }
        let ret = match (sop, s, how) {
            (ScriptOp::Copy, 0, CopyImpl::Atomic) => {
                pending = Some(unsafe { dst.begin_copy(&src, !0) });
                None
            }
            (ScriptOp::Copy, _, CopyImpl::Atomic) => {
                let (_, v) = unsafe { dst.finish_copy(pending.take().unwrap(), &guard) };
                Some(v)
            }
            (ScriptOp::Copy, 0, CopyImpl::Naive) => {
                naive_read = src.load(SeqCst);
                None
            }
            (ScriptOp::Copy, _, CopyImpl::Naive) => {
                naive_dst.store(naive_read, SeqCst);
                Some(naive_read)
            }
            (ScriptOp::Write(v), _, _) => {
                src.store(v, SeqCst);
                Some(0)
            }
            (ScriptOp::Read, _, CopyImpl::Atomic) => Some(dst.read(&guard)),
            (ScriptOp::Read, _, CopyImpl::Naive) => Some(naive_dst.load(SeqCst)),
        };
        if s + 1 == sop.steps() {
            let o = &mut ops[open[a].take().unwrap()];
            o.ret = ret;
            o.respond = Some(t + 1);
            pos[a] = (k + 1, 0);
        } else {
            pos[a] = (k, s + 1);
        }
    }
    ops
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScriptSummary {
    pub schedules: usize,
    pub linearizable: usize,
    /// Schedules where the search and brute force disagree.
    pub disagreements: usize,
    pub max_events: usize,
}

/// Runs and checks every interleaving of `actors`.
pub fn exhaustive(init: (usize, usize), actors: &[Vec<ScriptOp>], how: CopyImpl) -> ScriptSummary {
    let lens: Vec<usize> = actors.iter().map(|a| a.iter().map(|o| o.steps()).sum()).collect();
    let mut sum = ScriptSummary::default();
    for sched in interleavings(&lens) {
        let ops = run_schedule(init, actors, &sched, how);
        let fast = check(&CopyModel, &init, &ops, None).unwrap().is_linearizable();
        let slow = brute_force(&CopyModel, &init, &ops, None).unwrap();
        sum.schedules += 1;
        sum.linearizable += fast as usize;
        sum.disagreements += (fast != slow) as usize;
        sum.max_events = sum.max_events.max(2 * ops.len());
    }
    sum
}

/// Key as stored in the copied word; the low bit must stay clear.
pub fn enc(key: usize) -> usize {
    key << 1
}

/// Key of the +infinity sentinel in the encoded scenario.
pub const INF: usize = 1000;

/// One outcome of the two-delete scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoDeleteOutcome {
    pub threshold_29: usize,
    pub threshold_25: usize,
    pub linearizable: bool,
}

impl TwoDeleteOutcome {
    /// A delete notification is accepted when its threshold is below the key.
    pub fn accepts(&self) -> (bool, bool) {
        (self.threshold_25 < 25, self.threshold_29 < 29)
    }
}

/// A predecessor's position starts at the +infinity sentinel and copies
/// the sentinel's successor (20). Meanwhile deletes of 25 then 29 insert
/// themselves after the sentinel, and then 29 and 25, in that order, read
/// the position as their notification thresholds. Every placement of the
/// copy's two steps is tried.
pub fn two_delete_scenario(how: CopyImpl) -> Vec<TwoDeleteOutcome> {
    let actors = vec![
        vec![ScriptOp::Copy],
        vec![
            ScriptOp::Write(enc(25)),
            ScriptOp::Write(enc(29)),
            ScriptOp::Read,
            ScriptOp::Read,
        ],
    ];
    let init = (enc(20), enc(INF));
    interleavings(&[2, 4])
        .into_iter()
        .map(|sched| {
            let ops = run_schedule(init, &actors, &sched, how);
            let reads: Vec<usize> = ops
                .iter()
                .filter(|o| o.op == CopyOp::ReadDst)
                .map(|o| o.ret.unwrap() >> 1)
                .collect();
            TwoDeleteOutcome {
                threshold_29: reads[0],
                threshold_25: reads[1],
                linearizable: check(&CopyModel, &init, &ops, None).unwrap().is_linearizable(),
            }
        })
        .collect()
}
