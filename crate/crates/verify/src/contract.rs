//! The relaxed predecessor contract, checked from a recorded trace.
//!
//! An update's linearization point lies between its invocation and its
//! `LatestCas` event. Membership questions are answered conservatively
//! from those windows: "possibly present" and "certainly present
//! throughout" are computed per key.

use std::collections::{BTreeSet, HashMap};
use std::thread;

use lftrie::{OpKind, Relaxed, RelaxedTrie, Site, TraceEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::predecessor_in;

#[derive(Clone, Copy, Debug)]
struct OpInfo {
    kind: OpKind,
    key: u64,
    invoke: u64,
    respond: Option<u64>,
    result: Option<i64>,
    cas: Option<u64>,
}

/// An S-modifying update with its linearization window.
#[derive(Clone, Copy, Debug)]
struct Update {
    insert: bool,
    invoke: u64,
    cas: u64,
    respond: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractViolation {
    pub op: u64,
    pub y: u64,
    /// -2 for bottom.
    pub result: i64,
    /// Largest key below `y` present throughout the call, or -1.
    pub k: i64,
    pub reason: String,
}

struct Timeline {
    init: BTreeSet<u64>,
    by_key: HashMap<u64, Vec<Update>>,
}

impl Timeline {
    fn updates(&self, z: u64) -> &[Update] {
        self.by_key.get(&z).map_or(&[], |v| v.as_slice())
    }

    /// Inserts that may establish presence, with the initial set as an
    /// insert at time 0.
    fn inserts(&self, z: u64) -> Vec<Update> {
        let mut v: Vec<Update> = self.updates(z).iter().filter(|u| u.insert).copied().collect();
        if self.init.contains(&z) {
            v.push(Update {
                insert: true,
                invoke: 0,
                cas: 0,
                respond: Some(0),
            });
        }
        v
    }

    fn deletes(&self, z: u64) -> impl Iterator<Item = &Update> {
        self.updates(z).iter().filter(|u| !u.insert)
    }

    /// Inserted by a completed operation before `a`, and no delete that may
    /// follow that insert can linearize by `b`.
    fn present_throughout(&self, z: u64, a: u64, b: u64) -> bool {
        self.inserts(z)
            .iter()
            .any(|i| i.respond.is_some_and(|r| r < a) && !self.deletes(z).any(|d| d.invoke <= b && d.cas >= i.invoke))
    }

    /// Some placement of linearization points puts `z` in S during [a, b].
    fn possibly_present(&self, z: u64, a: u64, b: u64) -> bool {
        self.inserts(z)
            .iter()
            .any(|i| i.invoke <= b && !self.deletes(z).any(|d| d.invoke > i.cas && d.cas < a))
    }

    fn concurrent_update_in(&self, lo: i64, hi: u64, a: u64, b: u64) -> bool {
        self.by_key.iter().any(|(&z, us)| {
            (z as i64) > lo && z < hi && us.iter().any(|u| u.invoke <= b && u.respond.is_none_or(|r| r >= a))
        })
    }
}

/// Checks every completed relaxed predecessor in `events` against the
/// contract, given the set at the start of the trace.
pub fn check_contract(events: &[TraceEvent], init: &BTreeSet<u64>) -> Vec<ContractViolation> {
    let mut ops: HashMap<u64, OpInfo> = HashMap::new();
    for e in events {
        match e.site {
            Site::Invoke(kind) => {
                ops.insert(
                    e.op,
                    OpInfo {
                        kind,
                        key: e.key,
                        invoke: e.ts,
                        respond: None,
                        result: None,
                        cas: None,
                    },
                );
            }
            Site::Respond(_) => {
                if let Some(o) = ops.get_mut(&e.op) {
                    o.respond = Some(e.ts);
                    o.result = Some(e.value);
                }
            }
            Site::LatestCas => {
                if let Some(o) = ops.get_mut(&e.op) {
                    o.cas = Some(e.ts);
                }
            }
            _ => {}
        }
    }
    let mut tl = Timeline {
        init: init.clone(),
        by_key: HashMap::new(),
    };
    for o in ops.values() {
        if let Some(cas) = o.cas {
            tl.by_key.entry(o.key).or_default().push(Update {
                insert: o.kind == OpKind::Insert,
                invoke: o.invoke,
                cas,
                respond: o.respond,
            });
        }
    }
    let mut out = Vec::new();
    let mut ids: Vec<u64> = ops.keys().copied().collect();
    ids.sort_unstable();
    for id in ids {
        let o = ops[&id];
        let (OpKind::RelaxedPredecessor, Some(b), Some(r)) = (o.kind, o.respond, o.result) else {
            continue;
        };
        let (a, y) = (o.invoke, o.key);
        let k = (0..y)
            .rev()
            .find(|&z| tl.present_throughout(z, a, b))
            .map_or(-1, |z| z as i64);
        let fail = |reason: String| ContractViolation {
            op: id,
            y,
            result: r,
            k,
            reason,
        };
        if r == -2 {
            if !tl.concurrent_update_in(k, y, a, b) {
                out.push(fail("bottom without a concurrent update in (k, y)".into()));
            }
        } else if r < -1 || r >= y as i64 {
            out.push(fail("result outside [-1, y)".into()));
        } else if r < k {
            out.push(fail("result below a key present throughout".into()));
        } else if r > k && !tl.possibly_present(r as u64, a, b) {
            out.push(fail("result was never in the set during the call".into()));
        }
    }
    out
}

/// Updates from `threads` threads, then, with updates stopped, exact
/// relaxed predecessors for `queries` random arguments. Returns a
/// description of the first mismatch.
pub fn two_phase_trial(bits: u32, threads: usize, updates: usize, queries: usize, seed: u64) -> Result<(), String> {
    let t = RelaxedTrie::new(bits).map_err(|e| e.to_string())?;
    let u = 1u64 << bits;
    thread::scope(|s| {
        for i in 0..threads {
            let t = &t;
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64);
                for _ in 0..updates {
                    let x = rng.gen_range(0..u);
                    if rng.gen_bool(0.6) {
                        t.insert(x).unwrap();
                    } else {
                        t.delete(x).unwrap();
                    }
                }
            });
        }
    });
    let set: BTreeSet<u64> = (0..u).filter(|&x| t.search(x).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(!seed);
    for _ in 0..queries {
        let y = rng.gen_range(0..u);
        let want = Relaxed::Key(predecessor_in(&set, y));
        let got = t.relaxed_predecessor(y).unwrap();
        if got != want {
            return Err(format!(
                "seed {seed}: relaxed_predecessor({y}) = {got:?}, expected {want:?} for {set:?}"
            ));
        }
    }
    Ok(())
}
