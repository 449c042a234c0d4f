//! Sequential models and history generators for the primitives.

use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::thread;

use lftrie::prims::MinReg;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checker::{Model, Operation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegOp {
    MinWrite(u32),
    Read,
}

/// A min-register with values in {0..bound}, initially `bound`.
#[derive(Clone, Copy, Debug)]
pub struct MinRegModel {
    pub bound: u32,
}

impl Model for MinRegModel {
    type State = u32;
    type Op = RegOp;
    type Ret = u32;

    fn step(&self, s: &u32, op: &RegOp) -> (u32, u32) {
        match *op {
            RegOp::MinWrite(v) => ((*s).min(v), 0),
            RegOp::Read => (*s, *s),
        }
    }
}

/// Runs random min-writes and reads on `reg` from `threads` threads and
/// records the history. Timestamps come from one shared counter; threads
/// yield at random inside the recorded intervals to make them overlap.
pub fn minreg_history<R: MinReg>(reg: &R, threads: usize, ops: usize, seed: u64) -> Vec<Operation<RegOp, u32>> {
    let clock = AtomicU64::new(0);
    let bound = reg.bound();
    let per: Vec<Vec<Operation<RegOp, u32>>> = thread::scope(|s| {
        let hs: Vec<_> = (0..threads)
            .map(|t| {
                let clock = &clock;
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((t as u64 + 1) << 32));
                    let mut out = Vec::with_capacity(ops);
                    for i in 0..ops {
                        let op = if rng.gen_bool(0.5) {
                            RegOp::MinWrite(rng.gen_range(0..=bound))
                        } else {
                            RegOp::Read
                        };
                        let invoke = clock.fetch_add(1, SeqCst);
                        if rng.gen_bool(0.5) {
                            thread::yield_now();
                        }
                        let ret = match op {
                            RegOp::MinWrite(v) => {
                                reg.min_write(v);
                                0
                            }
                            RegOp::Read => reg.read(),
                        };
                        if rng.gen_bool(0.5) {
                            thread::yield_now();
                        }
                        let respond = clock.fetch_add(1, SeqCst);
                        out.push(Operation {
                            id: (t * ops + i) as u64,
                            thread: t,
                            op,
                            ret: Some(ret),
                            invoke,
                            respond: Some(respond),
                        });
                    }
                    out
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    per.into_iter().flatten().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CopyOp {
    WriteSrc(usize),
    /// Returns the value copied.
    Copy,
    ReadDst,
}

/// A source cell and a destination that only changes by copying.
#[derive(Clone, Copy, Debug)]
pub struct CopyModel;

impl Model for CopyModel {
    type State = (usize, usize);
    type Op = CopyOp;
    type Ret = usize;

    fn step(&self, &(src, dst): &(usize, usize), op: &CopyOp) -> ((usize, usize), usize) {
        match *op {
            CopyOp::WriteSrc(v) => ((v, dst), 0),
            CopyOp::Copy => ((src, src), src),
            CopyOp::ReadDst => ((src, dst), dst),
        }
    }
}
