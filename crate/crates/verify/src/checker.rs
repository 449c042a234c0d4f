//! Wing–Gong linearizability search with memoized pruning.
//!
//! Works for any sequential model. Operations without a response are
//! pending: a linearization may include them (with any return value) or
//! drop them.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

use crate::oracle::{Op, Oracle};

/// Largest history the search accepts. Linearized sets are tracked as a
/// 128-bit mask.
pub const MAX_OPS: usize = 128;

/// A deterministic sequential specification.
pub trait Model {
    type State: Clone + Eq + Hash + Debug;
    type Op: Clone + Debug;
    type Ret: Clone + Eq + Debug;

    fn step(&self, state: &Self::State, op: &Self::Op) -> (Self::State, Self::Ret);
}

/// One operation of a history. Timestamps come from a shared clock.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operation<O, R> {
    pub id: u64,
    pub thread: usize,
    pub op: O,
    /// `None` while pending.
    pub ret: Option<R>,
    pub invoke: u64,
    pub respond: Option<u64>,
}

impl<O, R> Operation<O, R> {
    pub fn is_pending(&self) -> bool {
        self.respond.is_none()
    }

    /// `self` responded before `other` was invoked.
    pub fn precedes(&self, other: &Operation<O, R>) -> bool {
        self.respond.is_some_and(|r| r < other.invoke)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Ids in linearization order; dropped pending operations are absent.
    Linearizable {
        witness: Vec<u64>,
    },
    NotLinearizable,
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable { .. })
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("history has {n} operations; at most {max} are supported")]
    TooLarge { n: usize, max: usize },
    #[error("operation {0} appears twice")]
    DuplicateId(u64),
    #[error("operation {0} invoked twice")]
    DuplicateInvoke(u64),
    #[error("operation {0} responded twice")]
    DuplicateRespond(u64),
    #[error("operation {0} responded without an invocation")]
    RespondWithoutInvoke(u64),
    #[error("operation {0} responded before it was invoked")]
    RespondBeforeInvoke(u64),
    #[error("operation {0} has a response but no response time, or the reverse")]
    ResponseMismatch(u64),
    #[error("operation {0}: response label differs from invocation")]
    LabelMismatch(u64),
    #[error("thread {thread} invoked operation {id} while another was outstanding")]
    Overlap { thread: usize, id: u64 },
    #[error("unparseable record at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("witness failed re-verification: {0}")]
    BadWitness(String),
}

fn validate<O, R>(ops: &[Operation<O, R>]) -> Result<(), CheckError> {
    if ops.len() > MAX_OPS {
        return Err(CheckError::TooLarge {
            n: ops.len(),
            max: MAX_OPS,
        });
    }
    let mut ids = HashSet::new();
    for o in ops {
        if !ids.insert(o.id) {
            return Err(CheckError::DuplicateId(o.id));
        }
        if o.ret.is_some() != o.respond.is_some() {
            return Err(CheckError::ResponseMismatch(o.id));
        }
        if o.respond.is_some_and(|r| r < o.invoke) {
            return Err(CheckError::RespondBeforeInvoke(o.id));
        }
    }
    Ok(())
}

/// Replays `order` and checks it is a valid linearization of `ops`.
pub fn verify_witness<M: Model>(
    model: &M,
    init: &M::State,
    ops: &[Operation<M::Op, M::Ret>],
    order: &[u64],
    fin: Option<&M::State>,
) -> Result<(), String> {
    let pos: Vec<Option<usize>> = ops.iter().map(|o| order.iter().position(|&id| id == o.id)).collect();
    for (o, p) in ops.iter().zip(&pos) {
        if p.is_none() && !o.is_pending() {
            return Err(format!("completed operation {} missing", o.id));
        }
    }
    if order.len() != pos.iter().flatten().count() {
        return Err("witness names unknown or repeated operations".into());
    }
    for (a, pa) in ops.iter().zip(&pos) {
        for (b, pb) in ops.iter().zip(&pos) {
            if let (Some(pa), Some(pb)) = (pa, pb) {
                if a.precedes(b) && pa > pb {
                    return Err(format!("{} precedes {} in real time", a.id, b.id));
                }
            }
        }
    }
    let mut s = init.clone();
    for id in order {
        let o = ops.iter().find(|o| o.id == *id).unwrap();
        let (next, r) = model.step(&s, &o.op);
        if let Some(want) = &o.ret {
            if *want != r {
                return Err(format!("operation {} returned {want:?}, replay gives {r:?}", o.id));
            }
        }
        s = next;
    }
    if let Some(f) = fin {
        if *f != s {
            return Err(format!("final state {s:?}, expected {f:?}"));
        }
    }
    Ok(())
}

struct Search<'a, M: Model> {
    model: &'a M,
    ops: &'a [Operation<M::Op, M::Ret>],
    /// Bit i set: op i must be linearized before op j may be (for row j).
    preds: Vec<u128>,
    completed: u128,
    fin: Option<&'a M::State>,
    seen: HashSet<(u128, M::State)>,
    stack: Vec<u64>,
}

impl<M: Model> Search<'_, M> {
    fn dfs(&mut self, done: u128, state: M::State) -> bool {
        if done & self.completed == self.completed && self.fin.is_none_or(|f| *f == state) {
            return true;
        }
        if !self.seen.insert((done, state.clone())) {
            return false;
        }
        for (i, o) in self.ops.iter().enumerate() {
            let bit = 1u128 << i;
            if done & bit != 0 || self.preds[i] & !done != 0 {
                continue;
            }
            let (next, r) = self.model.step(&state, &o.op);
            if o.ret.as_ref().is_some_and(|want| *want != r) {
                continue;
            }
            self.stack.push(o.id);
            if self.dfs(done | bit, next) {
                return true;
            }
            self.stack.pop();
        }
        false
    }
}

/// Searches for a linearization. If `fin` is given, the linearized
/// operations must also leave the model in that state.
pub fn check<M: Model>(
    model: &M,
    init: &M::State,
    ops: &[Operation<M::Op, M::Ret>],
    fin: Option<&M::State>,
) -> Result<Verdict, CheckError> {
    validate(ops)?;
    let preds = ops
        .iter()
        .map(|b| {
            ops.iter()
                .enumerate()
                .filter(|(_, a)| a.precedes(b))
                .fold(0u128, |m, (i, _)| m | 1 << i)
        })
        .collect();
    let completed = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.is_pending())
        .fold(0u128, |m, (i, _)| m | 1 << i);
    let mut s = Search {
        model,
        ops,
        preds,
        completed,
        fin,
        seen: HashSet::new(),
        stack: Vec::new(),
    };
    if !s.dfs(0, init.clone()) {
        return Ok(Verdict::NotLinearizable);
    }
    let witness = s.stack;
    verify_witness(model, init, ops, &witness, fin).map_err(CheckError::BadWitness)?;
    Ok(Verdict::Linearizable { witness })
}

/// Tries every ordering of every admissible subset. Exponential; meant for
/// cross-checking `check` on small histories.
pub fn brute_force<M: Model>(
    model: &M,
    init: &M::State,
    ops: &[Operation<M::Op, M::Ret>],
    fin: Option<&M::State>,
) -> Result<bool, CheckError> {
    validate(ops)?;
    let pending: Vec<usize> = (0..ops.len()).filter(|&i| ops[i].is_pending()).collect();
    for sub in 0u32..(1 << pending.len()) {
        let mut chosen: Vec<u64> = ops.iter().filter(|o| !o.is_pending()).map(|o| o.id).collect();
        for (j, &i) in pending.iter().enumerate() {
            if sub & (1 << j) != 0 {
                chosen.push(ops[i].id);
            }
        }
        if permute(&mut chosen, 0, &mut |order| {
            verify_witness(model, init, ops, order, fin).is_ok()
        }) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn permute(v: &mut Vec<u64>, k: usize, f: &mut impl FnMut(&[u64]) -> bool) -> bool {
    if k == v.len() {
        return f(v);
    }
    for i in k..v.len() {
        v.swap(k, i);
        if permute(v, k + 1, f) {
            return true;
        }
        v.swap(k, i);
    }
    false
}

/// The dynamic set with predecessor.
#[derive(Clone, Copy, Debug)]
pub struct SetModel {
    pub bits: u32,
}

impl Model for SetModel {
    type State = BTreeSet<u64>;
    type Op = Op;
    type Ret = i64;

    fn step(&self, s: &BTreeSet<u64>, op: &Op) -> (BTreeSet<u64>, i64) {
        let mut o = Oracle::from_set(self.bits, s.clone());
        let r = o.apply(*op);
        (o.into_keys(), r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(id: u64, op: Op, ret: Option<i64>, invoke: u64, respond: Option<u64>) -> Operation<Op, i64> {
        Operation {
            id,
            thread: id as usize,
            op,
            ret,
            invoke,
            respond,
        }
    }

    #[test]
    fn pending_may_be_dropped_or_applied() {
        let m = SetModel { bits: 3 };
        let ops = vec![
            op(1, Op::Insert(4), None, 1, None),
            op(2, Op::Search(4), Some(1), 2, Some(3)),
        ];
        assert!(check(&m, &BTreeSet::new(), &ops, None).unwrap().is_linearizable());
        let ops = vec![
            op(1, Op::Insert(4), None, 1, None),
            op(2, Op::Search(4), Some(0), 2, Some(3)),
        ];
        assert!(check(&m, &BTreeSet::new(), &ops, None).unwrap().is_linearizable());
    }

    #[test]
    fn final_state_constrains() {
        let m = SetModel { bits: 3 };
        let ops = vec![op(1, Op::Insert(4), None, 1, None)];
        let fin: BTreeSet<u64> = [4].into();
        match check(&m, &BTreeSet::new(), &ops, Some(&fin)).unwrap() {
            Verdict::Linearizable { witness } => assert_eq!(witness, vec![1]),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn malformed_is_an_error() {
        let m = SetModel { bits: 3 };
        let ops = vec![op(1, Op::Insert(4), Some(0), 5, Some(2))];
        assert_eq!(
            check(&m, &BTreeSet::new(), &ops, None),
            Err(CheckError::RespondBeforeInvoke(1))
        );
    }
}
