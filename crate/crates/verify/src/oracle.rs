//! Sequential reference semantics.

use std::collections::BTreeSet;
use std::fmt;

use lftrie::OpKind;

/// One set operation with its argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Search(u64),
    Insert(u64),
    Delete(u64),
    Predecessor(u64),
}

impl Op {
    pub fn kind(self) -> OpKind {
        match self {
            Op::Search(_) => OpKind::Search,
            Op::Insert(_) => OpKind::Insert,
            Op::Delete(_) => OpKind::Delete,
            Op::Predecessor(_) => OpKind::Predecessor,
        }
    }

    pub fn arg(self) -> u64 {
        match self {
            Op::Search(x) | Op::Insert(x) | Op::Delete(x) | Op::Predecessor(x) => x,
        }
    }

    pub fn new(kind: OpKind, arg: u64) -> Option<Op> {
        Some(match kind {
            OpKind::Search => Op::Search(arg),
            OpKind::Insert => Op::Insert(arg),
            OpKind::Delete => Op::Delete(arg),
            OpKind::Predecessor => Op::Predecessor(arg),
            OpKind::RelaxedPredecessor => return None,
        })
    }

    pub fn is_update(self) -> bool {
        matches!(self, Op::Insert(_) | Op::Delete(_))
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind(), self.arg())
    }
}

/// Largest key of `s` below `y`, or -1.
pub fn predecessor_in(s: &BTreeSet<u64>, y: u64) -> i64 {
    s.range(..y).next_back().map_or(-1, |&k| k as i64)
}

/// A dynamic set over {0..2^bits - 1}. Responses are encoded as i64:
/// search gives 0/1, updates give 0, predecessor gives the key or -1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Oracle {
    bits: u32,
    set: BTreeSet<u64>,
}

impl Oracle {
    pub fn new(bits: u32) -> Oracle {
        Oracle {
            bits,
            set: BTreeSet::new(),
        }
    }

    pub fn with_keys(bits: u32, keys: impl IntoIterator<Item = u64>) -> Oracle {
        let mut o = Oracle::new(bits);
        for k in keys {
            o.apply(Op::Insert(k));
        }
        o
    }

    pub fn from_set(bits: u32, set: BTreeSet<u64>) -> Oracle {
        assert!(set.last().is_none_or(|&k| k < 1u64 << bits));
        Oracle { bits, set }
    }

    pub fn into_keys(self) -> BTreeSet<u64> {
        self.set
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn apply(&mut self, op: Op) -> i64 {
        assert!(op.arg() < 1u64 << self.bits, "{op} outside universe");
        match op {
            Op::Search(x) => self.set.contains(&x) as i64,
            Op::Insert(x) => {
                self.set.insert(x);
                0
            }
            Op::Delete(x) => {
                self.set.remove(&x);
                0
            }
            Op::Predecessor(y) => predecessor_in(&self.set, y),
        }
    }

    pub fn contains(&self, x: u64) -> bool {
        self.set.contains(&x)
    }

    pub fn predecessor(&self, y: u64) -> i64 {
        predecessor_in(&self.set, y)
    }

    pub fn keys(&self) -> &BTreeSet<u64> {
        &self.set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_key_set() {
        let mut o = Oracle::new(2);
        o.apply(Op::Insert(0));
        o.apply(Op::Insert(2));
        assert_eq!(o.apply(Op::Predecessor(3)), 2);
        assert_eq!(o.apply(Op::Predecessor(2)), 0);
        assert_eq!(o.apply(Op::Predecessor(0)), -1);
    }

    #[test]
    fn delete_absent_is_noop() {
        let mut o = Oracle::with_keys(3, [1, 5]);
        let before = o.clone();
        assert_eq!(o.apply(Op::Delete(4)), 0);
        assert_eq!(o, before);
    }
}
