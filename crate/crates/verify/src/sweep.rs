//! Invariant checks on a quiescent trie.

use std::fmt;

use lftrie::{Announcements, LockFreeTrie, RelaxedTrie, TrieNode};

use crate::oracle::Oracle;

/// What the sweep needs from a structure.
pub trait Inspect {
    fn bits(&self) -> u32;
    fn interpreted_bit(&self, n: TrieNode) -> u8;
    fn contains(&self, x: u64) -> bool;
    fn announcements(&self) -> Announcements;
    fn pending_garbage(&self) -> u64;
    /// Two epoch advances plus a full collection.
    fn reclaim(&mut self);
}

impl Inspect for LockFreeTrie {
    fn bits(&self) -> u32 {
        LockFreeTrie::bits(self)
    }
    fn interpreted_bit(&self, n: TrieNode) -> u8 {
        LockFreeTrie::interpreted_bit(self, n)
    }
    fn contains(&self, x: u64) -> bool {
        self.search(x).unwrap()
    }
    fn announcements(&self) -> Announcements {
        LockFreeTrie::announcements(self)
    }
    fn pending_garbage(&self) -> u64 {
        LockFreeTrie::pending_garbage(self)
    }
    fn reclaim(&mut self) {
        LockFreeTrie::reclaim(self)
    }
}

impl Inspect for RelaxedTrie {
    fn bits(&self) -> u32 {
        RelaxedTrie::bits(self)
    }
    fn interpreted_bit(&self, n: TrieNode) -> u8 {
        RelaxedTrie::interpreted_bit(self, n)
    }
    fn contains(&self, x: u64) -> bool {
        self.search(x).unwrap()
    }
    fn announcements(&self) -> Announcements {
        Announcements::default()
    }
    fn pending_garbage(&self) -> u64 {
        RelaxedTrie::pending_garbage(self)
    }
    fn reclaim(&mut self) {
        RelaxedTrie::reclaim(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Bit 0 but some key below is present.
    Ib0 { node: TrieNode },
    /// Bit 1 but no key below is present.
    Ib1 { node: TrieNode },
    /// Internal bit differs from the OR of its children's bits.
    Or {
        node: TrieNode,
        bit: u8,
        left: u8,
        right: u8,
    },
    /// Search disagrees with the expected set.
    Membership { key: u64, expected: bool },
    /// Announcement lists hold more than sentinels.
    Announcements(Announcements),
    /// Garbage left after two epoch advances.
    Garbage { pending: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Ib0 { node } => write!(f, "IB0 at {node:?}"),
            Violation::Ib1 { node } => write!(f, "IB1 at {node:?}"),
            Violation::Or { node, bit, left, right } => {
                write!(f, "OR at {node:?}: {bit} vs children {left},{right}")
            }
            Violation::Membership { key, expected } => {
                write!(f, "key {key}: expected present={expected}")
            }
            Violation::Announcements(a) => write!(f, "announcements left: {a:?}"),
            Violation::Garbage { pending } => write!(f, "{pending} retired items not freed"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub nodes: usize,
    /// Retired items pending before the reclaim.
    pub garbage_before: u64,
    pub violations: Vec<Violation>,
}

impl SweepReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every trie node, the announcement lists and the retire queues.
/// If `expected` is given, membership is also compared against it.
pub fn quiescent_sweep<S: Inspect>(s: &mut S, expected: Option<&Oracle>) -> SweepReport {
    let bits = s.bits();
    let u = 1usize << bits;
    let mut rep = SweepReport::default();
    // Occupancy and bit per heap index; leaves at u..2u.
    let mut occ = vec![false; 2 * u];
    let mut bit = vec![0u8; 2 * u];
    for x in 0..u {
        let present = s.contains(x as u64);
        if let Some(o) = expected {
            if o.contains(x as u64) != present {
                rep.violations.push(Violation::Membership {
                    key: x as u64,
                    expected: o.contains(x as u64),
                });
            }
        }
        occ[u + x] = present;
    }
    for i in (1..u).rev() {
        occ[i] = occ[2 * i] || occ[2 * i + 1];
    }
    let nodes: Vec<TrieNode> = TrieNode::all(bits).collect();
    for (k, &n) in nodes.iter().enumerate() {
        let i = k + 1;
        bit[i] = s.interpreted_bit(n);
        rep.nodes += 1;
        match (bit[i], occ[i]) {
            (0, true) => rep.violations.push(Violation::Ib0 { node: n }),
            (1, false) => rep.violations.push(Violation::Ib1 { node: n }),
            _ => {}
        }
    }
    for (k, &n) in nodes.iter().enumerate().take(u - 1) {
        let i = k + 1;
        let (l, r) = (bit[2 * i], bit[2 * i + 1]);
        if bit[i] != (l | r) {
            rep.violations.push(Violation::Or {
                node: n,
                bit: bit[i],
                left: l,
                right: r,
            });
        }
    }
    let a = s.announcements();
    if !a.is_empty() {
        rep.violations.push(Violation::Announcements(a));
    }
    rep.garbage_before = s.pending_garbage();
    s.reclaim();
    let pending = s.pending_garbage();
    if pending > 0 {
        rep.violations.push(Violation::Garbage { pending });
    }
    rep
}
