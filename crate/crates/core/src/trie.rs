//! Binary trie over {0..2^b - 1} stored as an implicit heap.
//!
//! Index 1 is the root, node i has children 2i and 2i+1, and the leaf for key
//! x sits at index 2^b + x. Only internal nodes have storage (a `dNodePtr`);
//! a leaf's bit is computed from `latest[x]` directly.

use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering::SeqCst};

use crate::node::{self, Kind, UpdateNode};
use crate::prims::Guard;
use crate::steps::{self, Section};
use crate::trace::Site;

/// Position of a trie node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrieNode {
    pub height: u32,
    /// Index within its level, left to right.
    pub index: u64,
}

/// Result of a relaxed predecessor query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relaxed {
    /// A key, or -1 for "no predecessor".
    Key(i64),
    /// The traversal met a node whose children both read 0.
    Bottom,
}

pub(crate) struct Slots {
    bits: u32,
    pub(crate) ptrs: Box<[AtomicPtr<UpdateNode>]>,
}

impl Slots {
    /// Internal node i points at the dummy of the smallest key below it.
    pub fn new(bits: u32, dummies: &[*mut UpdateNode]) -> Slots {
        let u = 1usize << bits;
        let ptrs: Box<[AtomicPtr<UpdateNode>]> = (0..u)
            .map(|i| {
                if i == 0 {
                    return AtomicPtr::new(ptr::null_mut());
                }
                let h = height_of(bits, i);
                let smallest = (i << h) - u;
                let d = dummies[smallest];
                unsafe { node::acquire(d) };
                AtomicPtr::new(d)
            })
            .collect();
        Slots { bits, ptrs }
    }

    fn load<'g>(&self, i: usize, _guard: &'g Guard) -> &'g UpdateNode {
        steps::read();
        unsafe { &*self.ptrs[i].load(SeqCst) }
    }

    /// Releases every slot's count. Exclusive access only.
    pub fn release_all(&mut self) {
        for p in self.ptrs.iter_mut() {
            let q = *p.get_mut();
            if !q.is_null() {
                unsafe { node::release_now(q) };
                *p.get_mut() = ptr::null_mut();
            }
        }
    }
}

#[inline]
pub(crate) fn height_of(bits: u32, i: usize) -> u32 {
    bits - (usize::BITS - 1 - i.leading_zeros())
}

impl TrieNode {
    pub fn root(bits: u32) -> TrieNode {
        TrieNode { height: bits, index: 0 }
    }

    pub fn leaf(key: u64) -> TrieNode {
        TrieNode { height: 0, index: key }
    }

    pub(crate) fn heap(self, bits: u32) -> usize {
        (1usize << (bits - self.height)) + self.index as usize
    }

    pub(crate) fn from_heap(bits: u32, i: usize) -> TrieNode {
        let h = height_of(bits, i);
        TrieNode {
            height: h,
            index: (i - (1usize << (bits - h))) as u64,
        }
    }

    /// Every node, root first, level by level, left to right.
    pub fn all(bits: u32) -> impl Iterator<Item = TrieNode> {
        (1usize..(2usize << bits)).map(move |i| TrieNode::from_heap(bits, i))
    }

    /// Keys covered by this node.
    pub fn range(self) -> std::ops::Range<u64> {
        let lo = self.index << self.height;
        lo..lo + (1u64 << self.height)
    }
}

/// The two places where the relaxed and lock-free tries differ, plus access
/// to the shared trie storage.
pub(crate) trait LatestView {
    fn slots(&self) -> &Slots;
    fn find_latest<'g>(&self, key: u64, guard: &'g Guard) -> &'g UpdateNode;
    fn first_activated(&self, n: &UpdateNode, guard: &Guard) -> bool;
    fn trace(&self, _op: u64, _site: Site, _key: u64, _value: i64) {}
}

pub(crate) fn interpreted_bit<V: LatestView>(v: &V, i: usize, guard: &Guard) -> u8 {
    let slots = v.slots();
    let bits = slots.bits;
    let u = 1usize << bits;
    let key = if i >= u {
        (i - u) as u64
    } else {
        slots.load(i, guard).key
    };
    let n = v.find_latest(key, guard);
    if n.kind == Kind::Ins {
        return 1;
    }
    let h = height_of(bits, i);
    if h <= n.upper0() && h < n.lower1() && v.first_activated(n, guard) {
        return 0;
    }
    1
}

pub(crate) fn insert_binary_trie<V: LatestView>(v: &V, inode: &UpdateNode, guard: &Guard) {
    steps::measure(Section::InsertBinaryTrie, || {
        let slots = v.slots();
        let bits = slots.bits;
        let mut i = ((1usize << bits) + inode.key as usize) >> 1;
        while i >= 1 {
            let h = height_of(bits, i);
            let d = slots.load(i, guard);
            let unode = v.find_latest(d.key, guard);
            if unode.kind == Kind::Del {
                let depends = ptr::eq(slots.load(i, guard), unode) || h <= unode.upper0();
                if depends {
                    inode.set_target(unode, guard);
                    if !v.first_activated(inode, guard) {
                        return;
                    }
                    if h < unode.lower1() {
                        unode.min_write_lower1(h);
                        v.trace(inode.op, Site::MinWrite, unode.key, h as i64);
                    }
                }
            }
            i >>= 1;
        }
    })
}

/// Both gating checks before a `dNodePtr` CAS.
fn may_claim<V: LatestView>(v: &V, dnode: &UpdateNode, bits: u32, guard: &Guard) -> bool {
    v.first_activated(dnode, guard) && !dnode.stop() && dnode.lower1() == bits + 1
}

fn cas_slot(slots: &Slots, i: usize, d: &UpdateNode, dnode: &UpdateNode, guard: &Guard) -> bool {
    let new = dnode.as_ptr();
    unsafe { node::acquire(new) };
    steps::cas();
    match slots.ptrs[i].compare_exchange(d.as_ptr(), new, SeqCst, SeqCst) {
        Ok(old) => {
            unsafe { node::release_deferred(old, guard) };
            true
        }
        Err(_) => {
            // dnode is still referenced by latest (or a pending deferred
            // release), so this cannot be the last count.
            unsafe { node::release_now(new) };
            false
        }
    }
}

pub(crate) fn delete_binary_trie<V: LatestView>(v: &V, dnode: &UpdateNode, guard: &Guard) {
    steps::measure(Section::DeleteBinaryTrie, || {
        let slots = v.slots();
        let bits = slots.bits;
        let mut t = (1usize << bits) + dnode.key as usize;
        while t > 1 {
            if interpreted_bit(v, t ^ 1, guard) == 1 || interpreted_bit(v, t, guard) == 1 {
                return;
            }
            t >>= 1;
            let d = slots.load(t, guard);
            if !may_claim(v, dnode, bits, guard) {
                return;
            }
            let h = height_of(bits, t);
            if !cas_slot(slots, t, d, dnode, guard) {
                let d = slots.load(t, guard);
                if !may_claim(v, dnode, bits, guard) {
                    return;
                }
                if !cas_slot(slots, t, d, dnode, guard) {
                    return;
                }
            }
            v.trace(dnode.op, Site::SlotCas, dnode.key, h as i64);
            if interpreted_bit(v, 2 * t, guard) == 1 || interpreted_bit(v, 2 * t + 1, guard) == 1 {
                return;
            }
            dnode.set_upper0(h);
            v.trace(dnode.op, Site::Upper0, dnode.key, h as i64);
        }
    })
}

pub(crate) fn relaxed_predecessor<V: LatestView>(v: &V, y: u64, guard: &Guard) -> Relaxed {
    steps::measure(Section::RelaxedPredecessor, || {
        let bits = v.slots().bits;
        let u = 1usize << bits;
        let mut t = u + y as usize;
        while t & 1 == 0 || interpreted_bit(v, t ^ 1, guard) == 0 {
            t >>= 1;
            if t == 1 {
                return Relaxed::Key(-1);
            }
        }
        t ^= 1;
        while t < u {
            if interpreted_bit(v, 2 * t + 1, guard) == 1 {
                t = 2 * t + 1;
            } else if interpreted_bit(v, 2 * t, guard) == 1 {
                t *= 2;
            } else {
                return Relaxed::Bottom;
            }
        }
        Relaxed::Key((t - u) as i64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_layout() {
        let b = 3;
        assert_eq!(height_of(b, 1), 3);
        assert_eq!(height_of(b, 2), 2);
        assert_eq!(height_of(b, 7), 1);
        assert_eq!(height_of(b, 8), 0);
        assert_eq!(height_of(b, 15), 0);
        let n = TrieNode { height: 1, index: 2 };
        assert_eq!(n.heap(b), 6);
        assert_eq!(TrieNode::from_heap(b, 6), n);
        assert_eq!(n.range(), 4..6);
        assert_eq!(TrieNode::root(b).range(), 0..8);
    }
}
