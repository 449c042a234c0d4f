//! The wait-free relaxed binary trie.
//!
//! `latest[x]` holds exactly one update node per key; an update linearizes at
//! its CAS on that slot. `relaxed_predecessor` may return `Bottom` while
//! updates in the queried range are in flight.

use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering::SeqCst};

use crate::error::{check_bits, check_key, Result};
use crate::node::{self, Kind, NodeInit, UpdateNode};
use crate::prims::{Collector, Guard};
use crate::steps;
use crate::trace::{self, OpKind, Site, TraceHook, Tracer};
use crate::trie::{self, LatestView, Relaxed, Slots, TrieNode};

pub struct RelaxedTrie {
    bits: u32,
    latest: Box<[AtomicPtr<UpdateNode>]>,
    slots: Slots,
    tracer: Option<Tracer>,
    collector: Collector,
}

impl LatestView for RelaxedTrie {
    fn slots(&self) -> &Slots {
        &self.slots
    }

    fn find_latest<'g>(&self, key: u64, _guard: &'g Guard) -> &'g UpdateNode {
        steps::read();
        unsafe { &*self.latest[key as usize].load(SeqCst) }
    }

    fn first_activated(&self, n: &UpdateNode, _guard: &Guard) -> bool {
        steps::read();
        ptr::eq(self.latest[n.key as usize].load(SeqCst), n)
    }

    fn trace(&self, op: u64, site: Site, key: u64, value: i64) {
        trace::emit(&self.tracer, op, site, key, value);
    }
}

impl RelaxedTrie {
    /// A trie over {0..2^bits - 1}, initially empty.
    pub fn new(bits: u32) -> Result<RelaxedTrie> {
        Self::build(bits, None)
    }

    pub fn with_trace(bits: u32, hook: TraceHook) -> Result<RelaxedTrie> {
        Self::build(bits, Some(Tracer::new(hook)))
    }

    fn build(bits: u32, tracer: Option<Tracer>) -> Result<RelaxedTrie> {
        check_bits(bits)?;
        let u = 1usize << bits;
        let dummies: Vec<*mut UpdateNode> = (0..u).map(|x| UpdateNode::alloc_dummy(x as u64, 0, bits)).collect();
        let slots = Slots::new(bits, &dummies);
        let latest = dummies
            .into_iter()
            .map(|d| {
                unsafe { node::acquire(d) };
                AtomicPtr::new(d)
            })
            .collect();
        Ok(RelaxedTrie {
            bits,
            latest,
            slots,
            tracer,
            collector: Collector::new(),
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn universe(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn search(&self, x: u64) -> Result<bool> {
        check_key(x, self.bits)?;
        let op = trace::begin(&self.tracer, OpKind::Search, x);
        let g = self.collector.pin();
        let r = self.find_latest(x, &g).kind == Kind::Ins;
        trace::emit(&self.tracer, op, Site::Respond(OpKind::Search), x, r as i64);
        Ok(r)
    }

    pub fn insert(&self, x: u64) -> Result<()> {
        check_key(x, self.bits)?;
        let op = trace::begin(&self.tracer, OpKind::Insert, x);
        let g = self.collector.pin();
        self.trie_insert(x, op, &g);
        trace::emit(&self.tracer, op, Site::Respond(OpKind::Insert), x, 0);
        Ok(())
    }

    pub fn delete(&self, x: u64) -> Result<()> {
        check_key(x, self.bits)?;
        let op = trace::begin(&self.tracer, OpKind::Delete, x);
        let g = self.collector.pin();
        self.trie_delete(x, op, &g);
        trace::emit(&self.tracer, op, Site::Respond(OpKind::Delete), x, 0);
        Ok(())
    }

    /// Largest key below `y`, -1 if none, or `Bottom` under concurrent
    /// updates in the range.
    pub fn relaxed_predecessor(&self, y: u64) -> Result<Relaxed> {
        check_key(y, self.bits)?;
        let op = trace::begin(&self.tracer, OpKind::RelaxedPredecessor, y);
        let g = self.collector.pin();
        let r = trie::relaxed_predecessor(self, y, &g);
        let v = match r {
            Relaxed::Key(k) => k,
            Relaxed::Bottom => -2,
        };
        trace::emit(&self.tracer, op, Site::Respond(OpKind::RelaxedPredecessor), y, v);
        Ok(r)
    }

    fn trie_insert(&self, x: u64, op: u64, g: &Guard) {
        let dnode = self.find_latest(x, g);
        if dnode.kind != Kind::Del {
            return;
        }
        let inode = UpdateNode::alloc(NodeInit {
            key: x,
            kind: Kind::Ins,
            id: 0,
            op,
            bits: self.bits,
            latest_next: ptr::null_mut(),
            del_pred: -1,
            del_pred_node: 0,
        });
        dnode.help_stop_via_latest_next(g);
        unsafe { node::acquire(inode) };
        steps::cas();
        if self.latest[x as usize]
            .compare_exchange(dnode.as_ptr(), inode, SeqCst, SeqCst)
            .is_err()
        {
            unsafe { node::release_now(inode) };
            return;
        }
        trace::emit(&self.tracer, op, Site::LatestCas, x, 1);
        unsafe { node::release_deferred(dnode.as_ptr(), g) };
        // Nobody reads a superseded DEL node's latestNext; dropping it keeps
        // retired chains short.
        dnode.clear_latest_next(g);
        trie::insert_binary_trie(self, unsafe { &*inode }, g);
    }

    fn trie_delete(&self, x: u64, op: u64, g: &Guard) {
        let inode = self.find_latest(x, g);
        if inode.kind != Kind::Ins {
            return;
        }
        let dnode = UpdateNode::alloc(NodeInit {
            key: x,
            kind: Kind::Del,
            id: 0,
            op,
            bits: self.bits,
            latest_next: inode.as_ptr(),
            del_pred: -1,
            del_pred_node: 0,
        });
        unsafe { node::acquire(dnode) };
        steps::cas();
        if self.latest[x as usize]
            .compare_exchange(inode.as_ptr(), dnode, SeqCst, SeqCst)
            .is_err()
        {
            unsafe { node::release_now(dnode) };
            return;
        }
        trace::emit(&self.tracer, op, Site::LatestCas, x, 0);
        unsafe { node::release_deferred(inode.as_ptr(), g) };
        if let Some(t) = inode.target(g) {
            t.set_stop();
        }
        trie::delete_binary_trie(self, unsafe { &*dnode }, g);
    }

    /// Interpreted bit of any node. Exact only at quiescence.
    pub fn interpreted_bit(&self, n: TrieNode) -> u8 {
        assert!(n.height <= self.bits && n.index < (1u64 << (self.bits - n.height)));
        let g = self.collector.pin();
        trie::interpreted_bit(self, n.heap(self.bits), &g)
    }

    /// Epoch-collector statistics: items retired and not yet freed.
    pub fn pending_garbage(&self) -> u64 {
        self.collector.pending()
    }

    /// Advances the epoch and frees everything retired so far.
    pub fn reclaim(&mut self) {
        self.collector.quiesce();
    }
}

impl Drop for RelaxedTrie {
    fn drop(&mut self) {
        self.collector.drain();
        for p in self.latest.iter_mut() {
            unsafe { node::release_now(*p.get_mut()) };
        }
        self.slots.release_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits_of(t: &RelaxedTrie) -> Vec<Vec<u8>> {
        (0..=t.bits())
            .rev()
            .map(|h| {
                (0..(1u64 << (t.bits() - h)))
                    .map(|i| t.interpreted_bit(TrieNode { height: h, index: i }))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn fresh_trie_is_all_zero() {
        let t = RelaxedTrie::new(3).unwrap();
        assert!(bits_of(&t).iter().flatten().all(|&b| b == 0));
        assert!(!t.search(5).unwrap());
        assert_eq!(t.relaxed_predecessor(7).unwrap(), Relaxed::Key(-1));
    }

    #[test]
    fn insert_zero_sets_left_spine() {
        let t = RelaxedTrie::new(2).unwrap();
        t.insert(0).unwrap();
        assert_eq!(bits_of(&t), vec![vec![1], vec![1, 0], vec![1, 0, 0, 0]]);
    }

    #[test]
    fn dummy_dependency_is_smallest_key() {
        let t = RelaxedTrie::new(2).unwrap();
        let g = t.collector.pin();
        let root = t.slots.ptrs[1].load(SeqCst);
        assert_eq!(unsafe { (*root).key }, 0);
        let right = t.slots.ptrs[3].load(SeqCst);
        assert_eq!(unsafe { (*right).key }, 2);
        drop(g);
    }

    #[test]
    fn insert_three_min_writes_root_dummy() {
        let t = RelaxedTrie::new(2).unwrap();
        t.insert(3).unwrap();
        let g = t.collector.pin();
        let dummy0 = t.find_latest(0, &g);
        assert_eq!(dummy0.kind, Kind::Del);
        assert_eq!(dummy0.lower1(), 2);
        let dummy2 = t.find_latest(2, &g);
        assert_eq!(dummy2.lower1(), 1);
    }

    #[test]
    fn delete_last_key_clears_path() {
        let t = RelaxedTrie::new(3).unwrap();
        t.insert(5).unwrap();
        t.delete(5).unwrap();
        assert!(bits_of(&t).iter().flatten().all(|&b| b == 0));
        let g = t.collector.pin();
        assert_eq!(t.find_latest(5, &g).upper0(), 3);
    }

    #[test]
    fn two_key_set() {
        let t = RelaxedTrie::new(2).unwrap();
        t.insert(0).unwrap();
        t.insert(2).unwrap();
        assert_eq!(bits_of(&t), vec![vec![1], vec![1, 1], vec![1, 0, 1, 0]]);
        assert_eq!(t.relaxed_predecessor(3).unwrap(), Relaxed::Key(2));
        assert_eq!(t.relaxed_predecessor(2).unwrap(), Relaxed::Key(0));
        assert_eq!(t.relaxed_predecessor(0).unwrap(), Relaxed::Key(-1));
    }

    #[test]
    fn sibling_one_stops_delete() {
        let t = RelaxedTrie::new(2).unwrap();
        t.insert(0).unwrap();
        t.insert(1).unwrap();
        t.delete(1).unwrap();
        let g = t.collector.pin();
        assert_eq!(t.find_latest(1, &g).upper0(), 0);
        drop(g);
        assert_eq!(bits_of(&t), vec![vec![1], vec![1, 0], vec![1, 0, 0, 0]]);
    }

    #[test]
    fn present_key_insert_is_read_only() {
        let t = RelaxedTrie::new(4).unwrap();
        t.insert(9).unwrap();
        let before = steps::snapshot();
        t.insert(9).unwrap();
        let d = steps::snapshot().since(&before);
        assert_eq!((d.writes, d.cas), (0, 0));
    }

    #[test]
    fn rejects_out_of_range() {
        let t = RelaxedTrie::new(3).unwrap();
        assert!(t.insert(8).is_err());
        assert!(RelaxedTrie::new(0).is_err());
    }
}
