//! The lock-free binary trie: a linearizable set with search, insert,
//! delete and predecessor.
//!
//! Each key's `latest` slot heads a list of at most two update nodes; an
//! update linearizes when its node turns active. Active updates are
//! announced in an ascending list (U-ALL) and a descending one (RU-ALL);
//! predecessor operations are announced in P-ALL and receive notifications
//! from updates that complete while they run.

use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicU64, Ordering::SeqCst};

use crate::error::{check_bits, check_key, Result};
use crate::node::{self, Kind, NodeInit, NodeRef, UpdateNode};
use crate::prims::sorted_list::MARK;
use crate::prims::{
    AnnounceList, Collector, CopyCell, Entry, Guard, ListCell, Order, PushList, SortedList, NEG_INF, POS_INF,
};
use crate::recovery::{self, Notice, UpdateSnapshot};
use crate::steps;
use crate::trace::{self, OpKind, Site, TraceHook, Tracer};
use crate::trie::{self, LatestView, Relaxed, Slots, TrieNode};

type Cell = ListCell<NodeRef>;

struct NotifyNode {
    key: u64,
    update: UpdateSnapshot,
    /// Largest-key active INS node below the receiver's key: (id, key).
    max: Option<(u64, u64)>,
    threshold: i64,
}

struct PredNode {
    key: u64,
    id: u64,
    /// Current cell of the owner's reverse walk, as a `*const Cell`.
    position: CopyCell,
    notify: PushList<NotifyNode>,
}

impl Drop for PredNode {
    fn drop(&mut self) {
        let c = self.position.get_mut() as *const Cell;
        unsafe { (*c).release_now() };
    }
}

/// Linked entries in each announcement list, excluding sentinels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Announcements {
    pub uall: usize,
    pub ruall: usize,
    pub pall: usize,
}

impl Announcements {
    pub fn is_empty(&self) -> bool {
        self.uall == 0 && self.ruall == 0 && self.pall == 0
    }
}

pub struct LockFreeTrie {
    // Field order matters for drop: announcements release list cells.
    pall: AnnounceList<PredNode>,
    uall: SortedList<NodeRef>,
    ruall: SortedList<NodeRef>,
    bits: u32,
    latest: Box<[AtomicPtr<UpdateNode>]>,
    slots: Slots,
    ids: AtomicU64,
    tracer: Option<Tracer>,
    collector: Collector,
}

impl LatestView for LockFreeTrie {
    fn slots(&self) -> &Slots {
        &self.slots
    }

    fn find_latest<'g>(&self, key: u64, g: &'g Guard) -> &'g UpdateNode {
        steps::read();
        let h = unsafe { &*self.latest[key as usize].load(SeqCst) };
        if !h.is_active() {
            if let Some(n) = h.latest_next(g) {
                return n;
            }
        }
        h
    }

    fn first_activated(&self, n: &UpdateNode, _g: &Guard) -> bool {
        steps::read();
        let h = self.latest[n.key as usize].load(SeqCst);
        if ptr::eq(h, n) {
            return true;
        }
        let h = unsafe { &*h };
        !h.is_active() && ptr::eq(h.latest_next_ptr(), n)
    }

    fn trace(&self, op: u64, site: Site, key: u64, value: i64) {
        trace::emit(&self.tracer, op, site, key, value);
    }
}

fn kind_code(k: Kind) -> i64 {
    match k {
        Kind::Ins => 1,
        Kind::Del => 0,
    }
}

fn snapshot(u: &UpdateNode) -> UpdateSnapshot {
    UpdateSnapshot {
        id: u.id,
        key: u.key as i64,
        kind: u.kind,
        del_pred2: if u.kind == Kind::Del { u.del_pred2() } else { None },
    }
}

fn push_unique<'g>(v: &mut Vec<&'g UpdateNode>, u: &'g UpdateNode) {
    if !v.iter().any(|w| w.id == u.id) {
        v.push(u);
    }
}

impl LockFreeTrie {
    /// A set over {0..2^bits - 1}, initially empty.
    pub fn new(bits: u32) -> Result<LockFreeTrie> {
        Self::build(bits, None)
    }

    pub fn with_trace(bits: u32, hook: TraceHook) -> Result<LockFreeTrie> {
        Self::build(bits, Some(Tracer::new(hook)))
    }

    fn build(bits: u32, tracer: Option<Tracer>) -> Result<LockFreeTrie> {
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
        Ok(LockFreeTrie {
            pall: AnnounceList::new(),
            uall: SortedList::new(Order::Ascending),
            ruall: SortedList::new(Order::Descending),
            bits,
            latest,
            slots,
            ids: AtomicU64::new(1),
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

    fn next_id(&self) -> u64 {
        self.ids.fetch_add(1, SeqCst)
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
        self.insert_op(x, op, &g);
        trace::emit(&self.tracer, op, Site::Respond(OpKind::Insert), x, 0);
        Ok(())
    }

    pub fn delete(&self, x: u64) -> Result<()> {
        check_key(x, self.bits)?;
        let op = trace::begin(&self.tracer, OpKind::Delete, x);
        let g = self.collector.pin();
        self.delete_op(x, op, &g);
        trace::emit(&self.tracer, op, Site::Respond(OpKind::Delete), x, 0);
        Ok(())
    }

    /// Largest key in the set below `y`, or -1.
    pub fn predecessor(&self, y: u64) -> Result<i64> {
        check_key(y, self.bits)?;
        let op = trace::begin(&self.tracer, OpKind::Predecessor, y);
        let g = self.collector.pin();
        let (r, p) = self.pred_helper(y, op, &g);
        self.pall.remove(p, &g);
        trace::emit(&self.tracer, op, Site::Respond(OpKind::Predecessor), y, r);
        Ok(r)
    }

    /// The relaxed traversal alone, on the current trie state.
    pub fn relaxed_predecessor(&self, y: u64) -> Result<Relaxed> {
        check_key(y, self.bits)?;
        let g = self.collector.pin();
        Ok(trie::relaxed_predecessor(self, y, &g))
    }

    fn announce(&self, u: &UpdateNode, g: &Guard) {
        let k = u.key as i64;
        self.uall.insert_unless(k, NodeRef::new(u), |r| r.is(u), g);
        self.ruall.insert_unless(k, NodeRef::new(u), |r| r.is(u), g);
    }

    fn unannounce(&self, u: &UpdateNode, g: &Guard) {
        let k = u.key as i64;
        self.uall.remove_all(k, |r| r.is(u), g);
        self.ruall.remove_all(k, |r| r.is(u), g);
    }

    fn activate(&self, u: &UpdateNode) {
        if u.activate() {
            trace::emit(&self.tracer, u.op, Site::Activate, u.key, kind_code(u.kind));
        }
    }

    fn help_activate(&self, u: &UpdateNode, g: &Guard) {
        if u.is_active() {
            return;
        }
        self.announce(u, g);
        self.activate(u);
        if u.kind == Kind::Del {
            u.help_stop_via_latest_next(g);
        }
        u.clear_latest_next(g);
        if u.completed() {
            self.unannounce(u, g);
        }
    }

    fn head<'g>(&self, x: u64, _g: &'g Guard) -> &'g UpdateNode {
        steps::read();
        unsafe { &*self.latest[x as usize].load(SeqCst) }
    }

    /// Installs `new` in `latest[x]` if it still holds `old`. On success
    /// the slot's count on `old` is dropped; on failure `new` is freed.
    fn install(&self, x: u64, old: &UpdateNode, new: *mut UpdateNode, op: u64, g: &Guard) -> bool {
        unsafe { node::acquire(new) };
        steps::cas();
        match self.latest[x as usize].compare_exchange(old.as_ptr(), new, SeqCst, SeqCst) {
            Ok(_) => {
                trace::emit(&self.tracer, op, Site::LatestCas, x, kind_code(unsafe { (*new).kind }));
                unsafe { node::release_deferred(old.as_ptr(), g) };
                true
            }
            Err(_) => {
                unsafe { node::release_now(new) };
                false
            }
        }
    }

    fn insert_op(&self, x: u64, op: u64, g: &Guard) {
        let dnode = self.find_latest(x, g);
        if dnode.kind != Kind::Del {
            return;
        }
        let inode = UpdateNode::alloc(NodeInit {
            key: x,
            kind: Kind::Ins,
            id: self.next_id(),
            op,
            bits: self.bits,
            latest_next: dnode.as_ptr(),
            del_pred: -1,
            del_pred_node: 0,
        });
        dnode.help_stop_via_latest_next(g);
        dnode.clear_latest_next(g);
        if !self.install(x, dnode, inode, op, g) {
            let h = self.head(x, g);
            self.help_activate(h, g);
            return;
        }
        let inode = unsafe { &*inode };
        self.announce(inode, g);
        self.activate(inode);
        inode.clear_latest_next(g);
        trie::insert_binary_trie(self, inode, g);
        self.notify_pred_ops(inode, g);
        inode.set_completed();
        self.unannounce(inode, g);
    }

    fn delete_op(&self, x: u64, op: u64, g: &Guard) {
        let inode = self.find_latest(x, g);
        if inode.kind != Kind::Ins {
            return;
        }
        let (del_pred, p1) = self.pred_helper(x, op, g);
        let dnode = UpdateNode::alloc(NodeInit {
            key: x,
            kind: Kind::Del,
            id: self.next_id(),
            op,
            bits: self.bits,
            latest_next: inode.as_ptr(),
            del_pred,
            del_pred_node: p1.id,
        });
        inode.clear_latest_next(g);
        self.notify_pred_ops(inode, g);
        if !self.install(x, inode, dnode, op, g) {
            let h = self.head(x, g);
            self.help_activate(h, g);
            self.pall.remove(p1, g);
            return;
        }
        let dnode = unsafe { &*dnode };
        self.announce(dnode, g);
        self.activate(dnode);
        if let Some(t) = inode.target(g) {
            t.set_stop();
        }
        dnode.clear_latest_next(g);
        let (del_pred2, p2) = self.pred_helper(x, op, g);
        dnode.set_del_pred2(del_pred2);
        trie::delete_binary_trie(self, dnode, g);
        self.notify_pred_ops(dnode, g);
        dnode.set_completed();
        self.unannounce(dnode, g);
        self.pall.remove(p1, g);
        self.pall.remove(p2, g);
    }

    /// Active, first-activated update nodes in U-ALL with key below `x`.
    fn traverse_uall<'g>(&self, x: i64, g: &'g Guard) -> (Vec<&'g UpdateNode>, Vec<&'g UpdateNode>) {
        let (mut ins, mut dels) = (Vec::new(), Vec::new());
        for c in self.uall.iter(g) {
            if c.key() >= x {
                break;
            }
            let u: &'g UpdateNode = unsafe { &*(c.value().unwrap().get() as *const UpdateNode) };
            if u.is_active() && self.first_activated(u, g) {
                match u.kind {
                    Kind::Ins => push_unique(&mut ins, u),
                    Kind::Del => push_unique(&mut dels, u),
                }
            }
        }
        (ins, dels)
    }

    fn traverse_ruall<'g>(&self, p: &'g PredNode, op: u64, g: &'g Guard) -> (Vec<&'g UpdateNode>, Vec<&'g UpdateNode>) {
        let y = p.key as i64;
        let (mut ins, mut dels) = (Vec::new(), Vec::new());
        let mut cur: &'g Cell = unsafe { &*(p.position.read(g) as *const Cell) };
        loop {
            let (old, new) = unsafe { p.position.copy_from(cur.link(), !MARK, g) };
            let next: &'g Cell = unsafe { &*(new as *const Cell) };
            next.acquire();
            unsafe { (*(old as *const Cell)).release_deferred(g) };
            trace::emit(&self.tracer, op, Site::RuallCopy, p.key, next.key());
            cur = next;
            if cur.key() < y {
                if let Some(r) = cur.value() {
                    let u: &'g UpdateNode = unsafe { &*(r.get() as *const UpdateNode) };
                    if u.is_active() && self.first_activated(u, g) {
                        match u.kind {
                            Kind::Ins => push_unique(&mut ins, u),
                            Kind::Del => push_unique(&mut dels, u),
                        }
                    }
                }
            }
            if cur.key() == NEG_INF {
                break;
            }
        }
        (ins, dels)
    }

    fn notify_pred_ops(&self, u: &UpdateNode, g: &Guard) {
        let (ins, _) = self.traverse_uall(POS_INF, g);
        for p in self.pall.iter_from(None, g) {
            if !self.first_activated(u, g) {
                return;
            }
            let max = ins
                .iter()
                .filter(|n| n.key < p.key)
                .max_by_key(|n| n.key)
                .map(|n| (n.id, n.key));
            let pos = p.position.read(g) as *const Cell;
            let nn = NotifyNode {
                key: u.key,
                update: snapshot(u),
                max,
                threshold: unsafe { (*pos).key() },
            };
            if !p.notify.push(nn, || self.first_activated(u, g)).pushed {
                return;
            }
            trace::emit(&self.tracer, u.op, Site::Notify, u.key, p.id as i64);
        }
    }

    fn pred_helper<'g>(&self, y: u64, op: u64, g: &'g Guard) -> (i64, &'g Entry<PredNode>) {
        let head = self.ruall.head(g);
        head.acquire();
        let p = self.pall.push_front(
            PredNode {
                key: y,
                id: self.next_id(),
                position: CopyCell::new(head as *const Cell as usize),
                notify: PushList::new(),
            },
            g,
        );
        trace::emit(&self.tracer, op, Site::Announce, y, p.id as i64);
        let mut q: Vec<&'g Entry<PredNode>> = self.pall.iter_from(Some(p), g).collect();
        q.reverse();

        let (i_ruall, d_ruall) = self.traverse_ruall(p, op, g);
        let r0 = trie::relaxed_predecessor(self, y, g);
        trace::emit(
            &self.tracer,
            op,
            Site::RelaxedResult,
            y,
            match r0 {
                Relaxed::Key(k) => k,
                Relaxed::Bottom => -2,
            },
        );
        let (i_uall, d_uall) = self.traverse_uall(y as i64, g);

        let y = y as i64;
        let in_ruall = |id: u64| i_ruall.iter().chain(d_ruall.iter()).any(|u| u.id == id);
        let in_druall = |id: u64| d_ruall.iter().any(|u| u.id == id);
        let own: Vec<Notice> = p
            .notify
            .iter()
            .map(|n| Notice {
                key: n.key as i64,
                update: n.update,
                threshold: n.threshold,
            })
            .collect();

        let mut r1 = -1i64;
        for u in &i_uall {
            r1 = r1.max(u.key as i64);
        }
        for u in d_uall.iter().filter(|u| !in_druall(u.id)) {
            r1 = r1.max(u.key as i64);
        }
        for n in p.notify.iter().filter(|n| (n.key as i64) < y) {
            let k = n.key as i64;
            match n.update.kind {
                Kind::Ins if n.threshold <= k => r1 = r1.max(k),
                Kind::Del if n.threshold < k && !in_druall(n.update.id) => r1 = r1.max(k),
                _ => {}
            }
            if n.threshold == NEG_INF && !in_ruall(n.update.id) {
                if let Some((_, k)) = n.max {
                    r1 = r1.max(k as i64);
                }
            }
        }

        let r0 = match r0 {
            Relaxed::Key(k) => k,
            Relaxed::Bottom if !d_ruall.is_empty() => {
                let pred_ids: Vec<u64> = d_ruall.iter().map(|d| d.del_pred_node).collect();
                let earlier: Option<Vec<Notice>> = q.iter().find(|e| pred_ids.contains(&e.id)).map(|e| {
                    e.notify
                        .iter()
                        .map(|n| Notice {
                            key: n.key as i64,
                            update: n.update,
                            threshold: n.threshold,
                        })
                        .collect()
                });
                let l = recovery::build_l(y, earlier.as_deref(), &own);
                let dels: Vec<(i64, i64)> = d_ruall.iter().map(|d| (d.key as i64, d.del_pred)).collect();
                recovery::recover(&l, &dels)
            }
            Relaxed::Bottom => i64::MIN,
        };
        (r0.max(r1), p)
    }

    /// Interpreted bit of any node. Exact only at quiescence.
    pub fn interpreted_bit(&self, n: TrieNode) -> u8 {
        assert!(n.height <= self.bits && n.index < (1u64 << (self.bits - n.height)));
        let g = self.collector.pin();
        trie::interpreted_bit(self, n.heap(self.bits), &g)
    }

    /// Entries still linked in the three announcement lists.
    pub fn announcements(&self) -> Announcements {
        let g = self.collector.pin();
        Announcements {
            uall: self.uall.linked_len(&g),
            ruall: self.ruall.linked_len(&g),
            pall: self.pall.linked_len(&g),
        }
    }

    /// Items retired and not yet freed.
    pub fn pending_garbage(&self) -> u64 {
        self.collector.pending()
    }

    pub fn retired_total(&self) -> u64 {
        self.collector.retired_total()
    }

    /// Advances the epoch and frees everything retired so far.
    pub fn reclaim(&mut self) {
        self.collector.quiesce();
    }
}

impl Drop for LockFreeTrie {
    fn drop(&mut self) {
        self.collector.drain();
        for p in self.latest.iter_mut() {
            unsafe { node::release_now(*p.get_mut()) };
        }
        self.slots.release_all();
    }
}
