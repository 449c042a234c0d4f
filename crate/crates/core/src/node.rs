//! Update nodes shared by the relaxed and lock-free tries.
//!
//! Nodes are reference counted. Every shared location holding a pointer
//! (latest slots, trie slots, `latest_next`, `target`, list cells) owns one
//! count. Counts are dropped through the epoch collector, so a node observed
//! while pinned stays allocated until the observer unpins. A thread may take
//! a new count on any node it reached while pinned.

use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicPtr, AtomicU32, AtomicU8, AtomicUsize, Ordering::SeqCst};

use crate::prims::{Guard, MinRegister};
use crate::steps;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Ins,
    Del,
}

const INACTIVE: u8 = 0;
const ACTIVE: u8 = 1;

/// Unset marker for `del_pred2`.
pub(crate) const UNSET: i64 = i64::MIN;

pub(crate) struct UpdateNode {
    pub key: u64,
    pub kind: Kind,
    /// Unique per structure; used instead of pointer identity wherever a
    /// node is referenced after it may have been freed.
    pub id: u64,
    /// Trace id of the operation that created the node.
    pub op: u64,
    pub del_pred: i64,
    pub del_pred_node: u64,
    status: AtomicU8,
    latest_next: AtomicPtr<UpdateNode>,
    target: AtomicPtr<UpdateNode>,
    stop: AtomicBool,
    completed: AtomicBool,
    upper0: AtomicU32,
    lower1: MinRegister,
    del_pred2: AtomicI64,
    refs: AtomicUsize,
}

pub(crate) struct NodeInit {
    pub key: u64,
    pub kind: Kind,
    pub id: u64,
    pub op: u64,
    pub bits: u32,
    pub latest_next: *mut UpdateNode,
    pub del_pred: i64,
    pub del_pred_node: u64,
}

impl UpdateNode {
    /// Allocates a node with no counted references. Takes a count on
    /// `latest_next` if non-null.
    pub fn alloc(init: NodeInit) -> *mut UpdateNode {
        if !init.latest_next.is_null() {
            unsafe { acquire(init.latest_next) };
        }
        Box::into_raw(Box::new(UpdateNode {
            key: init.key,
            kind: init.kind,
            id: init.id,
            op: init.op,
            del_pred: init.del_pred,
            del_pred_node: init.del_pred_node,
            status: AtomicU8::new(INACTIVE),
            latest_next: AtomicPtr::new(init.latest_next),
            target: AtomicPtr::new(ptr::null_mut()),
            stop: AtomicBool::new(false),
            completed: AtomicBool::new(false),
            upper0: AtomicU32::new(0),
            lower1: MinRegister::new(init.bits + 1),
            del_pred2: AtomicI64::new(UNSET),
            refs: AtomicUsize::new(0),
        }))
    }

    /// A permanently active DEL node whose interpreted bits are 0 on every
    /// level.
    pub fn alloc_dummy(key: u64, id: u64, bits: u32) -> *mut UpdateNode {
        let p = Self::alloc(NodeInit {
            key,
            kind: Kind::Del,
            id,
            op: 0,
            bits,
            latest_next: ptr::null_mut(),
            del_pred: -1,
            del_pred_node: 0,
        });
        let n = unsafe { &*p };
        n.status.store(ACTIVE, SeqCst);
        n.completed.store(true, SeqCst);
        n.upper0.store(bits, SeqCst);
        p
    }

    pub fn is_active(&self) -> bool {
        steps::read();
        self.status.load(SeqCst) == ACTIVE
    }

    /// Returns true for the call that performed the transition.
    pub fn activate(&self) -> bool {
        steps::write();
        self.status.swap(ACTIVE, SeqCst) == INACTIVE
    }

    pub fn latest_next<'g>(&self, _guard: &'g Guard) -> Option<&'g UpdateNode> {
        steps::read();
        unsafe { self.latest_next.load(SeqCst).as_ref() }
    }

    pub fn latest_next_ptr(&self) -> *mut UpdateNode {
        steps::read();
        self.latest_next.load(SeqCst)
    }

    /// Clears `latest_next`; the thread that observes the old value drops
    /// its count.
    pub fn clear_latest_next(&self, guard: &Guard) {
        steps::write();
        let old = self.latest_next.swap(ptr::null_mut(), SeqCst);
        if !old.is_null() {
            unsafe { release_deferred(old, guard) };
        }
    }

    pub fn target<'g>(&self, _guard: &'g Guard) -> Option<&'g UpdateNode> {
        steps::read();
        unsafe { self.target.load(SeqCst).as_ref() }
    }

    pub fn set_target(&self, t: &UpdateNode, guard: &Guard) {
        let p = t as *const UpdateNode as *mut UpdateNode;
        unsafe { acquire(p) };
        steps::write();
        let old = self.target.swap(p, SeqCst);
        if !old.is_null() {
            unsafe { release_deferred(old, guard) };
        }
    }

    pub fn stop(&self) -> bool {
        steps::read();
        self.stop.load(SeqCst)
    }

    pub fn set_stop(&self) {
        steps::write();
        self.stop.store(true, SeqCst);
    }

    pub fn completed(&self) -> bool {
        steps::read();
        self.completed.load(SeqCst)
    }

    pub fn set_completed(&self) {
        steps::write();
        self.completed.store(true, SeqCst);
    }

    pub fn upper0(&self) -> u32 {
        steps::read();
        self.upper0.load(SeqCst)
    }

    pub fn set_upper0(&self, h: u32) {
        steps::write();
        self.upper0.store(h, SeqCst);
    }

    pub fn lower1(&self) -> u32 {
        self.lower1.read()
    }

    pub fn min_write_lower1(&self, h: u32) {
        self.lower1.min_write(h);
    }

    pub fn del_pred2(&self) -> Option<i64> {
        steps::read();
        match self.del_pred2.load(SeqCst) {
            UNSET => None,
            v => Some(v),
        }
    }

    pub fn set_del_pred2(&self, v: i64) {
        steps::write();
        self.del_pred2.store(v, SeqCst);
    }

    /// `stop` on the target of `latest_next`, skipping nulls.
    pub fn help_stop_via_latest_next(&self, guard: &Guard) {
        if let Some(n) = self.latest_next(guard) {
            if let Some(t) = n.target(guard) {
                t.set_stop();
            }
        }
    }

    pub fn as_ptr(&self) -> *mut UpdateNode {
        self as *const UpdateNode as *mut UpdateNode
    }
}

/// # Safety
/// `p` must be live and reached through a counted reference while pinned,
/// or created by the caller.
pub(crate) unsafe fn acquire(p: *mut UpdateNode) {
    (*p).refs.fetch_add(1, SeqCst);
}

/// Drops one count now, freeing the node (and the counts it holds) at zero.
///
/// # Safety
/// The caller owns the count, and no thread may still read the node if
/// this is the last count.
pub(crate) unsafe fn release_now(p: *mut UpdateNode) {
    let mut stack = vec![p];
    while let Some(p) = stack.pop() {
        if (*p).refs.fetch_sub(1, SeqCst) != 1 {
            continue;
        }
        let b = Box::from_raw(p);
        for q in [b.latest_next.load(SeqCst), b.target.load(SeqCst)] {
            if !q.is_null() {
                stack.push(q);
            }
        }
    }
}

unsafe fn release_erased(p: *mut ()) {
    release_now(p as *mut UpdateNode)
}

/// Drops one count after a grace period.
///
/// # Safety
/// The caller owns the count.
pub(crate) unsafe fn release_deferred(p: *mut UpdateNode, guard: &Guard) {
    guard.defer(p as *mut (), release_erased);
}

/// A counted reference stored in a list cell.
pub(crate) struct NodeRef(*mut UpdateNode);

unsafe impl Send for NodeRef {}
unsafe impl Sync for NodeRef {}

impl NodeRef {
    pub fn new(n: &UpdateNode) -> NodeRef {
        unsafe { acquire(n.as_ptr()) };
        NodeRef(n.as_ptr())
    }

    pub fn get(&self) -> &UpdateNode {
        unsafe { &*self.0 }
    }

    pub fn is(&self, n: &UpdateNode) -> bool {
        ptr::eq(self.0, n)
    }
}

impl Drop for NodeRef {
    fn drop(&mut self) {
        unsafe { release_now(self.0) }
    }
}
