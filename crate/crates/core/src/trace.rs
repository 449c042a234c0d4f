//! Optional instrumentation callbacks.
//!
//! A hook receives one event per instrumented site. Timestamps come from a
//! per-structure counter, so events of one structure are totally ordered.
//! Hooks run inline on the calling thread; a hook that blocks suspends the
//! operation at that site, which tests use to script interleavings.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Arc;

use crate::prims::registry::thread_index;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Search,
    Insert,
    Delete,
    Predecessor,
    RelaxedPredecessor,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Search => "search",
            OpKind::Insert => "insert",
            OpKind::Delete => "delete",
            OpKind::Predecessor => "predecessor",
            OpKind::RelaxedPredecessor => "relaxed_predecessor",
        }
    }

    pub fn parse(s: &str) -> Option<OpKind> {
        Some(match s {
            "search" => OpKind::Search,
            "insert" => OpKind::Insert,
            "delete" => OpKind::Delete,
            "predecessor" => OpKind::Predecessor,
            "relaxed_predecessor" => OpKind::RelaxedPredecessor,
            _ => return None,
        })
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Site {
    /// First step of a public operation. `value` is unused.
    Invoke(OpKind),
    /// Last step of a public operation. `value` is the response: 0/1 for
    /// search, the key or -1 for predecessor, -2 for bottom, 0 otherwise.
    Respond(OpKind),
    /// Successful CAS installing a new node in `latest[key]`.
    LatestCas,
    /// Inactive to active transition of an update node; `op` is the
    /// creator's id even when a helper performs it.
    Activate,
    /// Successful CAS of a trie node's `dNodePtr`; `value` is its height.
    SlotCas,
    /// Write of `upper0Boundary`; `value` is the height written.
    Upper0,
    /// Min-write of `lower1Boundary`; `value` is the height.
    MinWrite,
    /// A predecessor announcement was pushed; `value` is its id.
    Announce,
    /// One atomic copy in the reverse announcement walk; `value` is the key
    /// now published (with +/- infinity as i64 extremes).
    RuallCopy,
    /// Relaxed trie traversal inside a predecessor; `value` as for Respond.
    RelaxedResult,
    /// A notification was delivered; `value` is the receiving announcement id.
    Notify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub op: u64,
    pub thread: usize,
    pub site: Site,
    pub key: u64,
    pub value: i64,
    pub ts: u64,
}

pub type TraceHook = Arc<dyn Fn(&TraceEvent) + Send + Sync>;

pub(crate) struct Tracer {
    hook: TraceHook,
    clock: AtomicU64,
    ops: AtomicU64,
}

impl Tracer {
    pub fn new(hook: TraceHook) -> Tracer {
        Tracer {
            hook,
            clock: AtomicU64::new(1),
            ops: AtomicU64::new(1),
        }
    }

    pub fn next_op(&self) -> u64 {
        self.ops.fetch_add(1, SeqCst)
    }

    pub fn emit(&self, op: u64, site: Site, key: u64, value: i64) {
        let ev = TraceEvent {
            op,
            thread: thread_index(),
            site,
            key,
            value,
            ts: self.clock.fetch_add(1, SeqCst),
        };
        (self.hook)(&ev);
    }
}

/// Shorthand used by both tries.
pub(crate) fn emit(t: &Option<Tracer>, op: u64, site: Site, key: u64, value: i64) {
    if let Some(t) = t {
        t.emit(op, site, key, value);
    }
}

pub(crate) fn begin(t: &Option<Tracer>, kind: OpKind, key: u64) -> u64 {
    match t {
        Some(t) => {
            let op = t.next_op();
            t.emit(op, Site::Invoke(kind), key, 0);
            op
        }
        None => 0,
    }
}
