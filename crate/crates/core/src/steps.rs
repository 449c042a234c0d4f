//! Per-thread shared-memory step counters.
//!
//! A step is one atomic access (load, store, swap, CAS or fetch-and) on a
//! mutable shared word. Reads of immutable fields are not counted. Counters
//! are thread-local so instrumentation never adds contention.

use std::cell::Cell;

/// Routines whose worst-case step counts are tracked separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Section {
    InsertBinaryTrie,
    DeleteBinaryTrie,
    RelaxedPredecessor,
}

/// A snapshot of the calling thread's counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub reads: u64,
    pub writes: u64,
    pub cas: u64,
}

impl StepCounts {
    pub fn total(&self) -> u64 {
        self.reads + self.writes + self.cas
    }

    pub fn since(&self, earlier: &StepCounts) -> StepCounts {
        StepCounts {
            reads: self.reads - earlier.reads,
            writes: self.writes - earlier.writes,
            cas: self.cas - earlier.cas,
        }
    }
}

/// Largest step count observed for each tracked routine on this thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SectionMax {
    pub insert_binary_trie: u64,
    pub delete_binary_trie: u64,
    pub relaxed_predecessor: u64,
}

impl SectionMax {
    pub fn merge(&mut self, other: &SectionMax) {
        self.insert_binary_trie = self.insert_binary_trie.max(other.insert_binary_trie);
        self.delete_binary_trie = self.delete_binary_trie.max(other.delete_binary_trie);
        self.relaxed_predecessor = self.relaxed_predecessor.max(other.relaxed_predecessor);
    }
}

thread_local! {
    static COUNTS: Cell<StepCounts> = const { Cell::new(StepCounts { reads: 0, writes: 0, cas: 0 }) };
    static MAXES: Cell<SectionMax> = const { Cell::new(SectionMax {
        insert_binary_trie: 0,
        delete_binary_trie: 0,
        relaxed_predecessor: 0,
    }) };
}

#[inline]
pub(crate) fn read() {
    COUNTS.with(|c| {
        let mut v = c.get();
        v.reads += 1;
        c.set(v);
    });
}

#[inline]
pub(crate) fn write() {
    COUNTS.with(|c| {
        let mut v = c.get();
        v.writes += 1;
        c.set(v);
    });
}

#[inline]
pub(crate) fn cas() {
    COUNTS.with(|c| {
        let mut v = c.get();
        v.cas += 1;
        c.set(v);
    });
}

/// Returns the calling thread's cumulative counters.
pub fn snapshot() -> StepCounts {
    COUNTS.with(|c| c.get())
}

/// Returns the per-routine maxima observed on the calling thread.
pub fn section_max() -> SectionMax {
    MAXES.with(|m| m.get())
}

/// Clears the calling thread's counters and maxima.
pub fn reset() {
    COUNTS.with(|c| c.set(StepCounts::default()));
    MAXES.with(|m| m.set(SectionMax::default()));
}

/// Runs `f` and folds its step count into the maximum for `section`.
#[inline]
pub(crate) fn measure<R>(section: Section, f: impl FnOnce() -> R) -> R {
    let before = snapshot().total();
    let r = f();
    let used = snapshot().total() - before;
    MAXES.with(|m| {
        let mut v = m.get();
        let slot = match section {
            Section::InsertBinaryTrie => &mut v.insert_binary_trie,
            Section::DeleteBinaryTrie => &mut v.delete_binary_trie,
            Section::RelaxedPredecessor => &mut v.relaxed_predecessor,
        };
        *slot = (*slot).max(used);
        m.set(v);
    });
    r
}
