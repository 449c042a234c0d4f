//! Single-writer atomic copy.
//!
//! The owner copies a source word into the cell by first installing a
//! descriptor that names the source. Anyone who reads the cell while a
//! descriptor is installed resolves it: the first resolver to fix the
//! descriptor's value decides what was copied, and that read of the source is
//! the copy's linearization point. Values must have the low bit clear.

use std::sync::atomic::{AtomicUsize, Ordering::SeqCst};

use super::epoch::Guard;
use crate::steps;

const DESC: usize = 1;
const UNSET: usize = usize::MAX;

struct Descriptor {
    src: *const AtomicUsize,
    mask: usize,
    value: AtomicUsize,
}

pub struct CopyCell {
    word: AtomicUsize,
}

impl CopyCell {
    pub fn new(value: usize) -> CopyCell {
        assert_eq!(value & DESC, 0, "copy cell values must have the low bit clear");
        CopyCell {
            word: AtomicUsize::new(value),
        }
    }

    /// Resolves `d` and tries to swing the cell from `d` to the result.
    fn help(&self, w: usize, guard: &Guard) -> usize {
        let _ = guard;
        let d = unsafe { &*((w & !DESC) as *const Descriptor) };
        steps::read();
        let mut v = d.value.load(SeqCst);
        if v == UNSET {
            steps::read();
            let s = unsafe { (*d.src).load(SeqCst) } & d.mask;
            steps::cas();
            v = match d.value.compare_exchange(UNSET, s, SeqCst, SeqCst) {
                Ok(_) => s,
                Err(now) => now,
            };
        }
        steps::cas();
        let _ = self.word.compare_exchange(w, v, SeqCst, SeqCst);
        v
    }

    /// Current value with exclusive access; no copy can be in progress.
    pub fn get_mut(&mut self) -> usize {
        let w = *self.word.get_mut();
        debug_assert_eq!(w & DESC, 0);
        w
    }

    /// Current value. Any thread may call this.
    pub fn read(&self, guard: &Guard) -> usize {
        steps::read();
        let w = self.word.load(SeqCst);
        if w & DESC == 0 {
            w
        } else {
            self.help(w, guard)
        }
    }

    /// Copies `*src & mask` into the cell atomically and returns the
    /// previous and new values. The copied value's low bit must be clear.
    ///
    /// # Safety
    /// Only one thread may ever call `copy_from` on a given cell, and `src`
    /// must stay valid until the call returns and while any thread pinned
    /// before the return could still be resolving it.
    pub unsafe fn copy_from(&self, src: &AtomicUsize, mask: usize, guard: &Guard) -> (usize, usize) {
        let p = self.begin_copy(src, mask);
        self.finish_copy(p, guard)
    }

    /// First half of `copy_from`: publishes the descriptor. Until
    /// `finish_copy`, any reader resolves the copy. Exposed so tests can
    /// script interleavings between the two halves.
    ///
    /// # Safety
    /// As for `copy_from`; every `begin_copy` must be followed by exactly
    /// one `finish_copy` before the next.
    pub unsafe fn begin_copy(&self, src: &AtomicUsize, mask: usize) -> PendingCopy {
        steps::read();
        let old = self.word.load(SeqCst);
        debug_assert_eq!(old & DESC, 0);
        let d = Box::into_raw(Box::new(Descriptor {
            src: src as *const AtomicUsize,
            mask: mask & !DESC,
            value: AtomicUsize::new(UNSET),
        }));
        steps::write();
        self.word.store(d as usize | DESC, SeqCst);
        PendingCopy { old, desc: d }
    }

    /// Second half of `copy_from`; returns (previous, copied).
    ///
    /// # Safety
    /// `p` must come from `begin_copy` on this cell.
    pub unsafe fn finish_copy(&self, p: PendingCopy, guard: &Guard) -> (usize, usize) {
        let v = self.help(p.desc as usize | DESC, guard);
        guard.defer_drop(p.desc);
        (p.old, v)
    }
}

/// A copy whose descriptor is published but not yet retired.
#[must_use]
pub struct PendingCopy {
    old: usize,
    desc: *mut Descriptor,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prims::epoch::Collector;

    #[test]
    fn quiescent_copy() {
        let c = Collector::new();
        let g = c.pin();
        let cell = CopyCell::new(8);
        let src = AtomicUsize::new(40 | 1);
        let (old, new) = unsafe { cell.copy_from(&src, !1, &g) };
        assert_eq!((old, new), (8, 40));
        assert_eq!(cell.read(&g), 40);
    }
}
