//! Lists that only grow at the head.
//!
//! `PushList` is insert-only: nodes are never unlinked and are freed with the
//! list. `AnnounceList` also supports removal of arbitrary entries, using a
//! marked link and helping unlinks; removed entries are retired through the
//! epoch collector.

use std::marker::PhantomData;
use std::ops::Deref;
use std::ptr;
use std::sync::atomic::{AtomicPtr, AtomicUsize, Ordering::SeqCst};

use super::epoch::Guard;
use super::sorted_list::MARK;
use crate::steps;

pub struct PushNode<T> {
    value: T,
    next: AtomicPtr<PushNode<T>>,
}

impl<T> PushNode<T> {
    pub fn value(&self) -> &T {
        &self.value
    }
}

pub struct PushList<T> {
    head: AtomicPtr<PushNode<T>>,
}

unsafe impl<T: Send + Sync> Send for PushList<T> {}
unsafe impl<T: Send + Sync> Sync for PushList<T> {}

impl<T> Default for PushList<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of [`PushList::push`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PushOutcome {
    pub pushed: bool,
    pub failed_cas: usize,
}

impl<T> PushList<T> {
    pub fn new() -> PushList<T> {
        PushList {
            head: AtomicPtr::new(ptr::null_mut()),
        }
    }

    /// Retries a head CAS until it succeeds or `guard_fn`, checked before
    /// every attempt, returns false. On failure the value is dropped.
    pub fn push(&self, value: T, mut guard_fn: impl FnMut() -> bool) -> PushOutcome {
        let node = Box::into_raw(Box::new(PushNode {
            value,
            next: AtomicPtr::new(ptr::null_mut()),
        }));
        let mut failed_cas = 0;
        loop {
            steps::read();
            let h = self.head.load(SeqCst);
            unsafe { (*node).next.store(h, SeqCst) };
            if !guard_fn() {
                drop(unsafe { Box::from_raw(node) });
                return PushOutcome {
                    pushed: false,
                    failed_cas,
                };
            }
            steps::cas();
            if self.head.compare_exchange(h, node, SeqCst, SeqCst).is_ok() {
                return PushOutcome {
                    pushed: true,
                    failed_cas,
                };
            }
            failed_cas += 1;
        }
    }

    /// Newest first.
    pub fn iter(&self) -> PushIter<'_, T> {
        steps::read();
        PushIter {
            curr: self.head.load(SeqCst),
            _list: self,
        }
    }
}

impl<T> Drop for PushList<T> {
    fn drop(&mut self) {
        let mut c = *self.head.get_mut();
        while !c.is_null() {
            let b = unsafe { Box::from_raw(c) };
            c = b.next.load(SeqCst);
        }
    }
}

pub struct PushIter<'a, T> {
    curr: *mut PushNode<T>,
    _list: &'a PushList<T>,
}

impl<'a, T> Iterator for PushIter<'a, T> {
    type Item = &'a T;

    fn next(&mut self) -> Option<&'a T> {
        if self.curr.is_null() {
            return None;
        }
        let n = unsafe { &*self.curr };
        self.curr = n.next.load(SeqCst);
        Some(&n.value)
    }
}

pub struct Entry<T> {
    value: T,
    next: AtomicUsize,
}

impl<T> Deref for Entry<T> {
    type Target = T;
    fn deref(&self) -> &T {
        &self.value
    }
}

impl<T> Entry<T> {
    pub fn is_removed(&self) -> bool {
        self.next.load(SeqCst) & MARK != 0
    }
}

pub struct AnnounceList<T> {
    head: AtomicUsize,
    _own: PhantomData<Box<Entry<T>>>,
}

unsafe impl<T: Send + Sync> Send for AnnounceList<T> {}
unsafe impl<T: Send + Sync> Sync for AnnounceList<T> {}

impl<T> Default for AnnounceList<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> AnnounceList<T> {
    pub fn new() -> AnnounceList<T> {
        AnnounceList {
            head: AtomicUsize::new(0),
            _own: PhantomData,
        }
    }

    pub fn push_front<'g>(&self, value: T, _guard: &'g Guard) -> &'g Entry<T> {
        let e = Box::into_raw(Box::new(Entry {
            value,
            next: AtomicUsize::new(0),
        }));
        loop {
            steps::read();
            let h = self.head.load(SeqCst);
            unsafe { (*e).next.store(h, SeqCst) };
            steps::cas();
            if self.head.compare_exchange(h, e as usize, SeqCst, SeqCst).is_ok() {
                return unsafe { &*e };
            }
        }
    }

    /// Marks `entry` removed and unlinks it. Returns false if it was already
    /// marked.
    pub fn remove(&self, entry: &Entry<T>, guard: &Guard) -> bool {
        steps::write();
        let w = entry.next.fetch_or(MARK, SeqCst);
        if w & MARK != 0 {
            return false;
        }
        self.purge(entry as *const Entry<T> as usize, guard);
        true
    }

    fn purge(&self, target: usize, guard: &Guard) {
        'retry: loop {
            let mut pred: &AtomicUsize = &self.head;
            steps::read();
            let mut curr = pred.load(SeqCst);
            while curr != 0 {
                let c = unsafe { &*(curr as *const Entry<T>) };
                steps::read();
                let w = c.next.load(SeqCst);
                let succ = w & !MARK;
                if w & MARK != 0 {
                    steps::cas();
                    if pred.compare_exchange(curr, succ, SeqCst, SeqCst).is_err() {
                        continue 'retry;
                    }
                    unsafe { guard.defer_drop(curr as *mut Entry<T>) };
                    if curr == target {
                        return;
                    }
                    curr = succ;
                    continue;
                }
                pred = &c.next;
                curr = succ;
            }
            return;
        }
    }

    /// Entries after `from` (or from the head), newest first, skipping
    /// removed ones.
    pub fn iter_from<'g>(&self, from: Option<&'g Entry<T>>, _guard: &'g Guard) -> AnnounceIter<'g, T> {
        steps::read();
        let curr = match from {
            Some(e) => e.next.load(SeqCst) & !MARK,
            None => self.head.load(SeqCst),
        };
        AnnounceIter { curr, _g: PhantomData }
    }

    /// Entries still linked, including marked ones.
    pub fn linked_len(&self, _guard: &Guard) -> usize {
        let mut n = 0;
        let mut c = self.head.load(SeqCst);
        while c != 0 {
            n += 1;
            c = unsafe { (*(c as *const Entry<T>)).next.load(SeqCst) } & !MARK;
        }
        n
    }
}

impl<T> Drop for AnnounceList<T> {
    fn drop(&mut self) {
        let mut c = *self.head.get_mut();
        while c != 0 {
            let b = unsafe { Box::from_raw(c as *mut Entry<T>) };
            c = b.next.load(SeqCst) & !MARK;
        }
    }
}

pub struct AnnounceIter<'g, T> {
    curr: usize,
    _g: PhantomData<&'g Entry<T>>,
}

impl<'g, T: 'g> Iterator for AnnounceIter<'g, T> {
    type Item = &'g Entry<T>;

    fn next(&mut self) -> Option<&'g Entry<T>> {
        while self.curr != 0 {
            let e = unsafe { &*(self.curr as *const Entry<T>) };
            steps::read();
            let w = e.next.load(SeqCst);
            self.curr = w & !MARK;
            if w & MARK == 0 {
                return Some(e);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prims::epoch::Collector;

    #[test]
    fn push_reverses() {
        let l = PushList::new();
        for i in 0..3 {
            assert!(l.push(i, || true).pushed);
        }
        assert_eq!(l.iter().copied().collect::<Vec<_>>(), vec![2, 1, 0]);
    }

    #[test]
    fn failed_guard_leaves_list_unchanged() {
        let l = PushList::new();
        let out = l.push(1, || false);
        assert!(!out.pushed);
        assert_eq!(l.iter().count(), 0);
    }

    #[test]
    fn announce_remove() {
        let c = Collector::new();
        let l = AnnounceList::new();
        let g = c.pin();
        let a = l.push_front(1, &g);
        let b = l.push_front(2, &g);
        let _c3 = l.push_front(3, &g);
        assert!(l.remove(b, &g));
        assert!(!l.remove(b, &g));
        assert_eq!(l.iter_from(None, &g).map(|e| **e).collect::<Vec<_>>(), vec![3, 1]);
        assert!(l.remove(a, &g));
        assert_eq!(l.linked_len(&g), 1);
    }
}
