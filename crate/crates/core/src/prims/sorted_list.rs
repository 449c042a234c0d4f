//! Lock-free sorted linked list with marked links.
//!
//! Cells are refcounted: the list itself holds one reference, and outside
//! holders (a traversal position published in a `CopyCell`) may take more.
//! Unlinking drops the list's reference after a grace period; the cell is
//! freed when the count reaches zero. Equal keys keep insertion order.

use std::marker::PhantomData;
use std::sync::atomic::{AtomicUsize, Ordering::SeqCst};

use super::epoch::Guard;
use crate::steps;

pub const NEG_INF: i64 = i64::MIN;
pub const POS_INF: i64 = i64::MAX;

pub(crate) const MARK: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Ascending,
    Descending,
}

pub struct ListCell<T> {
    key: i64,
    value: Option<T>,
    next: AtomicUsize,
    refs: AtomicUsize,
}

impl<T> ListCell<T> {
    fn boxed(key: i64, value: Option<T>, next: usize) -> *mut ListCell<T> {
        Box::into_raw(Box::new(ListCell {
            key,
            value,
            next: AtomicUsize::new(next),
            refs: AtomicUsize::new(1),
        }))
    }

    pub fn key(&self) -> i64 {
        self.key
    }

    /// `None` for the two sentinels.
    pub fn value(&self) -> Option<&T> {
        self.value.as_ref()
    }

    pub fn is_sentinel(&self) -> bool {
        self.value.is_none()
    }

    /// The link word; the low bit is the deletion mark.
    pub fn link(&self) -> &AtomicUsize {
        &self.next
    }

    /// Successor and mark, as one shared read.
    pub fn next<'g>(&self, _guard: &'g Guard) -> (Option<&'g ListCell<T>>, bool) {
        steps::read();
        let w = self.next.load(SeqCst);
        let p = (w & !MARK) as *const ListCell<T>;
        (unsafe { p.as_ref() }, w & MARK != 0)
    }

    /// Takes an extra reference. The caller must have reached the cell
    /// through a live reference while pinned.
    pub fn acquire(&self) {
        self.refs.fetch_add(1, SeqCst);
    }

    /// Drops one reference after a grace period.
    ///
    /// # Safety
    /// The caller must own the reference being dropped.
    pub unsafe fn release_deferred(&self, guard: &Guard) {
        guard.defer(self as *const _ as *mut (), release_cell::<T>);
    }

    /// Drops one reference immediately.
    ///
    /// # Safety
    /// The caller must own the reference, and no thread may reach the cell
    /// through it afterwards.
    pub unsafe fn release_now(&self) {
        release_cell::<T>(self as *const _ as *mut ());
    }
}

unsafe fn release_cell<T>(p: *mut ()) {
    let cell = p as *mut ListCell<T>;
    if (*cell).refs.fetch_sub(1, SeqCst) == 1 {
        drop(Box::from_raw(cell));
    }
}

pub struct SortedList<T> {
    head: *mut ListCell<T>,
    tail: *mut ListCell<T>,
    order: Order,
    _own: PhantomData<T>,
}

unsafe impl<T: Send + Sync> Send for SortedList<T> {}
unsafe impl<T: Send + Sync> Sync for SortedList<T> {}

impl<T> SortedList<T> {
    pub fn new(order: Order) -> SortedList<T> {
        let (hk, tk) = match order {
            Order::Ascending => (NEG_INF, POS_INF),
            Order::Descending => (POS_INF, NEG_INF),
        };
        let tail = ListCell::boxed(tk, None, 0);
        let head = ListCell::boxed(hk, None, tail as usize);
        SortedList {
            head,
            tail,
            order,
            _own: PhantomData,
        }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn head<'g>(&self, _guard: &'g Guard) -> &'g ListCell<T> {
        unsafe { &*self.head }
    }

    pub fn tail<'g>(&self, _guard: &'g Guard) -> &'g ListCell<T> {
        unsafe { &*self.tail }
    }

    fn before(&self, a: i64, b: i64) -> bool {
        match self.order {
            Order::Ascending => a < b,
            Order::Descending => a > b,
        }
    }

    /// Walks to the first unmarked cell satisfying `stop`, or the tail,
    /// unlinking marked cells on the way. Returns (pred, curr).
    fn locate(
        &self,
        guard: &Guard,
        mut stop: impl FnMut(&ListCell<T>) -> bool,
    ) -> (*mut ListCell<T>, *mut ListCell<T>) {
        'retry: loop {
            let mut pred = self.head;
            steps::read();
            let mut curr = unsafe { (*pred).next.load(SeqCst) } as *mut ListCell<T>;
            loop {
                if curr == self.tail {
                    return (pred, curr);
                }
                let c = unsafe { &*curr };
                steps::read();
                let w = c.next.load(SeqCst);
                let succ = (w & !MARK) as *mut ListCell<T>;
                if w & MARK != 0 {
                    steps::cas();
                    let p = unsafe { &*pred };
                    if p.next
                        .compare_exchange(curr as usize, succ as usize, SeqCst, SeqCst)
                        .is_err()
                    {
                        continue 'retry;
                    }
                    unsafe { c.release_deferred(guard) };
                    curr = succ;
                    continue;
                }
                if stop(c) {
                    return (pred, curr);
                }
                pred = curr;
                curr = succ;
            }
        }
    }

    /// Inserts after all cells with an equal key.
    pub fn insert(&self, key: i64, value: T, guard: &Guard) {
        self.insert_unless(key, value, |_| false, guard);
    }

    /// Inserts unless an unmarked cell with the same key satisfies `dup`.
    /// Returns whether a cell was added.
    pub fn insert_unless(&self, key: i64, value: T, dup: impl Fn(&T) -> bool, guard: &Guard) -> bool {
        debug_assert!(key != NEG_INF && key != POS_INF);
        let new = ListCell::boxed(key, Some(value), 0);
        loop {
            let mut found = false;
            let (pred, curr) = self.locate(guard, |c| {
                if c.key == key && c.value.as_ref().is_some_and(&dup) {
                    found = true;
                    return true;
                }
                self.before(key, c.key)
            });
            if found {
                drop(unsafe { Box::from_raw(new) });
                return false;
            }
            unsafe { (*new).next.store(curr as usize, SeqCst) };
            steps::cas();
            let p = unsafe { &*pred };
            if p.next
                .compare_exchange(curr as usize, new as usize, SeqCst, SeqCst)
                .is_ok()
            {
                return true;
            }
        }
    }

    /// Logically and physically removes every cell with `key` whose value
    /// satisfies `matches`. Returns whether this call marked any cell.
    pub fn remove_all(&self, key: i64, matches: impl Fn(&T) -> bool, guard: &Guard) -> bool {
        let mut removed = false;
        loop {
            let hit = |c: &ListCell<T>| c.key == key && c.value.as_ref().is_some_and(&matches);
            let (pred, curr) = self.locate(guard, |c| hit(c) || self.before(key, c.key));
            if curr == self.tail || !hit(unsafe { &*curr }) {
                return removed;
            }
            let c = unsafe { &*curr };
            steps::write();
            let w = c.next.fetch_or(MARK, SeqCst);
            if w & MARK == 0 {
                removed = true;
            }
            let succ = w & !MARK;
            steps::cas();
            let p = unsafe { &*pred };
            if p.next.compare_exchange(curr as usize, succ, SeqCst, SeqCst).is_ok() {
                unsafe { c.release_deferred(guard) };
            }
        }
    }

    /// Unmarked non-sentinel cells in list order.
    pub fn iter<'g>(&self, guard: &'g Guard) -> Iter<'g, T> {
        Iter {
            curr: unsafe { (*self.head).next.load(SeqCst) } as *const ListCell<T>,
            tail: self.tail,
            guard,
        }
    }

    /// Number of non-sentinel cells still linked, marked or not.
    pub fn linked_len(&self, _guard: &Guard) -> usize {
        let mut n = 0;
        let mut c = unsafe { (*self.head).next.load(SeqCst) } & !MARK;
        while c != self.tail as usize {
            n += 1;
            c = unsafe { (*(c as *const ListCell<T>)).next.load(SeqCst) } & !MARK;
        }
        n
    }
}

impl<T> Drop for SortedList<T> {
    fn drop(&mut self) {
        let mut c = self.head;
        while !c.is_null() {
            let next = unsafe { (*c).next.load(SeqCst) } & !MARK;
            drop(unsafe { Box::from_raw(c) });
            c = next as *mut ListCell<T>;
        }
    }
}

pub struct Iter<'g, T> {
    curr: *const ListCell<T>,
    tail: *const ListCell<T>,
    guard: &'g Guard<'g>,
}

impl<'g, T: 'g> Iterator for Iter<'g, T> {
    type Item = &'g ListCell<T>;

    fn next(&mut self) -> Option<&'g ListCell<T>> {
        let _ = self.guard;
        while self.curr != self.tail {
            let c = unsafe { &*self.curr };
            steps::read();
            let w = c.next.load(SeqCst);
            self.curr = (w & !MARK) as *const ListCell<T>;
            if w & MARK == 0 {
                return Some(c);
            }
        }
        None
    }
}

impl<T> SortedList<T> {
    #[doc(hidden)]
    pub fn head_ptr(&self) -> *const ListCell<T> {
        self.head
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prims::epoch::Collector;

    fn keys(l: &SortedList<u32>, c: &Collector) -> Vec<(i64, u32)> {
        let g = c.pin();
        l.iter(&g).map(|x| (x.key(), *x.value().unwrap())).collect()
    }

    #[test]
    fn ascending_order() {
        let c = Collector::new();
        let l = SortedList::new(Order::Ascending);
        let g = c.pin();
        for k in [3, 1, 2] {
            l.insert(k, k as u32, &g);
        }
        drop(g);
        assert_eq!(keys(&l, &c), vec![(1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn descending_order() {
        let c = Collector::new();
        let l = SortedList::new(Order::Descending);
        let g = c.pin();
        for k in [3, 1, 2] {
            l.insert(k, 0, &g);
        }
        drop(g);
        let ks: Vec<i64> = keys(&l, &c).into_iter().map(|x| x.0).collect();
        assert_eq!(ks, vec![3, 2, 1]);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let c = Collector::new();
        let l = SortedList::new(Order::Ascending);
        let g = c.pin();
        l.insert(7, 1, &g);
        l.insert(7, 2, &g);
        l.insert(5, 0, &g);
        drop(g);
        assert_eq!(keys(&l, &c), vec![(5, 0), (7, 1), (7, 2)]);
    }

    #[test]
    fn insert_unless_skips_duplicates() {
        let c = Collector::new();
        let l = SortedList::new(Order::Ascending);
        let g = c.pin();
        assert!(l.insert_unless(4, 9, |v| *v == 9, &g));
        assert!(!l.insert_unless(4, 9, |v| *v == 9, &g));
        assert!(l.insert_unless(4, 8, |v| *v == 8, &g));
        drop(g);
        assert_eq!(keys(&l, &c), vec![(4, 9), (4, 8)]);
    }

    #[test]
    fn remove_all_matching() {
        let c = Collector::new();
        let l = SortedList::new(Order::Ascending);
        let g = c.pin();
        l.insert(4, 1, &g);
        l.insert(4, 2, &g);
        l.insert(4, 1, &g);
        assert!(l.remove_all(4, |v| *v == 1, &g));
        assert!(!l.remove_all(4, |v| *v == 1, &g));
        assert_eq!(l.linked_len(&g), 1);
        drop(g);
        assert_eq!(keys(&l, &c), vec![(4, 2)]);
    }
}
