//! Epoch-based reclamation.
//!
//! One `Collector` per data structure. Each thread announces the global epoch
//! it observed when it pins; the epoch advances only when every pinned thread
//! has announced the current value. Garbage is tagged with the global epoch
//! at retirement and freed once the epoch has moved two steps past it.

use std::cell::UnsafeCell;
use std::collections::VecDeque;
use std::marker::PhantomData;
use std::sync::atomic::{fence, AtomicU64, Ordering::SeqCst};

use super::registry::{high_water, thread_index, MAX_THREADS};

const PINS_PER_ADVANCE: u64 = 64;
const BAG_SOFT_LIMIT: usize = 256;

struct Garbage {
    epoch: u64,
    ptr: *mut (),
    free: unsafe fn(*mut ()),
}

#[derive(Default)]
struct Local {
    depth: usize,
    pins: u64,
    bag: VecDeque<Garbage>,
}

#[repr(align(128))]
struct Participant {
    // (epoch << 1) | pinned
    announce: AtomicU64,
    local: UnsafeCell<Local>,
}

pub struct Collector {
    epoch: AtomicU64,
    participants: Box<[Participant]>,
    retired: AtomicU64,
    reclaimed: AtomicU64,
}

// Participant-local state is only touched by the thread owning that index,
// or under `&mut Collector`.
unsafe impl Send for Collector {}
unsafe impl Sync for Collector {}

/// Keeps the calling thread pinned; shared memory read while the guard lives
/// is not reclaimed. Guards nest and are tied to the pinning thread.
pub struct Guard<'c> {
    collector: &'c Collector,
    idx: usize,
    _not_send: PhantomData<*const ()>,
}

impl Default for Collector {
    fn default() -> Self {
        Self::new()
    }
}

impl Collector {
    pub fn new() -> Collector {
        let participants = (0..MAX_THREADS)
            .map(|_| Participant {
                announce: AtomicU64::new(0),
                local: UnsafeCell::new(Local::default()),
            })
            .collect();
        Collector {
            epoch: AtomicU64::new(0),
            participants,
            retired: AtomicU64::new(0),
            reclaimed: AtomicU64::new(0),
        }
    }

    #[allow(clippy::mut_from_ref)]
    unsafe fn local(&self, idx: usize) -> &mut Local {
        &mut *self.participants[idx].local.get()
    }

    pub fn pin(&self) -> Guard<'_> {
        let idx = thread_index();
        let first = unsafe {
            let l = self.local(idx);
            l.depth += 1;
            l.depth == 1
        };
        if first {
            let e = self.epoch.load(SeqCst);
            self.participants[idx].announce.store((e << 1) | 1, SeqCst);
            fence(SeqCst);
            let pins = unsafe {
                let l = self.local(idx);
                l.pins += 1;
                l.pins
            };
            if pins % PINS_PER_ADVANCE == 0 {
                self.try_advance();
                self.collect(idx);
            }
        }
        Guard {
            collector: self,
            idx,
            _not_send: PhantomData,
        }
    }

    /// Current global epoch.
    pub fn epoch(&self) -> u64 {
        self.epoch.load(SeqCst)
    }

    /// Advances the global epoch if every pinned thread has observed it.
    pub fn try_advance(&self) -> bool {
        let g = self.epoch.load(SeqCst);
        let n = high_water().min(MAX_THREADS);
        for p in &self.participants[..n] {
            let a = p.announce.load(SeqCst);
            if a & 1 == 1 && a >> 1 != g {
                return false;
            }
        }
        self.epoch.compare_exchange(g, g + 1, SeqCst, SeqCst).is_ok()
    }

    fn collect(&self, idx: usize) {
        let g = self.epoch.load(SeqCst);
        loop {
            // The borrow ends before the destructor runs, which may retire.
            let item = unsafe {
                let l = self.local(idx);
                match l.bag.front() {
                    Some(item) if item.epoch + 2 <= g => l.bag.pop_front(),
                    _ => None,
                }
            };
            match item {
                Some(item) => {
                    unsafe { (item.free)(item.ptr) };
                    self.reclaimed.fetch_add(1, SeqCst);
                }
                None => break,
            }
        }
    }

    /// Number of retired items not yet freed.
    pub fn pending(&self) -> u64 {
        self.retired.load(SeqCst) - self.reclaimed.load(SeqCst)
    }

    pub fn retired_total(&self) -> u64 {
        self.retired.load(SeqCst)
    }

    /// Frees every item whose grace period has passed, in all bags.
    /// Exclusive access guarantees no thread is pinned.
    pub fn collect_all(&mut self) {
        let g = self.epoch.load(SeqCst);
        for idx in 0..MAX_THREADS {
            loop {
                let item = {
                    let l = self.participants[idx].local.get_mut();
                    match l.bag.front() {
                        Some(item) if item.epoch + 2 <= g => l.bag.pop_front(),
                        _ => None,
                    }
                };
                match item {
                    Some(item) => {
                        unsafe { (item.free)(item.ptr) };
                        self.reclaimed.fetch_add(1, SeqCst);
                    }
                    None => break,
                }
            }
        }
    }

    /// Advances twice and drains every bag. Freed items may retire more
    /// garbage, so this repeats until nothing is pending.
    pub fn quiesce(&mut self) {
        while self.pending() > 0 {
            let before = self.pending();
            self.try_advance();
            self.try_advance();
            self.collect_all();
            if self.pending() == before {
                break;
            }
        }
    }
}

impl Collector {
    /// Frees everything retired, regardless of epochs. Exclusive access
    /// guarantees no thread is pinned. Repeats while destructors retire more.
    pub fn drain(&mut self) {
        loop {
            let mut any = false;
            for idx in 0..MAX_THREADS {
                while let Some(item) = self.participants[idx].local.get_mut().bag.pop_front() {
                    any = true;
                    unsafe { (item.free)(item.ptr) };
                    self.reclaimed.fetch_add(1, SeqCst);
                }
            }
            if !any {
                break;
            }
        }
    }
}

impl Drop for Collector {
    fn drop(&mut self) {
        self.drain();
    }
}

impl<'c> Guard<'c> {
    pub fn collector(&self) -> &'c Collector {
        self.collector
    }

    /// Schedules `free(ptr)` for after every currently pinned thread unpins.
    ///
    /// # Safety
    /// `ptr` must be unreachable for threads that pin after this call, and
    /// `free` must be sound to call once on it from any thread.
    pub unsafe fn defer(&self, ptr: *mut (), free: unsafe fn(*mut ())) {
        let c = self.collector;
        let epoch = c.epoch.load(SeqCst);
        let len = {
            let l = c.local(self.idx);
            l.bag.push_back(Garbage { epoch, ptr, free });
            l.bag.len()
        };
        c.retired.fetch_add(1, SeqCst);
        if len > BAG_SOFT_LIMIT {
            c.try_advance();
            c.collect(self.idx);
        }
    }

    /// Retires a boxed value.
    ///
    /// # Safety
    /// As for [`Guard::defer`]; `ptr` must come from `Box::into_raw`.
    pub unsafe fn defer_drop<T>(&self, ptr: *mut T) {
        unsafe fn drop_box<T>(p: *mut ()) {
            drop(Box::from_raw(p as *mut T));
        }
        self.defer(ptr as *mut (), drop_box::<T>);
    }

    /// Re-announces the current epoch if no outer guard is live, letting a
    /// long-running thread stop holding back reclamation.
    pub fn repin(&mut self) {
        let c = self.collector;
        let depth = unsafe { c.local(self.idx).depth };
        if depth == 1 {
            let e = c.epoch.load(SeqCst);
            c.participants[self.idx].announce.store((e << 1) | 1, SeqCst);
            fence(SeqCst);
        }
    }
}

impl Drop for Guard<'_> {
    fn drop(&mut self) {
        let c = self.collector;
        let last = unsafe {
            let l = c.local(self.idx);
            l.depth -= 1;
            l.depth == 0
        };
        if last {
            let p = &c.participants[self.idx];
            let a = p.announce.load(SeqCst);
            p.announce.store(a & !1, SeqCst);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    static FREED: AtomicUsize = AtomicUsize::new(0);

    unsafe fn count_free(p: *mut ()) {
        drop(Box::from_raw(p as *mut u64));
        FREED.fetch_add(1, SeqCst);
    }

    #[test]
    fn reclaimed_after_two_advances() {
        let mut c = Collector::new();
        {
            let g = c.pin();
            unsafe { g.defer(Box::into_raw(Box::new(7u64)) as *mut (), count_free) };
        }
        assert_eq!(c.pending(), 1);
        assert!(c.try_advance());
        c.collect_all();
        assert_eq!(c.pending(), 1);
        assert!(c.try_advance());
        c.collect_all();
        assert_eq!(c.pending(), 0);
    }

    #[test]
    fn pinned_reader_blocks_reclamation() {
        let c = Arc::new(Collector::new());
        let (tx, rx) = std::sync::mpsc::channel();
        let (done_tx, done_rx) = std::sync::mpsc::channel::<()>();
        let c2 = c.clone();
        let reader = std::thread::spawn(move || {
            let _g = c2.pin();
            tx.send(()).unwrap();
            done_rx.recv().unwrap();
        });
        rx.recv().unwrap();
        {
            let g = c.pin();
            unsafe { g.defer_drop(Box::into_raw(Box::new(1u32))) };
        }
        for _ in 0..10 {
            c.try_advance();
        }
        assert_eq!(c.pending(), 1);
        done_tx.send(()).unwrap();
        reader.join().unwrap();
        let mut c = Arc::try_unwrap(c).ok().unwrap();
        c.quiesce();
        assert_eq!(c.pending(), 0);
    }

    #[test]
    fn guards_nest() {
        let c = Collector::new();
        let g1 = c.pin();
        let g2 = c.pin();
        drop(g1);
        assert!(c.try_advance());
        assert!(!c.try_advance());
        drop(g2);
        assert!(c.try_advance());
    }
}
