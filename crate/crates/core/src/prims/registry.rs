//! Process-wide recycled thread indices.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Upper bound on simultaneously live threads that touch any structure.
pub const MAX_THREADS: usize = 256;

static NEXT: AtomicUsize = AtomicUsize::new(0);
static FREE: Mutex<Vec<usize>> = Mutex::new(Vec::new());

struct Slot(usize);

impl Slot {
    fn acquire() -> Slot {
        if let Some(i) = FREE.lock().unwrap().pop() {
            return Slot(i);
        }
        let i = NEXT.fetch_add(1, Ordering::Relaxed);
        assert!(i < MAX_THREADS, "more than {MAX_THREADS} live threads");
        Slot(i)
    }
}

impl Drop for Slot {
    fn drop(&mut self) {
        if let Ok(mut free) = FREE.lock() {
            free.push(self.0);
        }
    }
}

thread_local! {
    static SLOT: Slot = Slot::acquire();
}

/// Index of the calling thread, unique among live threads.
pub fn thread_index() -> usize {
    SLOT.with(|s| s.0)
}

/// One past the largest index handed out so far.
pub fn high_water() -> usize {
    NEXT.load(Ordering::Relaxed)
}
