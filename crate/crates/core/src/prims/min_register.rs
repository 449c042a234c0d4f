//! Bounded min-registers.
//!
//! `MinRegister` stores value v as the thermometer word 2^v - 1, so a
//! min-write is one fetch-AND and a read is a popcount. `CasMinRegister` is
//! the straightforward CAS-loop version, kept as a reference.

use std::sync::atomic::{AtomicU64, Ordering::SeqCst};

use crate::steps;

/// Largest bound representable by the thermometer encoding.
pub const MAX_BOUND: u32 = 64;

/// Common interface of the two implementations.
pub trait MinReg: Send + Sync {
    fn new(bound: u32) -> Self
    where
        Self: Sized;
    fn bound(&self) -> u32;
    fn min_write(&self, v: u32);
    fn read(&self) -> u32;
}

#[inline]
pub fn encode(v: u32) -> u64 {
    if v >= 64 {
        u64::MAX
    } else {
        (1u64 << v) - 1
    }
}

#[inline]
pub fn decode(w: u64) -> u32 {
    w.count_ones()
}

#[derive(Debug)]
pub struct MinRegister {
    word: AtomicU64,
    bound: u32,
}

impl MinRegister {
    pub fn new(bound: u32) -> MinRegister {
        assert!(bound <= MAX_BOUND, "bound {bound} exceeds {MAX_BOUND}");
        MinRegister {
            word: AtomicU64::new(encode(bound)),
            bound,
        }
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    pub fn min_write(&self, v: u32) {
        debug_assert!(v <= self.bound, "min_write {v} above bound {}", self.bound);
        steps::write();
        self.word.fetch_and(encode(v), SeqCst);
    }

    pub fn read(&self) -> u32 {
        steps::read();
        decode(self.word.load(SeqCst))
    }
}

impl MinReg for MinRegister {
    fn new(bound: u32) -> Self {
        MinRegister::new(bound)
    }
    fn bound(&self) -> u32 {
        self.bound
    }
    fn min_write(&self, v: u32) {
        MinRegister::min_write(self, v)
    }
    fn read(&self) -> u32 {
        MinRegister::read(self)
    }
}

#[derive(Debug)]
pub struct CasMinRegister {
    value: AtomicU64,
    bound: u32,
}

impl MinReg for CasMinRegister {
    fn new(bound: u32) -> Self {
        CasMinRegister {
            value: AtomicU64::new(bound as u64),
            bound,
        }
    }

    fn bound(&self) -> u32 {
        self.bound
    }

    fn min_write(&self, v: u32) {
        debug_assert!(v <= self.bound);
        let v = v as u64;
        let mut cur = self.value.load(SeqCst);
        while v < cur {
            match self.value.compare_exchange(cur, v, SeqCst, SeqCst) {
                Ok(_) => break,
                Err(now) => cur = now,
            }
        }
    }

    fn read(&self) -> u32 {
        self.value.load(SeqCst) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_reads_bound() {
        assert_eq!(MinRegister::new(5).read(), 5);
    }

    #[test]
    fn writes_are_monotone() {
        let r = MinRegister::new(5);
        r.min_write(3);
        assert_eq!(r.read(), 3);
        r.min_write(4);
        assert_eq!(r.read(), 3);
        r.min_write(0);
        assert_eq!(r.read(), 0);
    }

    #[test]
    fn full_word_bound() {
        let r = MinRegister::new(64);
        assert_eq!(r.read(), 64);
        r.min_write(63);
        assert_eq!(r.read(), 63);
    }

    #[test]
    fn encoding_roundtrip() {
        for v in 0..=64 {
            assert_eq!(decode(encode(v)), v);
        }
    }
}
