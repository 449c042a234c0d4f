use std::collections::BTreeSet;
use std::sync::Arc;
use std::thread;

use lftrie::{LockFreeTrie, TrieNode};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn pred(s: &BTreeSet<u64>, y: u64) -> i64 {
    s.range(..y).next_back().map_or(-1, |&k| k as i64)
}

#[test]
fn empty_set_has_no_predecessors() {
    let t = LockFreeTrie::new(4).unwrap();
    for y in 0..16 {
        assert_eq!(t.predecessor(y).unwrap(), -1);
        assert!(!t.search(y).unwrap());
    }
}

#[test]
fn sequential_matches_btreeset() {
    let mut rng = StdRng::seed_from_u64(7);
    let t = LockFreeTrie::new(6).unwrap();
    let mut s = BTreeSet::new();
    for _ in 0..5000 {
        let x = rng.gen_range(0..64);
        match rng.gen_range(0..4) {
            0 => assert_eq!(t.search(x).unwrap(), s.contains(&x)),
            1 => {
                t.insert(x).unwrap();
                s.insert(x);
            }
            2 => {
                t.delete(x).unwrap();
                s.remove(&x);
            }
            _ => assert_eq!(t.predecessor(x).unwrap(), pred(&s, x), "pred({x})"),
        }
    }
}

#[test]
fn quiescent_bits_and_lists() {
    let mut t = LockFreeTrie::new(5).unwrap();
    for x in [3, 9, 17, 30] {
        t.insert(x).unwrap();
    }
    t.delete(9).unwrap();
    let set = [3u64, 17, 30];
    for n in TrieNode::all(5) {
        let want = n.range().any(|k| set.contains(&k)) as u8;
        assert_eq!(t.interpreted_bit(n), want, "{n:?}");
    }
    assert!(t.announcements().is_empty());
    t.reclaim();
    assert_eq!(t.pending_garbage(), 0);
}

#[test]
fn concurrent_disjoint_threads_then_quiescent() {
    let t = Arc::new(LockFreeTrie::new(8).unwrap());
    let hs: Vec<_> = (0..4u64)
        .map(|id| {
            let t = t.clone();
            thread::spawn(move || {
                let mut rng = StdRng::seed_from_u64(id);
                for _ in 0..3000 {
                    let x = rng.gen_range(0..64) * 4 + id;
                    match rng.gen_range(0..3) {
                        0 => t.insert(x).unwrap(),
                        1 => t.delete(x).unwrap(),
                        _ => {
                            let p = t.predecessor(x).unwrap();
                            assert!(p < x as i64);
                        }
                    }
                }
            })
        })
        .collect();
    for h in hs {
        h.join().unwrap();
    }
    let t = Arc::into_inner(t).unwrap();
    let present: BTreeSet<u64> = (0..256).filter(|&x| t.search(x).unwrap()).collect();
    for y in 0..256 {
        assert_eq!(t.predecessor(y).unwrap(), pred(&present, y));
    }
    assert!(t.announcements().is_empty());
}
