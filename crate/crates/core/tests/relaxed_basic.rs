use std::collections::BTreeSet;

use lftrie::steps;
use lftrie::{Error, Relaxed, RelaxedTrie, TrieNode};
use proptest::prelude::*;

fn pred(s: &BTreeSet<u64>, y: u64) -> i64 {
    s.range(..y).next_back().map_or(-1, |&k| k as i64)
}

#[test]
fn two_key_queries() {
    let t = RelaxedTrie::new(2).unwrap();
    t.insert(0).unwrap();
    t.insert(2).unwrap();
    assert_eq!(t.relaxed_predecessor(3).unwrap(), Relaxed::Key(2));
    assert_eq!(t.relaxed_predecessor(2).unwrap(), Relaxed::Key(0));
    assert_eq!(t.relaxed_predecessor(0).unwrap(), Relaxed::Key(-1));
}

#[test]
fn errors_name_the_problem() {
    assert_eq!(RelaxedTrie::new(0).err(), Some(Error::Bits { bits: 0, max: 30 }));
    let t = RelaxedTrie::new(3).unwrap();
    assert_eq!(t.insert(8).err(), Some(Error::KeyOutOfRange { key: 8, universe: 8 }));
}

#[test]
fn search_reads_one_word() {
    let t = RelaxedTrie::new(6).unwrap();
    t.insert(9).unwrap();
    for x in 0..64 {
        let before = steps::snapshot();
        t.search(x).unwrap();
        let d = steps::snapshot().since(&before);
        assert!(d.reads <= 3 && d.writes == 0 && d.cas == 0, "{d:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sequential_relaxed_is_exact(ops in prop::collection::vec((0u8..3, 0u64..32), 0..200)) {
        let t = RelaxedTrie::new(5).unwrap();
        let mut s = BTreeSet::new();
        for (k, x) in ops {
            match k {
                0 => { t.insert(x).unwrap(); s.insert(x); }
                1 => { t.delete(x).unwrap(); s.remove(&x); }
                _ => prop_assert_eq!(t.relaxed_predecessor(x).unwrap(), Relaxed::Key(pred(&s, x))),
            }
            prop_assert_eq!(t.search(x).unwrap(), s.contains(&x));
        }
        for n in TrieNode::all(5) {
            let want = n.range().any(|k| s.contains(&k)) as u8;
            prop_assert_eq!(t.interpreted_bit(n), want);
        }
    }
}
