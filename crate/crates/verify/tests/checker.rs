use std::collections::BTreeSet;

use lftrie_verify::checker::{brute_force, check, verify_witness, CheckError, Operation, SetModel, Verdict};
use lftrie_verify::history::{dump, operations, parse_dump};
use lftrie_verify::oracle::{Op, Oracle};
use proptest::prelude::*;

type SetOp = Operation<Op, i64>;

fn done(id: u64, op: Op, ret: i64, invoke: u64, respond: u64) -> SetOp {
    Operation {
        id,
        thread: id as usize,
        op,
        ret: Some(ret),
        invoke,
        respond: Some(respond),
    }
}

fn sequential(ops: &[Op], bits: u32) -> Vec<SetOp> {
    let mut o = Oracle::new(bits);
    ops.iter()
        .enumerate()
        .map(|(i, &op)| done(i as u64, op, o.apply(op), 2 * i as u64, 2 * i as u64 + 1))
        .collect()
}

#[test]
fn sequential_history_is_linearizable() {
    let h = sequential(&[Op::Insert(3), Op::Search(3), Op::Predecessor(5), Op::Delete(3)], 3);
    let v = check(&SetModel { bits: 3 }, &BTreeSet::new(), &h, None).unwrap();
    assert_eq!(
        v,
        Verdict::Linearizable {
            witness: vec![0, 1, 2, 3]
        }
    );
}

#[test]
fn overlapping_inserts_then_search() {
    let h = vec![
        done(1, Op::Insert(2), 0, 0, 3),
        done(2, Op::Insert(2), 0, 1, 2),
        done(3, Op::Search(2), 1, 4, 5),
    ];
    assert!(check(&SetModel { bits: 2 }, &BTreeSet::new(), &h, None)
        .unwrap()
        .is_linearizable());
}

#[test]
fn stale_predecessor_is_rejected() {
    // Insert 0, 6, 1 complete in sequence, then Predecessor(7) answers 1.
    let h = vec![
        done(1, Op::Insert(0), 0, 0, 1),
        done(2, Op::Insert(6), 0, 2, 3),
        done(3, Op::Insert(1), 0, 4, 5),
        done(4, Op::Predecessor(7), 1, 6, 7),
    ];
    let m = SetModel { bits: 3 };
    assert_eq!(check(&m, &BTreeSet::new(), &h, None).unwrap(), Verdict::NotLinearizable);
    assert!(!brute_force(&m, &BTreeSet::new(), &h, None).unwrap());
}

#[test]
fn stale_predecessor_overlapping_the_insert_is_accepted() {
    let h = vec![
        done(1, Op::Insert(0), 0, 0, 1),
        done(2, Op::Insert(6), 0, 2, 8),
        done(3, Op::Insert(1), 0, 3, 4),
        done(4, Op::Predecessor(7), 1, 5, 7),
    ];
    assert!(check(&SetModel { bits: 3 }, &BTreeSet::new(), &h, None)
        .unwrap()
        .is_linearizable());
}

#[test]
fn malformed_histories_are_errors() {
    let text = "1 0 insert 3 - invoke\n2 0 insert 3 0 respond\n3 0 search 3 1 respond\n";
    assert!(matches!(parse_dump(text), Err(CheckError::Parse { line: 3, .. })));
    let h = parse_dump("1 0 insert 3 - invoke\n2 0 search 3 - invoke\n").unwrap();
    assert_eq!(operations(&h), Err(CheckError::Overlap { thread: 0, id: 2 }));
    let h = parse_dump("1 0 insert 3 - invoke\n2 0 search 3 0 respond\n").unwrap();
    assert_eq!(operations(&h), Err(CheckError::LabelMismatch(1)));
    let h = vec![done(1, Op::Insert(1), 0, 4, 2)];
    assert_eq!(
        check(&SetModel { bits: 1 }, &BTreeSet::new(), &h, None),
        Err(CheckError::RespondBeforeInvoke(1))
    );
}

#[test]
fn dump_round_trip() {
    let text =
        "1 0 insert 3 - invoke\n2 1 predecessor 4 - invoke\n3 0 insert 3 0 respond\n4 1 predecessor 4 -1 respond\n";
    let h = parse_dump(text).unwrap();
    assert_eq!(dump(&h), text);
    let ops = operations(&h).unwrap();
    assert_eq!(ops.len(), 2);
    assert!(check(&SetModel { bits: 3 }, &BTreeSet::new(), &ops, None)
        .unwrap()
        .is_linearizable());
}

/// Random small histories: operations with random intervals and responses
/// drawn from plausible values.
fn small_history() -> impl Strategy<Value = Vec<SetOp>> {
    let op = (0u8..4, 0u64..4).prop_map(|(k, x)| match k {
        0 => Op::Search(x),
        1 => Op::Insert(x),
        2 => Op::Delete(x),
        _ => Op::Predecessor(x),
    });
    prop::collection::vec((op, 0u64..12, 1u64..6, -1i64..4, any::<bool>()), 1..7).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (op, start, len, r, pending))| {
                let ret = match op {
                    Op::Search(_) => r.rem_euclid(2),
                    Op::Insert(_) | Op::Delete(_) => 0,
                    Op::Predecessor(_) => r,
                };
                Operation {
                    id: i as u64,
                    thread: i,
                    op,
                    ret: (!pending).then_some(ret),
                    invoke: 2 * start,
                    respond: (!pending).then_some(2 * (start + len) + 1),
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn agrees_with_brute_force(h in small_history()) {
        let m = SetModel { bits: 2 };
        let init = BTreeSet::new();
        let fast = check(&m, &init, &h, None).unwrap();
        prop_assert_eq!(fast.is_linearizable(), brute_force(&m, &init, &h, None).unwrap());
        if let Verdict::Linearizable { witness } = fast {
            prop_assert!(verify_witness(&m, &init, &h, &witness, None).is_ok());
        }
    }

    #[test]
    fn sequential_runs_always_pass(ops in prop::collection::vec((0u8..4, 0u64..8), 0..30)) {
        let ops: Vec<Op> = ops.into_iter().map(|(k, x)| match k {
            0 => Op::Search(x),
            1 => Op::Insert(x),
            2 => Op::Delete(x),
            _ => Op::Predecessor(x),
        }).collect();
        let h = sequential(&ops, 3);
        let m = SetModel { bits: 3 };
        let v = check(&m, &BTreeSet::new(), &h, None).unwrap();
        prop_assert!(v.is_linearizable());
    }
}
