use std::collections::BTreeSet;

use lftrie::{Announcements, LockFreeTrie, OpKind, RelaxedTrie, Site, TraceEvent, TrieNode};
use lftrie_verify::contract::{check_contract, two_phase_trial};
use lftrie_verify::oracle::{Op, Oracle};
use lftrie_verify::sweep::{quiescent_sweep, Inspect, Violation};
use lftrie_verify::trial::{op_streams, prefill_keys, run_trial, SpecError, Structure, TrialSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn spec_text_round_trips() {
    let text =
        "structure=relaxed bits=4 threads=3 ops=9 window=3 mix=1:2:3:4 seed=11 prefill=25 yield=10 suspend=delete";
    let spec: TrialSpec = text.parse().unwrap();
    assert_eq!(spec.to_string(), text);
    assert_eq!(spec.suspend, Some(OpKind::Delete));
    let spec: TrialSpec = "# defaults\nbits=5\n".parse().unwrap();
    assert_eq!((spec.bits, spec.structure), (5, Structure::LockFree));
    assert_eq!(
        "bits=40".parse::<TrialSpec>(),
        Err(SpecError::Value("bits".into(), "40".into()))
    );
    assert_eq!("colour=red".parse::<TrialSpec>(), Err(SpecError::Key("colour".into())));
    assert_eq!(
        "mix=0:0:0:0".parse::<TrialSpec>(),
        Err(SpecError::Value("mix".into(), "0:0:0:0".into()))
    );
}

#[test]
fn small_trial_is_linearizable_and_clean() {
    let spec: TrialSpec = "bits=3 threads=2 ops=5 window=5 seed=4 yield=200".parse().unwrap();
    let (h, r) = run_trial(&spec);
    assert_eq!(h.len(), 20);
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(r.windows, 1);
}

#[test]
fn concurrent_deletes_leave_the_survivors() {
    let spec: TrialSpec = "bits=6 threads=4 ops=40 window=0 mix=0:0:1:0 prefill=70 seed=9 yield=50"
        .parse()
        .unwrap();
    let (_, r) = run_trial(&spec);
    let mut want = prefill_keys(&spec);
    for op in op_streams(&spec).into_iter().flatten() {
        want.remove(&op.arg());
    }
    assert_eq!(r.final_set, want);
    assert!(r.sweep.is_clean(), "{:?}", r.sweep.violations);
}

#[test]
fn many_small_windows() {
    for seed in 0..150 {
        let threads = 2 + seed as usize % 3;
        let spec = TrialSpec {
            threads,
            ops: 3 * (12 / threads),
            window: 12 / threads,
            seed,
            prefill: 40,
            yield_permille: 400,
            ..TrialSpec::default()
        };
        let (_, r) = run_trial(&spec);
        assert!(r.is_ok(), "{spec}: {:?}", r.rejected);
    }
}

#[test]
fn suspended_worker_does_not_block_others() {
    for suspend in ["insert", "delete"] {
        let spec: TrialSpec = format!("bits=5 threads=3 ops=300 window=0 prefill=50 seed=2 suspend={suspend}")
            .parse()
            .unwrap();
        let (_, r) = run_trial(&spec);
        assert!(r.victim_suspended);
        assert_eq!(&r.thread_ops[1..], &[300, 300]);
        assert!(r.thread_ops[0] < 300);
        assert!(r.sweep.is_clean(), "{:?}", r.sweep.violations);
    }
}

#[test]
fn relaxed_trials_keep_the_contract() {
    for seed in 0..100 {
        let spec: TrialSpec =
            format!("structure=relaxed bits=4 threads=3 ops=30 window=10 prefill=50 seed={seed} yield=300")
                .parse()
                .unwrap();
        let (_, r) = run_trial(&spec);
        assert!(r.contract.is_empty(), "{spec}: {:?}", r.contract);
        assert!(r.sweep.is_clean());
    }
}

#[test]
fn two_phase_relaxed_is_exact() {
    for seed in 0..200 {
        two_phase_trial(6, 2, 20, 8, seed).unwrap();
    }
}

fn ev(op: u64, site: Site, key: u64, value: i64, ts: u64) -> TraceEvent {
    TraceEvent {
        op,
        thread: 0,
        site,
        key,
        value,
        ts,
    }
}

#[test]
fn contract_checker_flags_bad_answers() {
    let rp = OpKind::RelaxedPredecessor;
    let init: BTreeSet<u64> = [2, 5].into();
    // Quiescent: 5 is present throughout, so bottom and 2 are both wrong.
    let bottom = vec![ev(1, Site::Invoke(rp), 7, 0, 1), ev(1, Site::Respond(rp), 7, -2, 2)];
    assert_eq!(check_contract(&bottom, &init).len(), 1);
    let low = vec![ev(1, Site::Invoke(rp), 7, 0, 1), ev(1, Site::Respond(rp), 7, 2, 2)];
    assert_eq!(check_contract(&low, &init)[0].k, 5);
    let ok = vec![ev(1, Site::Invoke(rp), 7, 0, 1), ev(1, Site::Respond(rp), 7, 5, 2)];
    assert!(check_contract(&ok, &init).is_empty());
    // A concurrent insert of 6 allows 6 or bottom, never 3.
    let ins = OpKind::Insert;
    let mut h = vec![
        ev(2, Site::Invoke(ins), 6, 0, 1),
        ev(1, Site::Invoke(rp), 7, 0, 2),
        ev(2, Site::LatestCas, 6, 1, 3),
    ];
    for (r, n) in [(6, 0), (-2, 0), (3, 1)] {
        let mut h = h.clone();
        h.push(ev(1, Site::Respond(rp), 7, r, 4));
        assert_eq!(check_contract(&h, &init).len(), n, "result {r}");
    }
    h.push(ev(1, Site::Respond(rp), 7, 7, 4));
    assert_eq!(check_contract(&h, &init)[0].reason, "result outside [-1, y)");
}

#[test]
fn sweep_is_clean_on_fresh_and_sequential_structures() {
    let mut t = LockFreeTrie::new(5).unwrap();
    assert!(quiescent_sweep(&mut t, Some(&Oracle::new(5))).is_clean());
    let mut r = RelaxedTrie::new(5).unwrap();
    let mut o = Oracle::new(5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let x = rng.gen_range(0..32);
        let op = match rng.gen_range(0..3) {
            0 => Op::Insert(x),
            1 => Op::Delete(x),
            _ => Op::Search(x),
        };
        o.apply(op);
        match op {
            Op::Insert(x) => {
                t.insert(x).unwrap();
                r.insert(x).unwrap();
            }
            Op::Delete(x) => {
                t.delete(x).unwrap();
                r.delete(x).unwrap();
            }
            _ => {}
        }
    }
    let rep = quiescent_sweep(&mut t, Some(&o));
    assert!(rep.is_clean(), "{:?}", rep.violations);
    assert_eq!(rep.nodes, 63);
    assert!(quiescent_sweep(&mut r, Some(&o)).is_clean());
}

/// A fake structure with one wrong internal bit and a stuck announcement.
struct Broken;

impl Inspect for Broken {
    fn bits(&self) -> u32 {
        2
    }
    fn interpreted_bit(&self, n: TrieNode) -> u8 {
        // Key 1 present; the root claims 0.
        (n.range().contains(&1) && n.height < 2) as u8
    }
    fn contains(&self, x: u64) -> bool {
        x == 1
    }
    fn announcements(&self) -> Announcements {
        Announcements {
            uall: 1,
            ruall: 0,
            pall: 0,
        }
    }
    fn pending_garbage(&self) -> u64 {
        0
    }
    fn reclaim(&mut self) {}
}

#[test]
fn sweep_reports_violations() {
    let rep = quiescent_sweep(&mut Broken, None);
    let root = TrieNode::root(2);
    assert!(rep.violations.contains(&Violation::Ib0 { node: root }));
    assert!(rep.violations.contains(&Violation::Or {
        node: root,
        bit: 0,
        left: 1,
        right: 0
    }));
    assert!(rep.violations.contains(&Violation::Announcements(Announcements {
        uall: 1,
        ruall: 0,
        pall: 0
    })));
    assert_eq!(rep.violations.len(), 3);
}
