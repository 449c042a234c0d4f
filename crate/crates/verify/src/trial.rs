//! Randomized concurrent trials.
//!
//! A trial spec is plain text, `key=value` pairs separated by whitespace or
//! newlines, `#` starting a comment:
//!
//! ```text
//! structure=lockfree bits=3 threads=2 ops=6 window=6
//! mix=1:1:1:1 seed=7 prefill=50 yield=100 suspend=none
//! ```
//!
//! `ops` and `window` count operations per thread. Threads meet at a
//! barrier every `window` operations; each window is checked on its own,
//! starting from the set read at the previous barrier. `window=0` runs one
//! unchecked phase. `suspend=insert|delete` parks thread 0 at the first
//! activation of that kind until every other thread is done; suspension
//! trials run as a single phase.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Barrier, Condvar, Mutex};
use std::thread;

use lftrie::steps::{self, SectionMax};
use lftrie::{LockFreeTrie, OpKind, Relaxed, RelaxedTrie, Site, TraceEvent, TraceHook, MAX_BITS};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checker::{check, SetModel, Verdict};
use crate::contract::{check_contract, ContractViolation};
use crate::history::{history, operations, HistoryEvent, Recorder};
use crate::oracle::{Op, Oracle};
use crate::sweep::{quiescent_sweep, SweepReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    LockFree,
    Relaxed,
}

/// Relative weights of search, insert, delete and predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mix {
    pub search: u32,
    pub insert: u32,
    pub delete: u32,
    pub predecessor: u32,
}

impl Mix {
    pub fn weights(&self) -> [u32; 4] {
        [self.search, self.insert, self.delete, self.predecessor]
    }
}

impl Default for Mix {
    fn default() -> Mix {
        Mix {
            search: 1,
            insert: 1,
            delete: 1,
            predecessor: 1,
        }
    }
}

impl FromStr for Mix {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Mix, SpecError> {
        let bad = || SpecError::Value("mix".into(), s.into());
        let w: Vec<u32> = s
            .split(':')
            .map(|p| p.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if w.len() != 4 || w.iter().all(|&x| x == 0) {
            return Err(bad());
        }
        Ok(Mix {
            search: w[0],
            insert: w[1],
            delete: w[2],
            predecessor: w[3],
        })
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.search, self.insert, self.delete, self.predecessor
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialSpec {
    pub structure: Structure,
    pub bits: u32,
    pub threads: usize,
    pub ops: usize,
    pub window: usize,
    pub mix: Mix,
    pub seed: u64,
    /// Initial density in percent.
    pub prefill: u32,
    /// Per-event yield chance in thousandths.
    pub yield_permille: u32,
    pub suspend: Option<OpKind>,
}

impl Default for TrialSpec {
    fn default() -> TrialSpec {
        TrialSpec {
            structure: Structure::LockFree,
            bits: 3,
            threads: 2,
            ops: 5,
            window: 5,
            mix: Mix::default(),
            seed: 0,
            prefill: 0,
            yield_permille: 0,
            suspend: None,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("unknown key `{0}`")]
    Key(String),
    #[error("bad value for {0}: `{1}`")]
    Value(String, String),
    #[error("expected key=value, got `{0}`")]
    Syntax(String),
}

impl FromStr for TrialSpec {
    type Err = SpecError;

    fn from_str(text: &str) -> Result<TrialSpec, SpecError> {
        let mut spec = TrialSpec::default();
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap())
            .flat_map(str::split_whitespace);
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| SpecError::Syntax(w.into()))?;
            let bad = || SpecError::Value(k.into(), v.into());
            match k {
                "structure" => {
                    spec.structure = match v {
                        "lockfree" => Structure::LockFree,
                        "relaxed" => Structure::Relaxed,
                        _ => return Err(bad()),
                    }
                }
                "bits" => spec.bits = v.parse().map_err(|_| bad())?,
                "threads" => spec.threads = v.parse().map_err(|_| bad())?,
                "ops" => spec.ops = v.parse().map_err(|_| bad())?,
                "window" => spec.window = v.parse().map_err(|_| bad())?,
                "mix" => spec.mix = v.parse()?,
                "seed" => spec.seed = v.parse().map_err(|_| bad())?,
                "prefill" => spec.prefill = v.parse().map_err(|_| bad())?,
                "yield" => spec.yield_permille = v.parse().map_err(|_| bad())?,
                "suspend" => {
                    spec.suspend = match v {
                        "none" => None,
                        "insert" => Some(OpKind::Insert),
                        "delete" => Some(OpKind::Delete),
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(SpecError::Key(k.into())),
            }
        }
        if spec.bits == 0 || spec.bits > MAX_BITS {
            return Err(SpecError::Value("bits".into(), spec.bits.to_string()));
        }
        if spec.threads == 0 {
            return Err(SpecError::Value("threads".into(), "0".into()));
        }
        if spec.prefill > 100 {
            return Err(SpecError::Value("prefill".into(), spec.prefill.to_string()));
        }
        Ok(spec)
    }
}

impl fmt::Display for TrialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let structure = match self.structure {
            Structure::LockFree => "lockfree",
            Structure::Relaxed => "relaxed",
        };
        let suspend = self.suspend.map_or("none", |k| k.name());
        write!(
            f,
            "structure={structure} bits={} threads={} ops={} window={} mix={} seed={} prefill={} yield={} suspend={suspend}",
            self.bits, self.threads, self.ops, self.window, self.mix, self.seed, self.prefill, self.yield_permille
        )
    }
}

fn thread_rng(seed: u64, t: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(t as u64 + 1))
}

/// The operations each thread will issue.
pub fn op_streams(spec: &TrialSpec) -> Vec<Vec<Op>> {
    let u = 1u64 << spec.bits;
    let dist = WeightedIndex::new(spec.mix.weights()).unwrap();
    (0..spec.threads)
        .map(|t| {
            let mut rng = thread_rng(spec.seed, t);
            (0..spec.ops)
                .map(|_| {
                    let x = rng.gen_range(0..u);
                    match dist.sample(&mut rng) {
                        0 => Op::Search(x),
                        1 => Op::Insert(x),
                        2 => Op::Delete(x),
                        _ => Op::Predecessor(x),
                    }
                })
                .collect()
        })
        .collect()
}

/// Keys present before the trial starts.
pub fn prefill_keys(spec: &TrialSpec) -> BTreeSet<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    (0..1u64 << spec.bits)
        .filter(|_| rng.gen_range(0..100) < spec.prefill)
        .collect()
}

enum Subject {
    LockFree(LockFreeTrie),
    Relaxed(RelaxedTrie),
}

impl Subject {
    fn apply(&self, op: Op) -> i64 {
        match self {
            Subject::LockFree(t) => match op {
                Op::Search(x) => t.search(x).unwrap() as i64,
                Op::Insert(x) => t.insert(x).map(|_| 0).unwrap(),
                Op::Delete(x) => t.delete(x).map(|_| 0).unwrap(),
                Op::Predecessor(y) => t.predecessor(y).unwrap(),
            },
            Subject::Relaxed(t) => match op {
                Op::Search(x) => t.search(x).unwrap() as i64,
                Op::Insert(x) => t.insert(x).map(|_| 0).unwrap(),
                Op::Delete(x) => t.delete(x).map(|_| 0).unwrap(),
                Op::Predecessor(y) => match t.relaxed_predecessor(y).unwrap() {
                    Relaxed::Key(k) => k,
                    Relaxed::Bottom => -2,
                },
            },
        }
    }

    fn snapshot(&self, u: u64) -> BTreeSet<u64> {
        (0..u)
            .filter(|&x| match self {
                Subject::LockFree(t) => t.search(x).unwrap(),
                Subject::Relaxed(t) => t.search(x).unwrap(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowFailure {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct TrialReport {
    pub spec: TrialSpec,
    pub windows: usize,
    pub rejected: Vec<WindowFailure>,
    pub contract: Vec<ContractViolation>,
    pub sweep: SweepReport,
    pub initial_set: BTreeSet<u64>,
    pub final_set: BTreeSet<u64>,
    /// Shared-memory steps per thread over the whole trial.
    pub thread_steps: Vec<u64>,
    /// Operations each thread completed.
    pub thread_ops: Vec<usize>,
    /// Most shared reads any single search took.
    pub search_max_reads: u64,
    pub sections: SectionMax,
    pub victim_suspended: bool,
    /// Predecessor calls whose embedded relaxed traversal gave bottom.
    pub relaxed_bottoms: usize,
}

impl TrialReport {
    pub fn is_ok(&self) -> bool {
        self.rejected.is_empty() && self.contract.is_empty() && self.sweep.is_clean()
    }
}

thread_local! {
    static VICTIM: Cell<bool> = const { Cell::new(false) };
}

#[derive(Default)]
struct Park {
    parked: Mutex<(bool, bool)>,
    cv: Condvar,
}

impl Park {
    /// Blocks the caller until `release`. Only the first call parks.
    fn park(&self) {
        let mut g = self.parked.lock().unwrap();
        if g.0 {
            return;
        }
        g.0 = true;
        self.cv.notify_all();
        while !g.1 {
            g = self.cv.wait(g).unwrap();
        }
    }

    fn release(&self) {
        self.parked.lock().unwrap().1 = true;
        self.cv.notify_all();
    }

    fn has_parked(&self) -> bool {
        self.parked.lock().unwrap().0
    }
}

fn suspension_hook(kind: OpKind, park: Arc<Park>) -> TraceHook {
    let want = if kind == OpKind::Insert { 1 } else { 0 };
    Arc::new(move |ev: &TraceEvent| {
        if ev.site == Site::Activate && ev.value == want && VICTIM.with(|v| v.get()) {
            park.park();
        }
    })
}

struct Worker {
    steps: u64,
    ops: usize,
    search_max_reads: u64,
    sections: SectionMax,
}

fn run_ops(subject: &Subject, ops: &[Op], park: Option<&Park>) -> Worker {
    steps::reset();
    let start = steps::snapshot();
    let mut w = Worker {
        steps: 0,
        ops: 0,
        search_max_reads: 0,
        sections: SectionMax::default(),
    };
    for &op in ops {
        let before = steps::snapshot();
        subject.apply(op);
        if let Op::Search(_) = op {
            w.search_max_reads = w.search_max_reads.max(steps::snapshot().since(&before).reads);
        }
        w.ops += 1;
        if park.is_some_and(|p| p.has_parked()) {
            break;
        }
    }
    w.steps = steps::snapshot().since(&start).total();
    w.sections = steps::section_max();
    w
}

/// Runs `spec` and returns the recorded history with a report.
pub fn run_trial(spec: &TrialSpec) -> (Vec<HistoryEvent>, TrialReport) {
    let u = 1u64 << spec.bits;
    let park = Arc::new(Park::default());
    let rec = match spec.suspend {
        Some(kind) => Recorder::with_extra(spec.yield_permille, suspension_hook(kind, park.clone())),
        None => Recorder::new(spec.yield_permille),
    };
    let subject = match spec.structure {
        Structure::LockFree => Subject::LockFree(LockFreeTrie::with_trace(spec.bits, rec.hook()).unwrap()),
        Structure::Relaxed => Subject::Relaxed(RelaxedTrie::with_trace(spec.bits, rec.hook()).unwrap()),
    };
    let initial_set = prefill_keys(spec);
    for &x in &initial_set {
        subject.apply(Op::Insert(x));
    }
    rec.take();

    let streams = op_streams(spec);
    let window = if spec.window == 0 || spec.suspend.is_some() {
        spec.ops.max(1)
    } else {
        spec.window
    };
    let mut report = TrialReport {
        spec: spec.clone(),
        windows: 0,
        rejected: Vec::new(),
        contract: Vec::new(),
        sweep: SweepReport::default(),
        initial_set: initial_set.clone(),
        final_set: BTreeSet::new(),
        thread_steps: vec![0; spec.threads],
        thread_ops: vec![0; spec.threads],
        search_max_reads: 0,
        sections: SectionMax::default(),
        victim_suspended: false,
        relaxed_bottoms: 0,
    };
    let mut hist = Vec::new();
    let mut state = initial_set;
    let mut start = 0;
    loop {
        let end = (start + window).min(spec.ops);
        let barrier = Barrier::new(spec.threads);
        let workers: Vec<Worker> = thread::scope(|s| {
            let handles: Vec<_> = (0..spec.threads)
                .map(|t| {
                    let (subject, barrier, ops) = (&subject, &barrier, &streams[t][start..end]);
                    let park = if t == 0 && spec.suspend.is_some() {
                        Some(&*park)
                    } else {
                        None
                    };
                    s.spawn(move || {
                        VICTIM.with(|v| v.set(park.is_some()));
                        barrier.wait();
                        run_ops(subject, ops, park)
                    })
                })
                .collect();
            let mut out: Vec<Option<Worker>> = (0..spec.threads).map(|_| None).collect();
            for (t, h) in handles.into_iter().enumerate().rev() {
                if t == 0 {
                    park.release();
                }
                out[t] = Some(h.join().unwrap());
            }
            out.into_iter().map(Option::unwrap).collect()
        });
        for (t, w) in workers.iter().enumerate() {
            report.thread_steps[t] += w.steps;
            report.thread_ops[t] += w.ops;
            report.search_max_reads = report.search_max_reads.max(w.search_max_reads);
            report.sections.merge(&w.sections);
        }
        let events = rec.take();
        report.relaxed_bottoms += events
            .iter()
            .filter(|e| e.site == Site::RelaxedResult && e.value == -2)
            .count();
        let fin = subject.snapshot(u);
        rec.take();
        let idx = report.windows;
        report.windows += 1;
        match spec.structure {
            Structure::LockFree if spec.window > 0 && spec.suspend.is_none() => {
                let h = history(&events);
                let verdict =
                    operations(&h).and_then(|ops| check(&SetModel { bits: spec.bits }, &state, &ops, Some(&fin)));
                match verdict {
                    Ok(Verdict::Linearizable { .. }) => {}
                    Ok(Verdict::NotLinearizable) => report.rejected.push(WindowFailure {
                        index: idx,
                        reason: "no linearization".into(),
                    }),
                    Err(e) => report.rejected.push(WindowFailure {
                        index: idx,
                        reason: e.to_string(),
                    }),
                }
            }
            Structure::Relaxed => report.contract.extend(check_contract(&events, &state)),
            _ => {}
        }
        hist.extend(history(&events));
        state = fin;
        start = end;
        if start >= spec.ops {
            break;
        }
    }
    report.victim_suspended = park.has_parked();
    report.final_set = state.clone();
    let oracle = Oracle::from_set(spec.bits, state);
    let mut subject = subject;
    report.sweep = match &mut subject {
        Subject::LockFree(t) => quiescent_sweep(t, Some(&oracle)),
        Subject::Relaxed(t) => quiescent_sweep(t, Some(&oracle)),
    };
    (hist, report)
}
