//! Workload runner for the lock-free trie.
//!
//! Results are one row per operation kind. CSV columns, in order:
//! `threads,bits,op,count,ops_per_s,p50_ns,p99_ns,mean_steps`. Throughput
//! is per kind over the whole timed phase, so the rows add up to the total
//! rate. Steps are shared-memory reads, writes and CASes.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering::SeqCst};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::Instant;

use lftrie::{steps, LockFreeTrie, MAX_BITS};
use lftrie_verify::history::Recorder;
use lftrie_verify::oracle::Op;
use lftrie_verify::sweep::quiescent_sweep;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OP_NAMES: [&str; 4] = ["search", "insert", "delete", "predecessor"];

/// Most worker threads a run may use.
pub const MAX_THREADS: usize = 255;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("bits must be in 1..={MAX_BITS}, got {0}")]
    Bits(u32),
    #[error("threads must be in 1..={MAX_THREADS}, got {0}")]
    Threads(usize),
    #[error("mix must be four non-negative weights s:i:d:p with a positive sum, got `{0}`")]
    Mix(String),
    #[error("dist must be uniform, zipf, zipf:<theta> or clustered, got `{0}`")]
    Dist(String),
    #[error("prefill must be a percentage, got {0}")]
    Prefill(u32),
}

/// Operation weights, normalized to sum to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mix(pub [f64; 4]);

impl FromStr for Mix {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Mix, ConfigError> {
        let bad = || ConfigError::Mix(s.to_string());
        let w: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if w.len() != 4 || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(bad());
        }
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Err(bad());
        }
        Ok(Mix([w[0] / sum, w[1] / sum, w[2] / sum, w[3] / sum]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dist {
    Uniform,
    /// Zipf with exponent theta over the universe; ranks are scattered by
    /// an odd multiplier so hot keys are not all adjacent.
    Zipf(f64),
    /// 16 evenly spaced centers, normal spread of u/256 around each.
    Clustered,
}

impl FromStr for Dist {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Dist, ConfigError> {
        let bad = || ConfigError::Dist(s.to_string());
        match s {
            "uniform" => Ok(Dist::Uniform),
            "zipf" => Ok(Dist::Zipf(0.99)),
            "clustered" => Ok(Dist::Clustered),
            _ => {
                let t = s.strip_prefix("zipf:").ok_or_else(bad)?;
                let t: f64 = t.parse().map_err(|_| bad())?;
                if t.is_finite() && t > 0.0 {
                    Ok(Dist::Zipf(t))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadConfig {
    pub bits: u32,
    pub threads: usize,
    /// Total operations across all threads.
    pub ops: u64,
    pub mix: Mix,
    pub dist: Dist,
    pub seed: u64,
    /// Initial density in percent.
    pub prefill: u32,
    /// Record every trace event and sweep the structure afterwards.
    pub trace: bool,
}

impl Default for WorkloadConfig {
    fn default() -> WorkloadConfig {
        WorkloadConfig {
            bits: 10,
            threads: 1,
            ops: 100_000,
            mix: Mix([0.25; 4]),
            dist: Dist::Uniform,
            seed: 0,
            prefill: 50,
            trace: false,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bits == 0 || self.bits > MAX_BITS {
            return Err(ConfigError::Bits(self.bits));
        }
        if self.threads == 0 || self.threads > MAX_THREADS {
            return Err(ConfigError::Threads(self.threads));
        }
        if self.prefill > 100 {
            return Err(ConfigError::Prefill(self.prefill));
        }
        Ok(())
    }
}

struct KeyGen {
    u: u64,
    dist: Dist,
    zipf: Option<Zipf<f64>>,
    normal: Normal<f64>,
}

impl KeyGen {
    fn new(bits: u32, dist: Dist) -> KeyGen {
        let u = 1u64 << bits;
        KeyGen {
            u,
            dist,
            zipf: match dist {
                Dist::Zipf(t) => Some(Zipf::new(u, t).unwrap()),
                _ => None,
            },
            normal: Normal::new(0.0, (u as f64 / 256.0).max(1.0)).unwrap(),
        }
    }

    fn key(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self.dist {
            Dist::Uniform => rng.gen_range(0..self.u),
            Dist::Zipf(_) => {
                let rank = self.zipf.as_ref().unwrap().sample(rng) as u64 - 1;
                rank.wrapping_mul(0x9e37_79b9_7f4a_7c15 | 1) & (self.u - 1)
            }
            Dist::Clustered => {
                let c = rng.gen_range(0..16u64) * self.u / 16 + self.u / 32;
                let off = self.normal.sample(rng).round() as i64;
                (c as i64 + off).rem_euclid(self.u as i64) as u64
            }
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(stream))
}

/// Operations thread `t` issues. Depends only on the config and `t`.
pub fn op_stream(cfg: &WorkloadConfig, t: usize) -> Vec<Op> {
    let n = cfg.ops / cfg.threads as u64 + ((t as u64) < cfg.ops % cfg.threads as u64) as u64;
    let keys = KeyGen::new(cfg.bits, cfg.dist);
    let kinds = WeightedIndex::new(cfg.mix.0).unwrap();
    let mut rng = rng_for(cfg.seed, t as u64 + 1);
    (0..n)
        .map(|_| {
            let x = keys.key(&mut rng);
            match kinds.sample(&mut rng) {
                0 => Op::Search(x),
                1 => Op::Insert(x),
                2 => Op::Delete(x),
                _ => Op::Predecessor(x),
            }
        })
        .collect()
}

pub fn prefill_keys(cfg: &WorkloadConfig) -> Vec<u64> {
    let mut rng = rng_for(cfg.seed, 0);
    (0..1u64 << cfg.bits)
        .filter(|_| rng.gen_range(0..100) < cfg.prefill)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpStats {
    pub op: String,
    pub count: u64,
    pub ops_per_s: f64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub mean_steps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub threads: usize,
    pub bits: u32,
    pub rows: Vec<OpStats>,
}

impl RunStats {
    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn row(&self, op: &str) -> Option<&OpStats> {
        self.rows.iter().find(|r| r.op == op)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub events: usize,
    pub sweep_violations: Vec<String>,
}

/// Everything a run measures. Only `stats` goes into CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub stats: RunStats,
    pub issued: u64,
    pub elapsed_s: f64,
    /// Most operations in flight at once, as observed by a shared counter.
    pub max_active: usize,
    pub trace: Option<TraceSummary>,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Default)]
struct Samples {
    ns: [Vec<u64>; 4],
    steps: [u64; 4],
}

fn kind_index(op: Op) -> usize {
    match op {
        Op::Search(_) => 0,
        Op::Insert(_) => 1,
        Op::Delete(_) => 2,
        Op::Predecessor(_) => 3,
    }
}

pub fn bench_run(cfg: &WorkloadConfig) -> Result<RunReport, ConfigError> {
    cfg.validate()?;
    let rec = cfg.trace.then(|| Recorder::new(0));
    let mut trie = match &rec {
        Some(r) => LockFreeTrie::with_trace(cfg.bits, r.hook()),
        None => LockFreeTrie::new(cfg.bits),
    }
    .expect("validated");
    for x in prefill_keys(cfg) {
        trie.insert(x).unwrap();
    }
    let streams: Vec<Vec<Op>> = (0..cfg.threads).map(|t| op_stream(cfg, t)).collect();
    let barrier = Arc::new(Barrier::new(cfg.threads + 1));
    let active = AtomicUsize::new(0);
    let max_active = AtomicUsize::new(0);
    let (samples, elapsed) = thread::scope(|s| {
        let hs: Vec<_> = streams
            .iter()
            .map(|ops| {
                let (trie, barrier, active, max_active) = (&trie, barrier.clone(), &active, &max_active);
                s.spawn(move || {
                    let mut smp = Samples::default();
                    for v in &mut smp.ns {
                        v.reserve(ops.len() / 4 + 1);
                    }
                    barrier.wait();
                    let start = Instant::now();
                    for &op in ops {
                        let k = kind_index(op);
                        let a = active.fetch_add(1, SeqCst) + 1;
                        max_active.fetch_max(a, SeqCst);
                        let st = steps::snapshot();
                        let t0 = Instant::now();
                        match op {
                            Op::Search(x) => drop(trie.search(x)),
                            Op::Insert(x) => drop(trie.insert(x)),
                            Op::Delete(x) => drop(trie.delete(x)),
                            Op::Predecessor(y) => drop(trie.predecessor(y)),
                        }
                        let ns = t0.elapsed().as_nanos() as u64;
                        smp.steps[k] += steps::snapshot().since(&st).total();
                        active.fetch_sub(1, SeqCst);
                        smp.ns[k].push(ns);
                    }
                    (smp, start, Instant::now())
                })
            })
            .collect();
        barrier.wait();
        let done: Vec<(Samples, Instant, Instant)> = hs.into_iter().map(|h| h.join().unwrap()).collect();
        let first = done.iter().map(|d| d.1).min().unwrap();
        let last = done.iter().map(|d| d.2).max().unwrap();
        let samples: Vec<Samples> = done.into_iter().map(|d| d.0).collect();
        (samples, (last - first).as_secs_f64())
    });
    let mut rows = Vec::new();
    for (k, name) in OP_NAMES.iter().enumerate() {
        let mut ns: Vec<u64> = samples.iter().flat_map(|s| s.ns[k].iter().copied()).collect();
        ns.sort_unstable();
        let count = ns.len() as u64;
        let steps: u64 = samples.iter().map(|s| s.steps[k]).sum();
        rows.push(OpStats {
            op: name.to_string(),
            count,
            ops_per_s: if elapsed > 0.0 { count as f64 / elapsed } else { 0.0 },
            p50_ns: percentile(&ns, 0.50),
            p99_ns: percentile(&ns, 0.99),
            mean_steps: if count > 0 { steps as f64 / count as f64 } else { 0.0 },
        });
    }
    let trace = rec.map(|r| {
        let events = r.take().len();
        let rep = quiescent_sweep(&mut trie, None);
        TraceSummary {
            events,
            sweep_violations: rep.violations.iter().map(|v| v.to_string()).collect(),
        }
    });
    Ok(RunReport {
        stats: RunStats {
            threads: cfg.threads,
            bits: cfg.bits,
            rows,
        },
        issued: streams.iter().map(|s| s.len() as u64).sum(),
        elapsed_s: elapsed,
        max_active: max_active.load(SeqCst),
        trace,
    })
}

pub const CSV_HEADER: &str = "threads,bits,op,count,ops_per_s,p50_ns,p99_ns,mean_steps";

pub fn to_csv(stats: &RunStats) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in &stats.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            stats.threads, stats.bits, r.op, r.count, r.ops_per_s, r.p50_ns, r.p99_ns, r.mean_steps
        )
        .unwrap();
    }
    s
}

pub fn to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).unwrap()
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("csv line {line}: {reason}")]
pub struct CsvError {
    pub line: usize,
    pub reason: String,
}

/// Inverse of `to_csv`.
pub fn parse_csv(text: &str) -> Result<RunStats, CsvError> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, reason: &str| CsvError {
        line: line + 1,
        reason: reason.to_string(),
    };
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(err(0, "missing header")),
    }
    let mut out: Option<RunStats> = None;
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(n, "expected 8 fields"));
        }
        let threads: usize = f[0].parse().map_err(|_| err(n, "threads"))?;
        let bits: u32 = f[1].parse().map_err(|_| err(n, "bits"))?;
        let row = OpStats {
            op: f[2].to_string(),
            count: f[3].parse().map_err(|_| err(n, "count"))?,
            ops_per_s: f[4].parse().map_err(|_| err(n, "ops_per_s"))?,
            p50_ns: f[5].parse().map_err(|_| err(n, "p50_ns"))?,
            p99_ns: f[6].parse().map_err(|_| err(n, "p99_ns"))?,
            mean_steps: f[7].parse().map_err(|_| err(n, "mean_steps"))?,
        };
        let st = out.get_or_insert_with(|| RunStats {
            threads,
            bits,
            rows: Vec::new(),
        });
        if st.threads != threads || st.bits != bits {
            return Err(err(n, "rows disagree on threads or bits"));
        }
        st.rows.push(row);
    }
    out.ok_or_else(|| err(1, "no rows"))
}
