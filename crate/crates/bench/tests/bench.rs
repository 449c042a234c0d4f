use std::process::Command;

use lftrie_bench::*;
use proptest::prelude::*;

fn cfg(threads: usize, ops: u64) -> WorkloadConfig {
    WorkloadConfig {
        bits: 8,
        threads,
        ops,
        ..WorkloadConfig::default()
    }
}

#[test]
fn csv_round_trips() {
    let rep = bench_run(&cfg(2, 4000)).unwrap();
    let text = to_csv(&rep.stats);
    assert!(text.starts_with("threads,bits,op,count,ops_per_s,p50_ns,p99_ns,mean_steps\n"));
    assert_eq!(parse_csv(&text).unwrap(), rep.stats);
}

#[test]
fn json_mirrors_csv_fields() {
    let rep = bench_run(&cfg(2, 2000)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&to_json(&rep)).unwrap();
    assert_eq!(v["threads"], 2);
    assert_eq!(v["bits"], 8);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for (r, s) in rows.iter().zip(&rep.stats.rows) {
        for f in ["op", "count", "ops_per_s", "p50_ns", "p99_ns", "mean_steps"] {
            assert!(r.get(f).is_some(), "missing {f}");
        }
        assert_eq!(r["op"], s.op.as_str());
        assert_eq!(r["count"], s.count);
    }
    assert!(v["max_active"].as_u64().unwrap() >= 1);
    let back: RunReport = serde_json::from_value(v).unwrap();
    assert_eq!(back.stats, rep.stats);
}

#[test]
fn same_seed_same_counts() {
    let mut c = cfg(1, 5000);
    c.dist = Dist::Zipf(0.99);
    c.seed = 42;
    let a = bench_run(&c).unwrap();
    let b = bench_run(&c).unwrap();
    let counts = |r: &RunReport| r.stats.rows.iter().map(|x| (x.count, x.mean_steps)).collect::<Vec<_>>();
    assert_eq!(counts(&a), counts(&b));
    c.seed = 43;
    assert_eq!(op_stream(&c, 0).len(), 5000);
}

#[test]
fn no_operation_lost() {
    for threads in [1, 3, 4] {
        let rep = bench_run(&cfg(threads, 10_001)).unwrap();
        assert_eq!(rep.issued, 10_001);
        assert_eq!(rep.stats.total(), 10_001);
        assert!(rep.max_active >= 1 && rep.max_active <= threads);
    }
}

#[test]
fn prefilled_searches_are_cheap() {
    let mut c = cfg(2, 20_000);
    c.bits = 12;
    c.mix = "1:0:0:0".parse().unwrap();
    let rep = bench_run(&c).unwrap();
    let s = rep.stats.row("search").unwrap();
    assert_eq!(s.count, 20_000);
    assert!(s.mean_steps <= 4.0, "{}", s.mean_steps);
    for r in rep.stats.rows.iter().filter(|r| r.op != "search") {
        assert_eq!(r.count, 0);
    }
}

#[test]
fn trace_sweeps_clean() {
    let mut c = cfg(3, 3000);
    c.trace = true;
    let rep = bench_run(&c).unwrap();
    let t = rep.trace.unwrap();
    assert!(t.events > 0);
    assert!(t.sweep_violations.is_empty(), "{:?}", t.sweep_violations);
}

#[test]
fn config_errors() {
    assert!("1:1:1".parse::<Mix>().is_err());
    assert!("1:-1:1:1".parse::<Mix>().is_err());
    assert!("0:0:0:0".parse::<Mix>().is_err());
    assert_eq!("2:2:0:0".parse::<Mix>().unwrap(), Mix([0.5, 0.5, 0.0, 0.0]));
    assert!("zipf:0".parse::<Dist>().is_err());
    assert_eq!("zipf".parse::<Dist>().unwrap(), Dist::Zipf(0.99));
    assert!(bench_run(&WorkloadConfig { bits: 31, ..cfg(1, 10) }).is_err());
    assert!(bench_run(&cfg(0, 10)).is_err());
    assert!(bench_run(&WorkloadConfig {
        prefill: 101,
        ..cfg(1, 10)
    })
    .is_err());
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_lftrie-bench");
    for bad in [
        &["--bits", "0"][..],
        &["--bits", "31"],
        &["--threads", "0"],
        &["--mix", "1:2"],
        &["--dist", "pareto"],
        &["--prefill", "150"],
        &["--format", "xml"],
    ] {
        let out = Command::new(bin).args(bad).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
    }
    let out = Command::new(bin)
        .args(["--bits", "6", "--ops", "500", "--threads", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stats = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(stats.total(), 500);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn streams_respect_universe_and_split(
        bits in 1u32..=14, threads in 1usize..6, ops in 0u64..400, seed: u64, d in 0usize..3,
    ) {
        let dist = [Dist::Uniform, Dist::Zipf(1.2), Dist::Clustered][d];
        let c = WorkloadConfig { bits, threads, ops, dist, seed, ..WorkloadConfig::default() };
        let mut total = 0;
        for t in 0..threads {
            let s = op_stream(&c, t);
            prop_assert_eq!(&s, &op_stream(&c, t));
            prop_assert!(s.iter().all(|o| o.arg() < 1u64 << bits));
            total += s.len() as u64;
        }
        prop_assert_eq!(total, ops);
    }

    #[test]
    fn csv_parse_inverts_emit(rows in proptest::collection::vec((0u64..1 << 40, 0.0f64..1e9, 0u64..1 << 30, 0u64..1 << 30, 0.0f64..1e3), 1..5)) {
        let stats = RunStats {
            threads: 3,
            bits: 7,
            rows: rows.into_iter().enumerate().map(|(i, (count, ops_per_s, p50_ns, p99_ns, mean_steps))| OpStats {
                op: OP_NAMES[i % 4].to_string(), count, ops_per_s, p50_ns, p99_ns, mean_steps,
            }).collect(),
        };
        prop_assert_eq!(parse_csv(&to_csv(&stats)).unwrap(), stats);
    }
}
