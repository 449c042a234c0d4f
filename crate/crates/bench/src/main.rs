use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lftrie_bench::{bench_run, to_csv, to_json, Dist, Mix, WorkloadConfig, MAX_THREADS};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Runs a workload against the lock-free binary trie and prints per-kind
/// throughput, latency percentiles and shared-memory steps.
#[derive(Debug, Parser)]
#[command(name = "lftrie-bench", version)]
struct Cli {
    /// Universe is {0..2^bits - 1}
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..=lftrie::MAX_BITS as i64))]
    bits: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=MAX_THREADS as u64))]
    threads: u64,
    /// Total operations across all threads
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    /// Weights for search:insert:delete:predecessor
    #[arg(long, default_value = "1:1:1:1", value_parser = |s: &str| s.parse::<Mix>().map_err(|e| e.to_string()))]
    mix: Mix,
    /// uniform, zipf, zipf:<theta> or clustered
    #[arg(long, default_value = "uniform", value_parser = |s: &str| s.parse::<Dist>().map_err(|e| e.to_string()))]
    dist: Dist,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Record every trace event and sweep invariants afterwards; slows
    /// operations down noticeably
    #[arg(long)]
    trace: bool,
    /// Initial density in percent
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(0..=100))]
    prefill: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = WorkloadConfig {
        bits: cli.bits,
        threads: cli.threads as usize,
        ops: cli.ops,
        mix: cli.mix,
        dist: cli.dist,
        seed: cli.seed,
        prefill: cli.prefill,
        trace: cli.trace,
    };
    let report = match bench_run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match cli.format {
        Format::Csv => print!("{}", to_csv(&report.stats)),
        Format::Json => println!("{}", to_json(&report)),
    }
    if let Some(t) = &report.trace {
        eprintln!(
            "trace: {} events, {} sweep violations",
            t.events,
            t.sweep_violations.len()
        );
        for v in &t.sweep_violations {
            eprintln!("  {v}");
        }
    }
    ExitCode::SUCCESS
}
