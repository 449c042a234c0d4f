//! Runs one trial from a spec string and prints the report.
//!
//! cargo run --release -p lftrie-verify --example trial -- "bits=10 threads=4 ops=2500 window=0"

use lftrie_verify::trial::{run_trial, TrialSpec};

fn main() {
    let text = std::env::args().nth(1).unwrap_or_default();
    let spec: TrialSpec = match text.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("bad spec: {e}");
            std::process::exit(2);
        }
    };
    let (h, r) = run_trial(&spec);
    println!("spec      {spec}");
    println!("events    {}", h.len());
    println!("windows   {} ({} rejected)", r.windows, r.rejected.len());
    for w in &r.rejected {
        println!("  window {}: {}", w.index, w.reason);
    }
    println!("contract  {} violations", r.contract.len());
    println!("sweep     {:?}", r.sweep.violations);
    println!("steps     {:?}", r.thread_steps);
    println!("sections  {:?}", r.sections);
    println!("search    max {} reads", r.search_max_reads);
    println!("recovery  {} bottoms", r.relaxed_bottoms);
    std::process::exit(if r.is_ok() { 0 } else { 1 });
}
