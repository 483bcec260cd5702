//! Runs the controlled-experiment suite and prints the table, the ordering
//! checks, and wall-clock timings. `cargo run --release --example suite`
//! accepts an optional scene size and train-sample count.

use pcfa::reproduce::{run_suite, SuiteConfig};
use std::time::Instant;

fn main() {
    let mut args = std::env::args().skip(1);
    let mut cfg = SuiteConfig::default();
    if let Some(size) = args.next() {
        let s: usize = size.parse().expect("scene size");
        cfg.scene_width = s;
        cfg.scene_height = s;
    }
    if let Some(samples) = args.next() {
        cfg.train_samples = samples.parse().expect("sample count");
    }
    if let Some(sweeps) = args.next() {
        cfg.train_sweeps = sweeps.parse().expect("sweep count");
    }

    let start = Instant::now();
    let report = run_suite(&cfg).expect("suite run");
    println!("{}", report.csv);
    println!("checks: {:#?}", report.checks);
    for failure in report.checks.failures() {
        println!("FAIL: {failure}");
    }
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
}
