//! Write a synthetic trace as a dataset directory, read it back, and run a
//! CLI analysis on it in-process.
//!
//! cargo run -p anonset --example dataset_roundtrip

use anonset::cli::{run_analysis, Cli};
use anonset::dataset::{ingest, Dataset};
use anonset::synthgen::{generate_trace, BehaviorProfile, SynthConfig};
use clap::Parser;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile: BehaviorProfile =
        "disciplined=0.7,h1-reuser=0.15,h2-improper-sender=0.15".parse()?;
    let trace = generate_trace(&SynthConfig::new(profile, 60), 2)?;
    let dataset = Dataset::from_trace(&trace);

    let dir = tempfile::tempdir()?;
    dataset.write(dir.path())?;
    let (loaded, summary) = ingest(dir.path())?;
    assert_eq!(loaded, dataset);
    println!("dataset in {}", dir.path().display());
    for (file, records) in &summary {
        println!("  {file:<24} {records:>6}");
    }

    let cli = Cli::try_parse_from([
        "anonset",
        "anonymity",
        "--data",
        "unused",
        "--heuristics",
        "h1,h2",
        "--combine",
        "--tas",
    ])
    .expect("valid arguments");
    let report = run_analysis(&loaded, &cli.command)?;
    print!("{}", report.text);
    Ok(())
}
