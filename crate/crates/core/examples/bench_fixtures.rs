//! Runs the benchmark on a manifest and prints the markdown summary.
//!
//!     cargo run --release -p nirfuse-core --example bench_fixtures -- fixtures/manifest.tsv

use std::path::PathBuf;

use nirfuse_core::bench::{load_manifest, render_report, run_benchmark, BenchOptions, ReportFormat};
use nirfuse_core::fusion::FusionConfig;

fn main() -> nirfuse_core::Result<()> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/manifest.tsv".into()));
    let manifest = load_manifest(&path)?;
    let report = run_benchmark(&manifest, &BenchOptions::default(), &FusionConfig::default())?;
    print!("{}", render_report(&report, ReportFormat::Markdown)?);
    if std::env::args().any(|a| a == "--rows") {
        print!("{}", render_report(&report, ReportFormat::Csv)?);
    }
    Ok(())
}
