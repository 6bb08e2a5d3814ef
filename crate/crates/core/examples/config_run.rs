//! Loads a TOML experiment and runs it the same way the `brsgd run` command does.
//!
//! `cargo run --example config_run -- configs/quickstart.toml`

use std::path::PathBuf;

use brsgd::experiment::{execute, Command, ExperimentConfig, Overrides};

fn main() -> brsgd::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/quickstart.toml"));
    let cfg = ExperimentConfig::load(&path)?;
    println!("{} on {} nodes, {} iterations", cfg.aggregator.rule.name(), cfg.simulation.nodes, cfg.simulation.iterations);

    let out = std::env::temp_dir().join("brsgd-config-run");
    let overrides = Overrides {
        out: Some(out),
        ..Overrides::default()
    };
    let dir = execute(Command::Run, &path, &overrides)?;
    let trace = std::fs::read_to_string(dir.join("trace.csv"))?;
    println!("wrote {} ({} rows)", dir.display(), trace.lines().count() - 1);
    for line in trace.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
