//! A rule-by-adversary-count sweep; invalid cells are reported, not run.

use std::path::PathBuf;

use brsgd::experiment::{cmd_sweep, CellStatus, ExperimentConfig};

fn main() -> brsgd::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/sweep.toml");
    let cfg = ExperimentConfig::load(&path)?;
    let out = std::env::temp_dir().join("brsgd-sweep");
    let outcome = cmd_sweep(&cfg, &out)?;
    for (cell, status, reason) in &outcome.cells {
        match status {
            CellStatus::Ok => println!("cell {:>2}: {:<20} q = {}  ok", cell.index, cell.rule.name(), cell.q),
            CellStatus::SkippedInvalid => {
                println!("cell {:>2}: {:<20} q = {}  skipped ({reason})", cell.index, cell.rule.name(), cell.q)
            }
        }
    }
    println!("{} trace rows in {}", outcome.rows, out.join("sweep.csv").display());
    Ok(())
}
