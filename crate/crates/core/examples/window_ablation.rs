//! Runs the temporal-window ablation over two seeds and prints the summary
//! table with its ordering checks.

use tpnkit::experiment::{repro_table1, ExperimentConfig};

fn main() -> tpnkit::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.repro.seeds = 2;
    let result = repro_table1(&cfg)?;
    print!("{}", result.summary());
    Ok(())
}
