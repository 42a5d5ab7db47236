//! Sweeps the grouping threshold: 0 reproduces MRT and 1 reproduces FZF.
//!
//! cargo run --release --example sweep_grouping

use cellfree::experiment::{evaluate, summarize, ExperimentSpec, Sweep, SweepVariable};
use cellfree::precoding::Scheme;
use cellfree::NetworkConfig;

fn main() -> cellfree::Result<()> {
    let spec = ExperimentSpec {
        network: NetworkConfig { num_aps: 20, antennas_per_ap: 8, num_ues: 8, pilot_len: 5, ..Default::default() },
        schemes: vec![Scheme::Mrt, Scheme::Fzf, Scheme::Pzf, Scheme::Ppzf],
        snapshots: 20,
        sweep: Some(Sweep { variable: SweepVariable::GroupingThreshold, values: vec![0.0, 0.5, 0.8, 0.9, 0.95, 0.99, 1.0] }),
        ..Default::default()
    };
    let summary = summarize(&evaluate(&spec)?);
    println!("upsilon  scheme  median SE");
    for row in summary {
        println!("{:7.2}  {:>6}  {:.4}", row.value.unwrap_or(f64::NAN), row.scheme, row.median_se);
    }
    Ok(())
}
