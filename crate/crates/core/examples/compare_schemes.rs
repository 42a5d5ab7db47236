//! Small experiment: per-UE SE of every scheme over a few snapshots,
//! summarized by median and 95%-likely values.
//!
//! cargo run --release --example compare_schemes

use cellfree::experiment::{evaluate, summarize, ExperimentSpec};
use cellfree::power::Policy;
use cellfree::precoding::Scheme;
use cellfree::NetworkConfig;

fn main() -> cellfree::Result<()> {
    let spec = ExperimentSpec {
        network: NetworkConfig { num_aps: 20, antennas_per_ap: 8, num_ues: 8, pilot_len: 5, mc_realizations: 1000, ..Default::default() },
        schemes: vec![Scheme::Mrt, Scheme::Fzf, Scheme::Pzf, Scheme::Ppzf, Scheme::Rzf],
        policies: vec![Policy::Heuristic, Policy::MaxMin],
        snapshots: 6,
        rzf_realizations: 300,
        ..Default::default()
    };
    spec.validate()?;
    let records = evaluate(&spec)?;
    println!("{:>6} {:>10} {:>12} {:>7} {:>7} {:>8}", "scheme", "policy", "method", "median", "p05", "sum");
    for row in summarize(&records) {
        println!(
            "{:>6} {:>10} {:>12} {:7.3} {:7.3} {:8.3}",
            row.scheme,
            row.policy.name(),
            row.method.name(),
            row.median_se,
            row.p05_se,
            row.median_sum_se
        );
    }
    Ok(())
}
