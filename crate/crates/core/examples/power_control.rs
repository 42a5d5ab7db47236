//! Heuristic power versus max-min fairness, with the bisection trace.
//!
//! cargo run --release --example power_control

use cellfree::power::{heuristic_power, maxmin_power, MaxMinProblem};
use cellfree::precoding::Scheme;
use cellfree::{generate_snapshot, NetworkConfig};

fn main() -> cellfree::Result<()> {
    let cfg = NetworkConfig { num_aps: 16, antennas_per_ap: 8, num_ues: 8, pilot_len: 4, ..Default::default() };
    let snap = generate_snapshot(&cfg, 21)?;
    for scheme in [Scheme::Mrt, Scheme::Ppzf] {
        let prob = MaxMinProblem::new(scheme, &snap)?;
        let heur = heuristic_power(&snap);
        let alloc = maxmin_power(&prob);
        let trace = alloc.maxmin.as_ref().expect("max-min trace");
        println!("{scheme}: {} variables", prob.num_vars());
        for s in &trace.steps {
            println!(
                "  nu {:10.4}  {:?}  {:2} iterations  bracket [{:.4}, {:.4}]",
                s.nu, s.status, s.solver_iterations, s.lo, s.hi
            );
        }
        println!("  min SINR: heuristic {:.4}, max-min {:.4}", prob.min_sinr(&heur.rho), prob.min_sinr(&alloc.rho));
        let sinr = prob.sinr(&alloc.rho);
        println!("  per-UE SINR under max-min: {:?}", sinr.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>());
        for note in &alloc.notes {
            println!("  note: {note}");
        }
    }
    Ok(())
}
