//! Compares closed-form SINRs with their Monte-Carlo estimates.
//!
//! cargo run --release --example closed_form_vs_monte_carlo

use cellfree::power::heuristic_power;
use cellfree::precoding::{Precoder, Scheme};
use cellfree::se::{se_from_sinr, sinr_closed_form, sinr_monte_carlo_multi, McCase};
use cellfree::{generate_snapshot, NetworkConfig};

fn main() -> cellfree::Result<()> {
    let cfg = NetworkConfig { num_aps: 10, antennas_per_ap: 6, num_ues: 6, pilot_len: 3, ..Default::default() };
    let snap = generate_snapshot(&cfg, 11)?;
    let rho = heuristic_power(&snap).rho;
    let schemes = [Scheme::Mrt, Scheme::Fzf, Scheme::Pzf, Scheme::Ppzf];
    let cases: Vec<McCase> = schemes.iter().map(|&s| McCase::new(Precoder::Pilot(s), &snap, &rho)).collect();
    let mc = sinr_monte_carlo_multi(&snap, &cases, 20_000, 5)?;
    println!("scheme ue  closed-form    monte-carlo   z     SE");
    for (s, est) in schemes.iter().zip(&mc) {
        let cf = sinr_closed_form(*s, &snap, &rho)?;
        for (k, (c, e)) in cf.iter().zip(est).enumerate() {
            let z = (c - e.sinr) / e.sinr_stderr;
            println!("{s:>6} {k:2}  {c:12.4}  {:12.4}  {z:+5.2}  {:.3}", e.sinr, se_from_sinr(*c, &snap.cfg));
        }
    }
    Ok(())
}
