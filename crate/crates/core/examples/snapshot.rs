//! Draws one network and prints its clusters and strong/weak grouping.
//!
//! cargo run --example snapshot

use cellfree::{generate_snapshot, NetworkConfig};

fn main() -> cellfree::Result<()> {
    let cfg = NetworkConfig { num_aps: 12, antennas_per_ap: 8, num_ues: 6, pilot_len: 3, ..Default::default() };
    let snap = generate_snapshot(&cfg, 7)?;
    println!("pilots: {:?}", snap.pilot_index);
    println!("co-pilot sets: {:?}", snap.copilots);
    for l in 0..snap.num_aps() {
        let [x, y] = snap.ap_positions[l];
        println!(
            "AP {l:2} at ({x:5.1}, {y:5.1})  strong {:?}  weak {:?}  tau_S={}",
            snap.grouping.strong[l],
            snap.grouping.weak[l],
            snap.tau_s(l)
        );
    }
    for k in 0..snap.num_ues() {
        let best = (0..snap.num_aps()).map(|l| snap.beta[(l, k)]).fold(0.0, f64::max);
        println!("UE {k}: strongest gain {:.1} dB, served by {} APs", 10.0 * best.log10(), snap.clusters[k].len());
    }
    for w in &snap.grouping.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
