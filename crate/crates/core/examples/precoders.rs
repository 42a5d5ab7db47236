//! Builds every local precoder for one channel realization and shows how
//! much each leaks toward strong UEs on other pilots.
//!
//! cargo run --example precoders

use cellfree::power::heuristic_power;
use cellfree::precoding::{Precoder, RzfNormalizer, Scheme};
use cellfree::{generate_snapshot, realize_channels, NetworkConfig};

fn main() -> cellfree::Result<()> {
    let cfg = NetworkConfig { num_aps: 8, antennas_per_ap: 8, num_ues: 8, pilot_len: 4, ..Default::default() };
    let snap = generate_snapshot(&cfg, 3)?;
    let ch = realize_channels(&snap, 1);
    let rho = heuristic_power(&snap).rho;
    let normalizer = RzfNormalizer::estimate(&snap, &rho, 500, 2)?;
    let precoders = [
        Precoder::Pilot(Scheme::Mrt),
        Precoder::Pilot(Scheme::Fzf),
        Precoder::Pilot(Scheme::Pzf),
        Precoder::Pilot(Scheme::Ppzf),
        Precoder::Rzf(normalizer),
    ];
    println!("{:>6}  {:>12}  {:>13}", "scheme", "mean |w|^2", "to strong UEs");
    for p in &precoders {
        let set = p.build(&snap, &ch)?;
        let (mut norm2, mut count, mut leak) = (0.0, 0, 0.0f64);
        for l in 0..snap.num_aps() {
            for k in 0..snap.num_ues() {
                let w = set.vector(l, k);
                norm2 += w.norm_squared();
                count += 1;
                for t in 0..snap.num_ues() {
                    if snap.pilot_index[t] == snap.pilot_index[k] || !snap.is_strong(l, t) {
                        continue;
                    }
                    let h: Vec<_> = ch.estimate(l, t).to_vec();
                    let inner: num_complex::Complex64 = h.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
                    let scale = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() * w.norm();
                    if scale > 0.0 {
                        leak = leak.max(inner.norm() / scale);
                    }
                }
            }
        }
        println!("{:>6}  {:>12.4}  {:>13.2e}", p.scheme(), norm2 / count as f64, leak);
    }
    Ok(())
}
