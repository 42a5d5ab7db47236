//! Normalized per-AP precoder cost versus the number of strong pilots.
//!
//! cargo run --example complexity

use cellfree::complexity::complexity;
use cellfree::precoding::Scheme;

fn main() -> cellfree::Result<()> {
    let (m, tau_p) = (16, 10);
    println!("tau_S   PZF     PPZF    (relative to FZF, M={m}, tau_p={tau_p})");
    for ts in 0..=tau_p {
        let r = complexity(m, tau_p, ts, 95, 20)?;
        let get = |s| r.get(s).map(|c| c.normalized).unwrap_or(f64::NAN);
        println!("{ts:5}  {:.4}  {:.4}", get(Scheme::Pzf), get(Scheme::Ppzf));
    }
    Ok(())
}
