//! Operation counts of local precoder computation per coherence block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precoding::Scheme;

/// Complex multiplications and divisions of one AP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeCost {
    pub scheme: Scheme,
    pub multiplications: f64,
    pub divisions: f64,
    /// Forming the `τ_d` transmitted samples.
    pub transmission: f64,
    /// `(multiplications + divisions)` relative to FZF.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub antennas: usize,
    pub pilot_len: usize,
    pub strong_pilots: usize,
    pub costs: Vec<SchemeCost>,
}

impl ComplexityReport {
    pub fn get(&self, scheme: Scheme) -> Option<&SchemeCost> {
        self.costs.iter().find(|c| c.scheme == scheme)
    }
}

/// Multiplications of a local pseudo-inverse over `tau` directions.
fn pseudo_inverse_mults(m: f64, tau: f64) -> f64 {
    3.0 * tau * tau * m / 2.0 + tau * m / 2.0 + (tau * tau * tau - tau) / 3.0
}

/// Counts for FZF, PZF and PPZF at an AP zero-forcing `tau_s` pilots.
pub fn complexity(antennas: usize, pilot_len: usize, tau_s: usize, data_len: usize, num_ues: usize) -> Result<ComplexityReport> {
    if tau_s > pilot_len {
        return Err(Error::InvalidConfig(format!("tau_s ({tau_s}) exceeds pilot_len ({pilot_len})")));
    }
    let (m, tp, ts) = (antennas as f64, pilot_len as f64, tau_s as f64);
    let transmission = (data_len * antennas * num_ues) as f64;
    let fzf = (pseudo_inverse_mults(m, tp), tp);
    let pzf = (pseudo_inverse_mults(m, ts), ts);
    let ppzf = (pzf.0 + 2.0 * (tp - ts) * ts * m, ts);
    let total = fzf.0 + fzf.1;
    let costs = [(Scheme::Fzf, fzf), (Scheme::Pzf, pzf), (Scheme::Ppzf, ppzf)]
        .into_iter()
        .map(|(scheme, (mults, divs))| SchemeCost {
            scheme,
            multiplications: mults,
            divisions: divs,
            transmission,
            normalized: (mults + divs) / total,
        })
        .collect();
    Ok(ComplexityReport { antennas, pilot_len, strong_pilots: tau_s, costs })
}
