//! Downlink spectral efficiency: the hardening bound evaluated in closed
//! form or by Monte-Carlo simulation.
//!
//! Both paths evaluate
//!
//! ```text
//! SINR_k = |E{a_kk}|² / (Var{a_kk} + Σ_{t≠k} E|a_kt|² + 1),
//! a_kt   = Σ_l sqrt(rho_lt) h_lkᴴ w_lt
//! ```
//!
//! where the closed form uses the per-scheme coefficients `g`, `z`:
//! numerator `(Σ_l sqrt(rho_lk g_lkk))²`, denominator
//! `Σ_{t∈P_k∖k} (Σ_l sqrt(rho_lt g_lkt))² + Σ_l Σ_t rho_lt z_lkt + 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::geometry::Snapshot;
use crate::precoding::{Precoder, Scheme};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Realizations per Monte-Carlo block. Blocks have fixed size and their own
/// seeds, so estimates do not depend on the number of worker threads.
pub const MC_BLOCK: usize = 512;

pub fn se_from_sinr(sinr: f64, cfg: &NetworkConfig) -> f64 {
    cfg.prelog() * (1.0 + sinr).log2()
}

/// Coherent (`g`) and non-coherent (`z`) gains per (AP, UE, UE).
#[derive(Debug, Clone, PartialEq)]
pub struct SinrCoefficients {
    pub scheme: Scheme,
    num_aps: usize,
    num_ues: usize,
    g: Vec<f64>,
    z: Vec<f64>,
}

impl SinrCoefficients {
    pub fn new(scheme: Scheme, snapshot: &Snapshot) -> Result<Self> {
        let (num_aps, num_ues) = (snapshot.num_aps(), snapshot.num_ues());
        let m = snapshot.antennas() as f64;
        let tau_p = snapshot.pilot_len();
        let st = &snapshot.stats;
        Precoder::Pilot(scheme).check(snapshot)?;
        let mut g = vec![0.0; num_aps * num_ues * num_ues];
        let mut z = vec![0.0; num_aps * num_ues * num_ues];
        for l in 0..num_aps {
            let tau_s = snapshot.tau_s(l) as f64;
            for k in 0..num_ues {
                let (gamma, beta) = (st.gamma[(l, k)], st.beta[(l, k)]);
                let dk = snapshot.is_strong(l, k);
                for t in 0..num_ues {
                    let dt = snapshot.is_strong(l, t);
                    let (gv, zv) = match scheme {
                        Scheme::Mrt => (m * gamma, beta),
                        Scheme::Fzf => ((m - tau_p as f64) * gamma, beta - gamma),
                        Scheme::Pzf => {
                            let gain = if dt { m - tau_s } else { m };
                            (gain * gamma, if dk && dt { beta - gamma } else { beta })
                        }
                        Scheme::Ppzf | Scheme::PpzfNoMrt => {
                            ((m - tau_s) * gamma, if dk { beta - gamma } else { beta })
                        }
                        Scheme::Rzf => return Err(Error::NoClosedForm(scheme.to_string())),
                    };
                    let idx = (l * num_ues + k) * num_ues + t;
                    g[idx] = gv;
                    z[idx] = zv;
                }
            }
        }
        Ok(Self { scheme, num_aps, num_ues, g, z })
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    #[inline]
    pub fn g(&self, l: usize, k: usize, t: usize) -> f64 {
        self.g[(l * self.num_ues + k) * self.num_ues + t]
    }

    #[inline]
    pub fn z(&self, l: usize, k: usize, t: usize) -> f64 {
        self.z[(l * self.num_ues + k) * self.num_ues + t]
    }

    /// Closed-form SINR of UE `k` under the transmit powers `rho` (`L × K`).
    pub fn sinr(&self, copilots: &[Vec<usize>], rho: &DMatrix<f64>, k: usize) -> f64 {
        let coherent = |t: usize| -> f64 {
            (0..self.num_aps).map(|l| (rho[(l, t)] * self.g(l, k, t)).sqrt()).sum()
        };
        let signal = coherent(k).powi(2);
        let mut denom = 1.0;
        for &t in &copilots[k] {
            if t != k {
                denom += coherent(t).powi(2);
            }
        }
        for l in 0..self.num_aps {
            for t in 0..self.num_ues {
                denom += rho[(l, t)] * self.z(l, k, t);
            }
        }
        signal / denom
    }
}

/// Transmit powers actually used by `scheme`: PPZF without MRT leaves the
/// weak UEs silent and keeps the remaining entries unchanged.
pub fn effective_power(scheme: Scheme, snapshot: &Snapshot, rho: &DMatrix<f64>) -> DMatrix<f64> {
    if scheme != Scheme::PpzfNoMrt {
        return rho.clone();
    }
    DMatrix::from_fn(rho.nrows(), rho.ncols(), |l, k| if snapshot.is_strong(l, k) { rho[(l, k)] } else { 0.0 })
}

/// Closed-form SINR of every UE.
pub fn sinr_closed_form(scheme: Scheme, snapshot: &Snapshot, rho: &DMatrix<f64>) -> Result<Vec<f64>> {
    let coef = SinrCoefficients::new(scheme, snapshot)?;
    let rho = effective_power(scheme, snapshot, rho);
    Ok((0..snapshot.num_ues()).map(|k| coef.sinr(&snapshot.copilots, &rho, k)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

/// Monte-Carlo estimate for one UE with delta-method standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub sinr: f64,
    pub sinr_stderr: f64,
    /// `|E{a_kk}|²`.
    pub coherent: f64,
    pub coherent_stderr: f64,
    /// `Var{a_kk}`.
    pub uncertainty: f64,
    pub uncertainty_stderr: f64,
    /// `Σ_{t≠k} E|a_kt|²`.
    pub interference: f64,
    pub interference_stderr: f64,
}

/// Per-UE result of one evaluation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeResult {
    pub method: Method,
    pub sinr: Vec<f64>,
    pub se: Vec<f64>,
    /// Standard error of each SE value (Monte-Carlo only).
    pub se_stderr: Option<Vec<f64>>,
    pub mc: Option<Vec<McEstimate>>,
}

impl SeResult {
    pub fn closed_form(sinr: Vec<f64>, cfg: &NetworkConfig) -> Self {
        let se = sinr.iter().map(|&s| se_from_sinr(s, cfg)).collect();
        Self { method: Method::ClosedForm, sinr, se, se_stderr: None, mc: None }
    }

    pub fn monte_carlo(mc: Vec<McEstimate>, cfg: &NetworkConfig) -> Self {
        let sinr: Vec<f64> = mc.iter().map(|e| e.sinr).collect();
        let se = sinr.iter().map(|&s| se_from_sinr(s, cfg)).collect();
        let se_stderr = mc
            .iter()
            .map(|e| cfg.prelog() * e.sinr_stderr / ((1.0 + e.sinr) * std::f64::consts::LN_2))
            .collect();
        Self { method: Method::MonteCarlo, sinr, se, se_stderr: Some(se_stderr), mc: Some(mc) }
    }
}

/// Running mean and co-moment matrix of the per-realization vector
/// `(Re a_kk, Im a_kk, |a_kk|², Σ_{t≠k} |a_kt|²)`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: [f64; 4],
    m2: [[f64; 4]; 4],
}

impl Moments {
    fn push(&mut self, x: [f64; 4]) {
        self.n += 1.0;
        let mut d = [0.0; 4];
        for i in 0..4 {
            d[i] = x[i] - self.mean[i];
            self.mean[i] += d[i] / self.n;
        }
        for i in 0..4 {
            let e = x[i] - self.mean[i];
            for j in 0..4 {
                self.m2[i][j] += d[j] * e;
            }
        }
    }

    /// Pairwise combination of two disjoint sample sets.
    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        let mut d = [0.0; 4];
        for i in 0..4 {
            d[i] = other.mean[i] - self.mean[i];
        }
        let w = self.n * other.n / n;
        for i in 0..4 {
            for j in 0..4 {
                self.m2[i][j] += other.m2[i][j] + d[i] * d[j] * w;
            }
        }
        for i in 0..4 {
            self.mean[i] += d[i] * other.n / n;
        }
        self.n = n;
    }

    fn estimate(&self) -> McEstimate {
        let [mr, mi, q, u] = self.mean;
        let cov = |i: usize, j: usize| 0.5 * (self.m2[i][j] + self.m2[j][i]) / (self.n - 1.0).max(1.0);
        let se = |grad: [f64; 4]| -> f64 {
            let mut v = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    v += grad[i] * grad[j] * cov(i, j);
                }
            }
            (v.max(0.0) / self.n).sqrt()
        };
        let coherent = mr * mr + mi * mi;
        let uncertainty = q - coherent;
        let denom = uncertainty + u + 1.0;
        let sinr = coherent / denom;
        let dm = (denom + coherent) / (denom * denom);
        let dq = -coherent / (denom * denom);
        McEstimate {
            sinr,
            sinr_stderr: se([2.0 * mr * dm, 2.0 * mi * dm, dq, dq]),
            coherent,
            coherent_stderr: se([2.0 * mr, 2.0 * mi, 0.0, 0.0]),
            uncertainty,
            uncertainty_stderr: se([-2.0 * mr, -2.0 * mi, 1.0, 0.0]),
            interference: u,
            interference_stderr: se([0.0, 0.0, 0.0, 1.0]),
        }
    }
}

/// One precoder with the transmit powers it is evaluated under.
#[derive(Debug, Clone)]
pub struct McCase {
    pub precoder: Precoder,
    pub rho: DMatrix<f64>,
}

impl McCase {
    pub fn new(precoder: Precoder, snapshot: &Snapshot, rho: &DMatrix<f64>) -> Self {
        let rho = effective_power(precoder.scheme(), snapshot, rho);
        Self { precoder, rho }
    }
}

/// Accumulates the effective gains `a_kt` of one realization.
fn effective_gains(
    snapshot: &Snapshot,
    ch: &ChannelState,
    precoder: &Precoder,
    sqrt_rho: &DMatrix<f64>,
    a: &mut [Complex64],
) -> Result<()> {
    let num_ues = snapshot.num_ues();
    a.fill(Complex64::new(0.0, 0.0));
    for l in 0..snapshot.num_aps() {
        if (0..num_ues).all(|t| sqrt_rho[(l, t)] == 0.0) {
            continue;
        }
        let w = precoder.build_ap(snapshot, ch, l)?;
        let p = ch.h[l].ad_mul(&w);
        for t in 0..num_ues {
            let s = sqrt_rho[(l, t)];
            if s == 0.0 {
                continue;
            }
            let col = if precoder.by_ue() { t } else { snapshot.pilot_index[t] };
            for k in 0..num_ues {
                a[k * num_ues + t] += p[(k, col)] * s;
            }
        }
    }
    Ok(())
}

/// Monte-Carlo hardening-bound SINR of every UE for several cases that
/// share the same channel draws. Returns `[case][ue]`.
pub fn sinr_monte_carlo_multi(
    snapshot: &Snapshot,
    cases: &[McCase],
    realizations: usize,
    seed: u64,
) -> Result<Vec<Vec<McEstimate>>> {
    for c in cases {
        c.precoder.check(snapshot)?;
    }
    let num_ues = snapshot.num_ues();
    let sqrt_rho: Vec<DMatrix<f64>> = cases.iter().map(|c| c.rho.map(f64::sqrt)).collect();
    let blocks = realizations.div_ceil(MC_BLOCK);
    let partial: Vec<Vec<Vec<Moments>>> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<Vec<Vec<Moments>>> {
            let n = MC_BLOCK.min(realizations - b * MC_BLOCK);
            let mut rng = rng_from_seed(derive_seed(seed, &[stream::MONTE_CARLO, b as u64]));
            let mut ch = ChannelState::zeros(snapshot.stats.clone(), snapshot.antennas());
            let mut acc = vec![vec![Moments::default(); num_ues]; cases.len()];
            let mut a = vec![Complex64::new(0.0, 0.0); num_ues * num_ues];
            for _ in 0..n {
                ch.redraw(&mut rng);
                for (c, case) in cases.iter().enumerate() {
                    effective_gains(snapshot, &ch, &case.precoder, &sqrt_rho[c], &mut a)?;
                    for k in 0..num_ues {
                        let row = &a[k * num_ues..(k + 1) * num_ues];
                        let own = row[k];
                        let others: f64 =
                            row.iter().enumerate().filter(|&(t, _)| t != k).map(|(_, x)| x.norm_sqr()).sum();
                        acc[c][k].push([own.re, own.im, own.norm_sqr(), others]);
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![vec![Moments::default(); num_ues]; cases.len()];
    for block in &partial {
        for (c, ues) in block.iter().enumerate() {
            for (k, m) in ues.iter().enumerate() {
                total[c][k].merge(m);
            }
        }
    }
    Ok(total.iter().map(|ues| ues.iter().map(Moments::estimate).collect()).collect())
}

/// Monte-Carlo hardening-bound SINR of every UE for one precoder.
pub fn sinr_monte_carlo(
    snapshot: &Snapshot,
    precoder: &Precoder,
    rho: &DMatrix<f64>,
    realizations: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    let case = McCase::new(precoder.clone(), snapshot, rho);
    Ok(sinr_monte_carlo_multi(snapshot, &[case], realizations, seed)?.remove(0))
}
