//! Small-scale fading, uplink training and MMSE channel estimation.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::geometry::Snapshot;
use crate::linalg::CMatrix;
use crate::rng::{complex_normal, rng_from_seed};

/// Second-order statistics of the MMSE estimates. They depend only on the
/// large-scale fading, pilot assignment and pilot powers.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    pub pilot_len: usize,
    pub pilot_index: Vec<usize>,
    /// `c[l,k]`: gain mapping `h_bar e_{i_k}` to `h_hat[l,k]`.
    pub c: DMatrix<f64>,
    /// `gamma[l,k]`: mean-square estimate per antenna.
    pub gamma: DMatrix<f64>,
    /// `theta[l,i]`: per-antenna variance of pilot observation `h_bar e_i`.
    pub theta_pilot: DMatrix<f64>,
    /// `sqrt(p_k)`, kept for forming pilot observations.
    pub sqrt_power: Vec<f64>,
    /// `beta[l,k]`.
    pub beta: DMatrix<f64>,
}

impl EstimationStats {
    pub fn new(beta: &DMatrix<f64>, pilot_index: &[usize], ue_power: &[f64], pilot_len: usize) -> Self {
        let (num_aps, num_ues) = beta.shape();
        let tau = pilot_len as f64;
        let mut load = DMatrix::<f64>::zeros(num_aps, pilot_len);
        for l in 0..num_aps {
            for k in 0..num_ues {
                load[(l, pilot_index[k])] += ue_power[k] * beta[(l, k)];
            }
        }
        let denom = |l: usize, k: usize| tau * load[(l, pilot_index[k])] + 1.0;
        let c = DMatrix::from_fn(num_aps, num_ues, |l, k| ue_power[k].sqrt() * beta[(l, k)] / denom(l, k));
        let gamma = DMatrix::from_fn(num_aps, num_ues, |l, k| {
            ue_power[k] * tau * beta[(l, k)] * beta[(l, k)] / denom(l, k)
        });
        let theta_pilot = load.map(|x| tau * (tau * x + 1.0));
        Self {
            pilot_len,
            pilot_index: pilot_index.to_vec(),
            c,
            gamma,
            theta_pilot,
            sqrt_power: ue_power.iter().map(|p| p.sqrt()).collect(),
            beta: beta.clone(),
        }
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.beta.ncols()
    }

    /// `theta[l,k] = gamma[l,k] / c[l,k]^2`, a function of UE k's pilot only.
    pub fn theta(&self, l: usize, k: usize) -> f64 {
        self.theta_pilot[(l, self.pilot_index[k])]
    }
}

/// One coherence block: true channels, pilot observations and estimates.
/// Per-AP matrices are `M × K` (channels, estimates) or `M × tau_p`.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub stats: Arc<EstimationStats>,
    pub h: Vec<CMatrix>,
    pub y_pilot: Vec<CMatrix>,
    pub h_bar: Vec<CMatrix>,
    pub h_hat: Vec<CMatrix>,
}

impl ChannelState {
    pub fn zeros(stats: Arc<EstimationStats>, antennas: usize) -> Self {
        let (l, k, tau) = (stats.num_aps(), stats.num_ues(), stats.pilot_len);
        let zeros = |cols| vec![CMatrix::zeros(antennas, cols); l];
        Self { h: zeros(k), y_pilot: zeros(tau), h_bar: zeros(tau), h_hat: zeros(k), stats }
    }

    pub fn antennas(&self) -> usize {
        self.h[0].nrows()
    }

    /// Draws a fresh block in place.
    ///
    /// With the pilot book `sqrt(tau_p) I`, column `i` of the received pilot
    /// block is `sqrt(tau_p) Σ_{i_k = i} sqrt(p_k) h_k + n_i` and
    /// `h_bar = sqrt(tau_p) Y`.
    pub fn redraw<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let stats = &*self.stats;
        let m = self.antennas();
        let tau = stats.pilot_len;
        let sqrt_tau = (tau as f64).sqrt();
        for l in 0..stats.num_aps() {
            let h = &mut self.h[l];
            for k in 0..stats.num_ues() {
                let b = stats.beta[(l, k)];
                for a in 0..m {
                    h[(a, k)] = complex_normal(rng, b);
                }
            }
            let y = &mut self.y_pilot[l];
            for i in 0..tau {
                for a in 0..m {
                    y[(a, i)] = complex_normal(rng, 1.0);
                }
            }
            for k in 0..stats.num_ues() {
                let s = sqrt_tau * stats.sqrt_power[k];
                let i = stats.pilot_index[k];
                for a in 0..m {
                    y[(a, i)] += h[(a, k)] * s;
                }
            }
            let h_bar = &mut self.h_bar[l];
            for i in 0..tau {
                for a in 0..m {
                    h_bar[(a, i)] = y[(a, i)] * sqrt_tau;
                }
            }
            let h_hat = &mut self.h_hat[l];
            for k in 0..stats.num_ues() {
                let c = stats.c[(l, k)];
                let i = stats.pilot_index[k];
                for a in 0..m {
                    h_hat[(a, k)] = h_bar[(a, i)] * c;
                }
            }
        }
    }

    /// Draws only the estimates, straight from their distribution:
    /// `h_bar e_i ~ CN(0, theta_i I)`. True channels and pilot blocks are
    /// left untouched.
    pub fn redraw_estimates<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for l in 0..self.stats.num_aps() {
            self.redraw_estimates_at(l, rng);
        }
    }

    /// [`redraw_estimates`](Self::redraw_estimates) for AP `l` alone.
    pub fn redraw_estimates_at<R: Rng + ?Sized>(&mut self, l: usize, rng: &mut R) {
        let stats = &*self.stats;
        let m = self.antennas();
        let h_bar = &mut self.h_bar[l];
        for i in 0..stats.pilot_len {
            let theta = stats.theta_pilot[(l, i)];
            for a in 0..m {
                h_bar[(a, i)] = complex_normal(rng, theta);
            }
        }
        let h_hat = &mut self.h_hat[l];
        for k in 0..stats.num_ues() {
            let c = stats.c[(l, k)];
            let i = stats.pilot_index[k];
            for a in 0..m {
                h_hat[(a, k)] = h_bar[(a, i)] * c;
            }
        }
    }

    /// `h_hat[l,k]` as a slice of the column-major storage.
    pub fn estimate(&self, l: usize, k: usize) -> &[Complex64] {
        let m = self.antennas();
        &self.h_hat[l].as_slice()[k * m..(k + 1) * m]
    }
}

/// Realizes one coherence block for `snapshot`.
pub fn realize_channels(snapshot: &Snapshot, seed: u64) -> ChannelState {
    let mut state = ChannelState::zeros(snapshot.stats.clone(), snapshot.antennas());
    state.redraw(&mut rng_from_seed(seed));
    state
}
