//! Local precoders. Every AP builds its vectors from its own pilot
//! observations only.
//!
//! MRT, FZF, PZF and PPZF vectors are indexed by pilot: co-pilot UEs share
//! one vector per AP. RZF vectors are indexed by UE.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::error::{Error, Result};
use crate::geometry::Snapshot;
use crate::linalg::{CMatrix, HermitianFactor, MAX_GRAM_CONDITION};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub type CVector = DVector<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Mrt,
    Fzf,
    Pzf,
    Ppzf,
    /// PPZF vectors with no power on weak UEs.
    PpzfNoMrt,
    Rzf,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [Scheme::Mrt, Scheme::Fzf, Scheme::Pzf, Scheme::Ppzf, Scheme::PpzfNoMrt, Scheme::Rzf];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mrt => "mrt",
            Scheme::Fzf => "fzf",
            Scheme::Pzf => "pzf",
            Scheme::Ppzf => "ppzf",
            Scheme::PpzfNoMrt => "ppzf-no-mrt",
            Scheme::Rzf => "rzf",
        }
    }

    pub fn has_closed_form(self) -> bool {
        self != Scheme::Rzf
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidExperiment(format!("unknown scheme `{s}`")))
    }
}

fn check_pilot(ch: &ChannelState, pilot: usize) -> Result<()> {
    if pilot >= ch.stats.pilot_len || !ch.stats.pilot_index.contains(&pilot) {
        return Err(Error::UnusedPilot { pilot });
    }
    Ok(())
}

/// Writes `x / sqrt(m_eff * theta)` into `out`.
fn scaled_column(x: &[Complex64], m_eff: usize, theta: f64, out: &mut [Complex64]) {
    let s = 1.0 / (m_eff as f64 * theta).sqrt();
    for (o, v) in out.iter_mut().zip(x) {
        *o = v * s;
    }
}

fn column(m: &CMatrix, j: usize) -> &[Complex64] {
    let r = m.nrows();
    &m.as_slice()[j * r..(j + 1) * r]
}

fn column_mut(m: &mut CMatrix, j: usize) -> &mut [Complex64] {
    let r = m.nrows();
    &mut m.as_mut_slice()[j * r..(j + 1) * r]
}

/// Zero-forcing over the pilot directions `pilots` (ascending):
/// `X (Xᴴ X)⁻¹` with column `j` scaled by `sqrt((M - |pilots|) theta_j)`.
/// Returns the ZF columns and the factor of the Gram matrix.
fn zero_forcing(
    h_bar: &CMatrix,
    theta: &[f64],
    pilots: &[usize],
) -> Result<(CMatrix, CMatrix, Option<HermitianFactor>)> {
    let m = h_bar.nrows();
    let tau = pilots.len();
    if tau == 0 {
        return Ok((CMatrix::zeros(m, 0), CMatrix::zeros(m, 0), None));
    }
    if m <= tau {
        return Err(Error::InsufficientDof { antennas: m, directions: tau });
    }
    let x = h_bar.select_columns(pilots);
    let gram = x.ad_mul(&x);
    let factor = HermitianFactor::new(&gram, MAX_GRAM_CONDITION)?;
    let mut w = &x * factor.inverse();
    for (j, &i) in pilots.iter().enumerate() {
        let s = Complex64::from(((m - tau) as f64 * theta[i]).sqrt());
        for v in column_mut(&mut w, j) {
            *v *= s;
        }
    }
    Ok((w, x, Some(factor)))
}

/// Strong-pilot vectors, weak-pilot vectors and the ZF part, for one AP.
fn pilot_precoders(scheme: Scheme, snapshot: &Snapshot, ch: &ChannelState, l: usize) -> Result<CMatrix> {
    let m = ch.antennas();
    let tau_p = ch.stats.pilot_len;
    let h_bar = &ch.h_bar[l];
    let theta: Vec<f64> = (0..tau_p).map(|i| ch.stats.theta_pilot[(l, i)]).collect();
    let mut out = CMatrix::zeros(m, tau_p);
    let all: Vec<usize>;
    let strong: &[usize] = match scheme {
        Scheme::Mrt => &[],
        Scheme::Fzf => {
            all = (0..tau_p).collect();
            &all
        }
        Scheme::Pzf | Scheme::Ppzf | Scheme::PpzfNoMrt => &snapshot.grouping.strong_pilots[l],
        Scheme::Rzf => unreachable!("RZF vectors are built per UE"),
    };
    let (zf, x, factor) = zero_forcing(h_bar, &theta, strong)?;
    for (j, &i) in strong.iter().enumerate() {
        column_mut(&mut out, i).copy_from_slice(column(&zf, j));
    }
    let protect = matches!(scheme, Scheme::Ppzf | Scheme::PpzfNoMrt) && !strong.is_empty();
    let gram_inv = factor.map(|f| f.inverse());
    for i in 0..tau_p {
        if strong.binary_search(&i).is_ok() {
            continue;
        }
        let hb = column(h_bar, i);
        if protect {
            // B x = x - X (XᴴX)⁻¹ Xᴴ x
            let xv = CVector::from_column_slice(hb);
            let coef = gram_inv.as_ref().expect("factor exists") * x.ad_mul(&xv);
            let projected = xv - &x * coef;
            scaled_column(projected.as_slice(), m - strong.len(), theta[i], column_mut(&mut out, i));
        } else {
            scaled_column(hb, m, theta[i], column_mut(&mut out, i));
        }
    }
    Ok(out)
}

/// MRT vector of AP `l` for pilot `pilot`: `h_bar e_i / sqrt(M theta_i)`.
pub fn mrt(ch: &ChannelState, l: usize, pilot: usize) -> Result<CVector> {
    check_pilot(ch, pilot)?;
    let mut out = CVector::zeros(ch.antennas());
    scaled_column(column(&ch.h_bar[l], pilot), ch.antennas(), ch.stats.theta_pilot[(l, pilot)], out.as_mut_slice());
    Ok(out)
}

/// Full-pilot zero-forcing vector of AP `l` for pilot `pilot`.
pub fn fzf(ch: &ChannelState, l: usize, pilot: usize) -> Result<CVector> {
    check_pilot(ch, pilot)?;
    let tau_p = ch.stats.pilot_len;
    let theta: Vec<f64> = (0..tau_p).map(|i| ch.stats.theta_pilot[(l, i)]).collect();
    let pilots: Vec<usize> = (0..tau_p).collect();
    let (w, _, _) = zero_forcing(&ch.h_bar[l], &theta, &pilots)?;
    Ok(w.column(pilot).into_owned())
}

/// Partial zero-forcing vector of AP `l` for a pilot used in its strong set.
pub fn pzf(ch: &ChannelState, snapshot: &Snapshot, l: usize, pilot: usize) -> Result<CVector> {
    check_pilot(ch, pilot)?;
    if snapshot.grouping.strong_pilots[l].binary_search(&pilot).is_err() {
        return Err(Error::PilotNotStrong { ap: l, pilot });
    }
    Ok(pilot_precoders(Scheme::Pzf, snapshot, ch, l)?.column(pilot).into_owned())
}

/// Protected MRT vector of AP `l` for a pilot outside its strong set:
/// the MRT direction projected onto the orthogonal complement of the
/// strong-pilot observations.
pub fn ppzf_mrt(ch: &ChannelState, snapshot: &Snapshot, l: usize, pilot: usize) -> Result<CVector> {
    check_pilot(ch, pilot)?;
    if snapshot.grouping.strong_pilots[l].binary_search(&pilot).is_ok() {
        return Err(Error::PilotNotWeak { ap: l, pilot });
    }
    Ok(pilot_precoders(Scheme::Ppzf, snapshot, ch, l)?.column(pilot).into_owned())
}

/// UEs entering AP `l`'s RZF inversion: those with positive regularizing power.
fn rzf_active(regularization: &DMatrix<f64>, l: usize) -> Vec<usize> {
    (0..regularization.ncols()).filter(|&k| regularization[(l, k)] > 0.0).collect()
}

/// Unnormalized RZF vectors `Ĥ (ĤᴴĤ + P⁻¹)⁻¹` over the active UEs; columns
/// of inactive UEs are zero.
fn rzf_unnormalized(ch: &ChannelState, regularization: &DMatrix<f64>, l: usize, active: &[usize]) -> Result<CMatrix> {
    let m = ch.antennas();
    let k_total = ch.stats.num_ues();
    let mut out = CMatrix::zeros(m, k_total);
    if active.is_empty() {
        return Ok(out);
    }
    let h = ch.h_hat[l].select_columns(active);
    let mut a = h.ad_mul(&h);
    for (j, &k) in active.iter().enumerate() {
        a[(j, j)] += Complex64::from(1.0 / regularization[(l, k)]);
    }
    let Some(chol) = a.cholesky() else {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    };
    let diag = chol.l_dirty().diagonal().map(|d| d.re * d.re);
    let condition = diag.max() / diag.min();
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    // Ĥ A⁻¹ = (A⁻¹ Ĥᴴ)ᴴ
    let v = chol.solve(&h.adjoint());
    for (j, &k) in active.iter().enumerate() {
        for (o, x) in column_mut(&mut out, k).iter_mut().zip(v.row(j).iter()) {
            *o = x.conj();
        }
    }
    Ok(out)
}

/// RZF regularization and the mean-square norms of the unnormalized
/// vectors, estimated over independent estimate draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RzfNormalizer {
    pub regularization: DMatrix<f64>,
    /// `E‖Ĥ (ĤᴴĤ + P⁻¹)⁻¹ e_k‖²` per (AP, UE); zero for inactive pairs.
    pub mean_sq_norm: DMatrix<f64>,
    pub realizations: usize,
}

impl RzfNormalizer {
    pub fn estimate(snapshot: &Snapshot, regularization: &DMatrix<f64>, realizations: usize, seed: u64) -> Result<Self> {
        let num_aps = snapshot.num_aps();
        let num_ues = snapshot.num_ues();
        let per_ap: Vec<Vec<f64>> = (0..num_aps)
            .into_par_iter()
            .map(|l| -> Result<Vec<f64>> {
                let mut rng = rng_from_seed(derive_seed(seed, &[stream::RZF_NORMALIZATION, l as u64]));
                let mut ch = ChannelState::zeros(snapshot.stats.clone(), snapshot.antennas());
                let active = rzf_active(regularization, l);
                let mut acc = vec![0.0; num_ues];
                for _ in 0..realizations {
                    ch.redraw_estimates_at(l, &mut rng);
                    let v = rzf_unnormalized(&ch, regularization, l, &active)?;
                    for &k in &active {
                        acc[k] += column(&v, k).iter().map(|x| x.norm_sqr()).sum::<f64>();
                    }
                }
                Ok(acc.into_iter().map(|s| s / realizations as f64).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            regularization: regularization.clone(),
            mean_sq_norm: DMatrix::from_fn(num_aps, num_ues, |l, k| per_ap[l][k]),
            realizations,
        })
    }
}

/// RZF vector of AP `l` for UE `k`.
pub fn rzf(ch: &ChannelState, normalizer: &RzfNormalizer, l: usize, k: usize) -> Result<CVector> {
    if !(normalizer.regularization[(l, k)] > 0.0) {
        return Err(Error::NotServed { ap: l, ue: k });
    }
    Ok(rzf_vectors(ch, normalizer, l)?.column(k).into_owned())
}

fn rzf_vectors(ch: &ChannelState, n: &RzfNormalizer, l: usize) -> Result<CMatrix> {
    let active = rzf_active(&n.regularization, l);
    let mut v = rzf_unnormalized(ch, &n.regularization, l, &active)?;
    for &k in &active {
        let s = Complex64::from(1.0 / n.mean_sq_norm[(l, k)].sqrt());
        for x in column_mut(&mut v, k) {
            *x *= s;
        }
    }
    Ok(v)
}

/// A precoding rule ready to be applied to channel realizations.
#[derive(Debug, Clone)]
pub enum Precoder {
    Pilot(Scheme),
    Rzf(RzfNormalizer),
}

impl Precoder {
    pub fn scheme(&self) -> Scheme {
        match self {
            Precoder::Pilot(s) => *s,
            Precoder::Rzf(_) => Scheme::Rzf,
        }
    }

    /// Whether vectors are indexed by UE (RZF) rather than by pilot.
    pub fn by_ue(&self) -> bool {
        matches!(self, Precoder::Rzf(_))
    }

    /// Checks degrees of freedom before any channel is drawn.
    pub fn check(&self, snapshot: &Snapshot) -> Result<()> {
        let m = snapshot.antennas();
        match self.scheme() {
            Scheme::Fzf if m <= snapshot.pilot_len() => {
                Err(Error::InsufficientDof { antennas: m, directions: snapshot.pilot_len() })
            }
            Scheme::Pzf | Scheme::Ppzf | Scheme::PpzfNoMrt => {
                match (0..snapshot.num_aps()).map(|l| snapshot.tau_s(l)).find(|&t| t >= m) {
                    Some(t) => Err(Error::InsufficientDof { antennas: m, directions: t }),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// All vectors of AP `l` as columns (`M × tau_p`, or `M × K` for RZF).
    pub fn build_ap(&self, snapshot: &Snapshot, ch: &ChannelState, l: usize) -> Result<CMatrix> {
        match self {
            Precoder::Pilot(s) => pilot_precoders(*s, snapshot, ch, l),
            Precoder::Rzf(n) => rzf_vectors(ch, n, l),
        }
    }

    pub fn build(&self, snapshot: &Snapshot, ch: &ChannelState) -> Result<PrecoderSet> {
        let vectors = (0..snapshot.num_aps())
            .map(|l| self.build_ap(snapshot, ch, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(PrecoderSet {
            scheme: self.scheme(),
            by_ue: self.by_ue(),
            pilot_index: snapshot.pilot_index.clone(),
            vectors,
            tau_s: (0..snapshot.num_aps()).map(|l| snapshot.tau_s(l)).collect(),
            delta: (0..snapshot.num_aps())
                .map(|l| (0..snapshot.num_ues()).map(|k| snapshot.is_strong(l, k)).collect())
                .collect(),
        })
    }
}

/// Every AP's vectors for one coherence block.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub scheme: Scheme,
    pub by_ue: bool,
    pub pilot_index: Vec<usize>,
    /// Per-AP `M × tau_p` (or `M × K`) matrices.
    pub vectors: Vec<CMatrix>,
    pub tau_s: Vec<usize>,
    /// `delta[l][k]`: UE k is zero-forced by AP l.
    pub delta: Vec<Vec<bool>>,
}

impl PrecoderSet {
    /// Column of AP `l`'s matrix used for UE `k`.
    pub fn column_of(&self, k: usize) -> usize {
        if self.by_ue {
            k
        } else {
            self.pilot_index[k]
        }
    }

    /// Vector AP `l` uses for UE `k`.
    pub fn vector(&self, l: usize, k: usize) -> CVector {
        self.vectors[l].column(self.column_of(k)).into_owned()
    }

    pub fn dump(&self) -> PrecoderDump {
        PrecoderDump {
            scheme: self.scheme,
            by_ue: self.by_ue,
            tau_s: self.tau_s.clone(),
            vectors: self
                .vectors
                .iter()
                .map(|w| (0..w.ncols()).map(|j| w.column(j).iter().map(|z| [z.re, z.im]).collect()).collect())
                .collect(),
        }
    }
}

/// JSON form of a precoder set: `vectors[l][j][a] = [re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderDump {
    pub scheme: Scheme,
    pub by_ue: bool,
    pub tau_s: Vec<usize>,
    pub vectors: Vec<Vec<Vec<[f64; 2]>>>,
}
