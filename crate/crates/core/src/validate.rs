//! Fast self-checks of the simulator's invariants, run by `cellfree validate`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{realize_channels, ChannelState};
use crate::complexity::complexity;
use crate::config::NetworkConfig;
use crate::error::Result;
use crate::experiment::{evaluate, ExperimentSpec};
use crate::geometry::{generate_snapshot, Snapshot};
use crate::power::{heuristic_power, maxmin_power, MaxMinProblem};
use crate::precoding::{Precoder, PrecoderSet, Scheme};
use crate::se::{sinr_closed_form, sinr_monte_carlo_multi, McCase};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest `|ĥ_kᴴ w_t| / (‖ĥ_k‖‖w_t‖)` over pairs `(k, t)` selected by `pick`.
fn leakage(snap: &Snapshot, ch: &ChannelState, set: &PrecoderSet, pick: impl Fn(usize, usize, usize) -> bool) -> f64 {
    let mut worst: f64 = 0.0;
    for l in 0..snap.num_aps() {
        for k in 0..snap.num_ues() {
            for t in 0..snap.num_ues() {
                if !pick(l, k, t) {
                    continue;
                }
                let (h, w) = (ch.estimate(l, k), set.vector(l, t));
                let denom = norm(h) * w.norm();
                if denom > 0.0 {
                    worst = worst.max(inner(h, w.as_slice()).norm() / denom);
                }
            }
        }
    }
    worst
}

fn small_network() -> NetworkConfig {
    NetworkConfig { num_aps: 6, antennas_per_ap: 6, num_ues: 6, pilot_len: 3, mc_realizations: 20_000, ..Default::default() }
}

fn orthogonality(snap: &Snapshot, ch: &ChannelState) -> Result<Vec<Check>> {
    let tol = 1e-10;
    let pi = &snap.pilot_index;
    let fzf = Precoder::Pilot(Scheme::Fzf).build(snap, ch)?;
    let pzf = Precoder::Pilot(Scheme::Pzf).build(snap, ch)?;
    let ppzf = Precoder::Pilot(Scheme::Ppzf).build(snap, ch)?;
    let a = leakage(snap, ch, &fzf, |_, k, t| pi[k] != pi[t]);
    let b = leakage(snap, ch, &pzf, |l, k, t| snap.is_strong(l, t) && pi[k] != pi[t] && snap.is_strong(l, k));
    let c = leakage(snap, ch, &ppzf, |l, k, t| snap.is_strong(l, k) && pi[k] != pi[t]);
    Ok(vec![
        check("fzf-nulls-other-pilots", a <= tol, format!("max relative leakage {a:.2e}")),
        check("pzf-nulls-strong-pilots", b <= tol, format!("max relative leakage {b:.2e}")),
        check("ppzf-protects-strong-ues", c <= tol, format!("max relative leakage {c:.2e}")),
    ])
}

fn copilot_proportionality(snap: &Snapshot, ch: &ChannelState) -> Check {
    let mut worst: f64 = 0.0;
    for l in 0..snap.num_aps() {
        for set in &snap.copilots {
            for w in set.windows(2) {
                let (a, b) = (ch.estimate(l, w[0]), ch.estimate(l, w[1]));
                let ratio = ch.stats.c[(l, w[1])] / ch.stats.c[(l, w[0])];
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x * ratio - y).norm() / y.norm().max(f64::MIN_POSITIVE));
                }
            }
        }
    }
    check("copilot-estimates-proportional", worst <= 1e-12, format!("max relative deviation {worst:.2e}"))
}

fn degenerations(snap: &Snapshot, ch: &ChannelState) -> Result<Vec<Check>> {
    let rho = heuristic_power(snap).rho;
    let mut out = Vec::new();
    for (threshold, other, name) in [(0.0, Scheme::Mrt, "pzf-at-zero-is-mrt"), (1.0, Scheme::Fzf, "pzf-at-one-is-fzf")] {
        let s = snap.with_grouping_threshold(threshold);
        let p = Precoder::Pilot(Scheme::Pzf).build(&s, ch)?.vectors;
        let q = Precoder::Pilot(other).build(&s, ch)?.vectors;
        let same_vectors = p == q;
        let same_sinr = sinr_closed_form(Scheme::Pzf, &s, &rho)? == sinr_closed_form(other, &s, &rho)?;
        out.push(check(name, same_vectors && same_sinr, format!("vectors equal: {same_vectors}, SINRs equal: {same_sinr}")));
    }
    Ok(out)
}

fn closed_form_matches_monte_carlo(snap: &Snapshot) -> Result<Check> {
    let rho = heuristic_power(snap).rho;
    let schemes = [Scheme::Mrt, Scheme::Fzf, Scheme::Pzf, Scheme::Ppzf];
    let cases: Vec<McCase> = schemes.iter().map(|&s| McCase::new(Precoder::Pilot(s), snap, &rho)).collect();
    let mc = sinr_monte_carlo_multi(snap, &cases, snap.cfg.mc_realizations, 17)?;
    let mut worst: f64 = 0.0;
    for (s, est) in schemes.iter().zip(&mc) {
        let cf = sinr_closed_form(*s, snap, &rho)?;
        for (c, e) in cf.iter().zip(est) {
            worst = worst.max((c - e.sinr).abs() / e.sinr_stderr);
        }
    }
    Ok(check(
        "closed-form-within-monte-carlo-error",
        worst <= 4.0,
        format!("largest deviation {worst:.2} standard errors over {} draws", snap.cfg.mc_realizations),
    ))
}

fn complexity_table() -> Result<Check> {
    let r = complexity(16, 10, 10, 95, 20)?;
    let f = r.get(Scheme::Fzf).expect("FZF row");
    let ok = f.multiplications == 2810.0 && f.divisions == 10.0;
    Ok(check("complexity-arithmetic", ok, format!("FZF at M=16, tau_p=10: {} mults, {} divisions", f.multiplications, f.divisions)))
}

fn maxmin_improves(snap: &Snapshot) -> Result<Check> {
    let prob = MaxMinProblem::new(Scheme::Ppzf, snap)?;
    let heur = prob.min_sinr(&prob.initial);
    let alloc = maxmin_power(&prob);
    let got = prob.min_sinr(&alloc.rho);
    let within = (0..snap.num_aps()).all(|l| alloc.ap_total(l) <= snap.ap_power[l] * (1.0 + 1e-9));
    Ok(check(
        "maxmin-beats-heuristic",
        got >= heur && within,
        format!("min SINR {heur:.4} -> {got:.4}, per-AP budgets respected: {within}"),
    ))
}

fn reproducible() -> Result<Check> {
    let spec = ExperimentSpec {
        network: NetworkConfig { num_aps: 5, antennas_per_ap: 4, num_ues: 4, pilot_len: 2, mc_realizations: 300, ..Default::default() },
        schemes: vec![Scheme::Mrt, Scheme::Ppzf, Scheme::Rzf],
        snapshots: 4,
        rzf_realizations: 100,
        ..Default::default()
    };
    let (a, b) = (evaluate(&spec)?, evaluate(&spec)?);
    Ok(check("runs-are-reproducible", a == b, format!("{} records compared", a.len())))
}

/// Runs every check; errors abort the suite.
pub fn run_checks() -> Result<Vec<Check>> {
    let snap = generate_snapshot(&small_network(), 3)?;
    let ch = realize_channels(&snap, 4);
    let mut out = orthogonality(&snap, &ch)?;
    out.push(copilot_proportionality(&snap, &ch));
    out.extend(degenerations(&snap, &ch)?);
    out.push(closed_form_matches_monte_carlo(&snap)?);
    out.push(complexity_table()?);
    out.push(maxmin_improves(&snap)?);
    out.push(reproducible()?);
    let zero = DMatrix::zeros(snap.num_aps(), snap.num_ues());
    let silent = sinr_closed_form(Scheme::Mrt, &snap, &zero)?.iter().all(|&s| s == 0.0);
    out.push(check("silent-network-has-zero-sinr", silent, String::new()));
    Ok(out)
}
