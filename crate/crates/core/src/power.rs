//! Downlink power control.
//!
//! The heuristic shares each AP's power in proportion to the estimate
//! quality of the UEs it serves. Max-min fairness bisects on the common
//! SINR target `nu`; each target is a cone feasibility problem in the
//! scaled amplitudes `x_lt = sqrt(rho_lt / rho_l^max)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cone::{min_max_violation, ConeProblem, SocConstraint, SolverOptions, SparseRow, SparseVec, Status};
use crate::error::{Error, Result};
use crate::geometry::Snapshot;
use crate::precoding::Scheme;
use crate::se::{effective_power, SinrCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Heuristic,
    #[serde(rename = "maxmin", alias = "max-min")]
    MaxMin,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Heuristic => "heuristic",
            Policy::MaxMin => "maxmin",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heuristic" => Ok(Policy::Heuristic),
            "maxmin" | "max-min" => Ok(Policy::MaxMin),
            _ => Err(Error::InvalidExperiment(format!("unknown power policy `{s}`"))),
        }
    }
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

/// One feasibility test of the bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub nu: f64,
    pub status: Status,
    pub solver_iterations: usize,
    pub max_violation: f64,
    /// Bracket after this step.
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinTrace {
    /// Smallest SINR achieved by the returned allocation.
    pub nu_lo: f64,
    /// Bound above which no allocation was found feasible.
    pub nu_hi: f64,
    pub steps: Vec<BisectionStep>,
    /// Steps whose feasibility stayed undecided (treated as infeasible).
    pub undecided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub policy: Policy,
    /// `L × K` noise-normalized transmit powers.
    #[serde(with = "matrix_rows")]
    pub rho: DMatrix<f64>,
    pub maxmin: Option<MaxMinTrace>,
    pub notes: Vec<String>,
}

impl PowerAllocation {
    pub fn ap_total(&self, l: usize) -> f64 {
        self.rho.row(l).sum()
    }
}

/// `rho_lk = gamma_lk / Σ_{served i} gamma_li · rho_l^max` over served UEs.
pub fn heuristic_power(snapshot: &Snapshot) -> PowerAllocation {
    let (num_aps, num_ues) = (snapshot.num_aps(), snapshot.num_ues());
    let gamma = &snapshot.stats.gamma;
    let mut rho = DMatrix::zeros(num_aps, num_ues);
    let mut notes = Vec::new();
    for l in 0..num_aps {
        let total: f64 = (0..num_ues).filter(|&k| snapshot.served[l][k]).map(|k| gamma[(l, k)]).sum();
        if !(total > 0.0) {
            notes.push(format!("AP {l} serves no UE and stays silent"));
            continue;
        }
        for k in 0..num_ues {
            if snapshot.served[l][k] {
                rho[(l, k)] = gamma[(l, k)] / total * snapshot.ap_power[l];
            }
        }
    }
    PowerAllocation { policy: Policy::Heuristic, rho, maxmin: None, notes }
}

/// Max-min fairness for one precoding scheme.
#[derive(Debug, Clone)]
pub struct MaxMinProblem {
    pub coef: SinrCoefficients,
    pub ap_power: Vec<f64>,
    pub copilots: Vec<Vec<usize>>,
    /// Optimization variable of each (AP, UE) pair, if the pair may carry power.
    pub var_of: Vec<Vec<Option<usize>>>,
    /// Starting allocation; its smallest SINR is the first lower bound.
    pub initial: DMatrix<f64>,
    pub eps_nu: f64,
    pub eps_feas: f64,
    pub max_steps: usize,
    pub solver: SolverOptions,
}

impl MaxMinProblem {
    pub fn new(scheme: Scheme, snapshot: &Snapshot) -> Result<Self> {
        let coef = SinrCoefficients::new(scheme, snapshot)?;
        let (num_aps, num_ues) = (snapshot.num_aps(), snapshot.num_ues());
        let mut next = 0;
        let var_of = (0..num_aps)
            .map(|l| {
                (0..num_ues)
                    .map(|t| {
                        let active = snapshot.served[l][t] && (scheme != Scheme::PpzfNoMrt || snapshot.is_strong(l, t));
                        active.then(|| {
                            next += 1;
                            next - 1
                        })
                    })
                    .collect()
            })
            .collect();
        let initial = effective_power(scheme, snapshot, &heuristic_power(snapshot).rho);
        let eps_feas = 1e-6;
        Ok(Self {
            coef,
            ap_power: snapshot.ap_power.clone(),
            copilots: snapshot.copilots.clone(),
            var_of,
            initial,
            eps_nu: 1e-3,
            eps_feas,
            max_steps: 60,
            solver: SolverOptions { tolerance: eps_feas, ..Default::default() },
        })
    }

    pub fn num_vars(&self) -> usize {
        self.var_of.iter().flatten().filter(|v| v.is_some()).count()
    }

    pub fn num_aps(&self) -> usize {
        self.var_of.len()
    }

    pub fn num_ues(&self) -> usize {
        self.copilots.len()
    }

    pub fn sinr(&self, rho: &DMatrix<f64>) -> Vec<f64> {
        (0..self.num_ues()).map(|k| self.coef.sinr(&self.copilots, rho, k)).collect()
    }

    pub fn min_sinr(&self, rho: &DMatrix<f64>) -> f64 {
        self.sinr(rho).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Powers from scaled amplitudes, after scaling every AP row back onto
    /// its power budget.
    pub fn to_power(&self, x: &[f64]) -> DMatrix<f64> {
        let mut rho = DMatrix::zeros(self.num_aps(), self.num_ues());
        for l in 0..self.num_aps() {
            let norm_sq: f64 = self.var_of[l].iter().flatten().map(|&v| x[v].max(0.0).powi(2)).sum();
            let shrink = if norm_sq > 1.0 { 1.0 / norm_sq } else { 1.0 };
            for t in 0..self.num_ues() {
                if let Some(v) = self.var_of[l][t] {
                    rho[(l, t)] = self.ap_power[l] * x[v].max(0.0).powi(2) * shrink;
                }
            }
        }
        rho
    }

    pub fn to_amplitudes(&self, rho: &DMatrix<f64>) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars()];
        for l in 0..self.num_aps() {
            for t in 0..self.num_ues() {
                if let Some(v) = self.var_of[l][t] {
                    x[v] = (rho[(l, t)] / self.ap_power[l]).sqrt();
                }
            }
        }
        x
    }

    /// Interference-free bound: no UE can beat the SINR it would get from
    /// all of its APs' power with no interference.
    pub fn upper_bound(&self) -> f64 {
        (0..self.num_ues())
            .map(|k| {
                (0..self.num_aps())
                    .filter(|&l| self.var_of[l][k].is_some())
                    .map(|l| (self.ap_power[l] * self.coef.g(l, k, k)).sqrt())
                    .sum::<f64>()
                    .powi(2)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Nominal cone sizes: `K + |P_k| + 1` per UE (coherent, non-coherent,
    /// noise and right-hand side) and `K + 1` per AP.
    pub fn cone_sizes(&self) -> (Vec<usize>, Vec<usize>) {
        let k = self.num_ues();
        (self.copilots.iter().map(|p| k + p.len() + 1).collect(), vec![k + 1; self.num_aps()])
    }
}

/// Cone feasibility instance for the SINR target `nu`. UE cones are
/// normalized by `Σ_l sqrt(g_lkk rho_l^max)` so violations are comparable.
pub fn build_socp(problem: &MaxMinProblem, nu: f64) -> ConeProblem {
    let (num_aps, num_ues) = (problem.num_aps(), problem.num_ues());
    let root_nu = nu.max(0.0).sqrt();
    let mut constraints = Vec::with_capacity(num_aps + num_ues);
    for k in 0..num_ues {
        let own: Vec<(usize, f64)> = (0..num_aps)
            .filter_map(|l| problem.var_of[l][k].map(|v| (v, (problem.coef.g(l, k, k) * problem.ap_power[l]).sqrt())))
            .collect();
        let sigma: f64 = own.iter().map(|e| e.1).sum();
        let scale = if sigma > 0.0 { 1.0 / sigma } else { 1.0 };
        let mut rows = Vec::new();
        for &t in &problem.copilots[k] {
            if t == k {
                continue;
            }
            rows.push(SparseRow {
                coef: SparseVec::new((0..num_aps).filter_map(|l| {
                    problem.var_of[l][t]
                        .map(|v| (v, scale * root_nu * (problem.coef.g(l, k, t) * problem.ap_power[l]).sqrt()))
                })),
                b: 0.0,
            });
        }
        for l in 0..num_aps {
            for t in 0..num_ues {
                if let Some(v) = problem.var_of[l][t] {
                    let z = problem.coef.z(l, k, t) * problem.ap_power[l];
                    if z > 0.0 {
                        rows.push(SparseRow { coef: SparseVec::new([(v, scale * root_nu * z.sqrt())]), b: 0.0 });
                    }
                }
            }
        }
        rows.push(SparseRow { coef: SparseVec::default(), b: scale * root_nu });
        let c = SparseVec::new(own.into_iter().map(|(v, a)| (v, a * scale)));
        constraints.push(SocConstraint { rows, c, d: 0.0 });
    }
    for l in 0..num_aps {
        let rows = problem.var_of[l]
            .iter()
            .flatten()
            .map(|&v| SparseRow { coef: SparseVec::new([(v, 1.0)]), b: 0.0 })
            .collect();
        constraints.push(SocConstraint { rows, c: SparseVec::default(), d: 1.0 });
    }
    ConeProblem::new(problem.num_vars().max(1), constraints)
}

/// Max-min fair powers by bisection on the SINR target.
///
/// The bracket starts at the starting allocation's smallest SINR and the
/// interference-free bound. Midpoints are geometric once the lower end is
/// positive. Every feasible witness is projected onto the power budgets and
/// its actual smallest SINR becomes the new lower end.
pub fn maxmin_power(problem: &MaxMinProblem) -> PowerAllocation {
    let mut best_rho = problem.initial.clone();
    let mut lo = problem.min_sinr(&best_rho);
    let mut hi = problem.upper_bound();
    let mut x = problem.to_amplitudes(&best_rho);
    let mut steps = Vec::new();
    let mut undecided = 0;
    let mut notes = Vec::new();
    if problem.num_vars() == 0 {
        notes.push("no AP-UE pair can carry power".to_string());
    }
    while problem.num_vars() > 0 && hi - lo > problem.eps_nu * lo.max(1.0) && steps.len() < problem.max_steps {
        let nu = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        let socp = build_socp(problem, nu);
        let report = min_max_violation(&socp, &x, &problem.solver);
        match report.status {
            Status::Feasible => {
                let rho = problem.to_power(&report.witness);
                let achieved = problem.min_sinr(&rho);
                if achieved > lo {
                    lo = achieved;
                    best_rho = rho;
                    x = report.witness.clone();
                }
            }
            Status::Infeasible => hi = nu,
            Status::Undecided => {
                undecided += 1;
                hi = nu;
            }
        }
        if hi < lo {
            hi = lo;
        }
        steps.push(BisectionStep {
            nu,
            status: report.status,
            solver_iterations: report.iterations,
            max_violation: report.max_violation,
            lo,
            hi,
        });
    }
    if undecided > 0 {
        notes.push(format!("{undecided} feasibility test(s) undecided and treated as infeasible"));
    }
    PowerAllocation {
        policy: Policy::MaxMin,
        rho: best_rho,
        maxmin: Some(MaxMinTrace { nu_lo: lo, nu_hi: hi, steps, undecided }),
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::geometry::generate_snapshot;

    fn snap(seed: u64) -> Snapshot {
        let cfg = NetworkConfig { num_aps: 6, antennas_per_ap: 4, num_ues: 4, pilot_len: 2, ..Default::default() };
        generate_snapshot(&cfg, seed).unwrap()
    }

    #[test]
    fn heuristic_uses_full_power() {
        let s = snap(1);
        let p = heuristic_power(&s);
        for l in 0..s.num_aps() {
            assert!((p.ap_total(l) / s.ap_power[l] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heuristic_is_proportional() {
        let mut s = snap(2);
        let stats = std::sync::Arc::make_mut(&mut s.stats);
        stats.gamma = DMatrix::from_fn(s.beta.nrows(), s.beta.ncols(), |_, k| [3.0, 1.0, 0.0, 0.0][k]);
        s.ap_power = vec![4.0; s.num_aps()];
        s.served = vec![vec![true, true, false, false]; s.num_aps()];
        let p = heuristic_power(&s);
        assert_eq!(p.rho.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_target_is_feasible_at_origin() {
        let s = snap(3);
        let prob = MaxMinProblem::new(Scheme::Ppzf, &s).unwrap();
        let socp = build_socp(&prob, 0.0);
        let r = min_max_violation(&socp, &vec![0.0; prob.num_vars()], &SolverOptions::default());
        assert_eq!(r.status, Status::Feasible);
    }

    #[test]
    fn cone_violation_matches_sinr_target() {
        let s = snap(4);
        let prob = MaxMinProblem::new(Scheme::Pzf, &s).unwrap();
        let x = prob.to_amplitudes(&prob.initial);
        let sinr = prob.sinr(&prob.initial);
        let socp = build_socp(&prob, sinr[0]);
        // UE 0 sits exactly on its cone boundary
        assert!(socp.constraints[0].violation(&x).abs() < 1e-9);
        let socp = build_socp(&prob, 0.5 * sinr.iter().copied().fold(f64::INFINITY, f64::min));
        assert!(socp.max_violation(&x) <= 1e-12);
    }

    #[test]
    fn maxmin_improves_on_heuristic_and_respects_budgets() {
        for seed in 0..3 {
            let s = snap(10 + seed);
            let prob = MaxMinProblem::new(Scheme::Ppzf, &s).unwrap();
            let heur = prob.min_sinr(&prob.initial);
            let p = maxmin_power(&prob);
            let t = p.maxmin.as_ref().unwrap();
            let achieved = prob.min_sinr(&p.rho);
            assert!(achieved >= heur);
            assert!(achieved >= t.nu_lo * (1.0 - 1e-12) && achieved <= t.nu_hi * (1.0 + 1e-12));
            assert!(t.nu_hi - t.nu_lo <= prob.eps_nu * t.nu_lo.max(1.0));
            for l in 0..s.num_aps() {
                assert!(p.ap_total(l) <= s.ap_power[l] * (1.0 + 1e-9));
                assert!(p.rho.row(l).iter().all(|&r| r >= 0.0));
            }
        }
    }

    #[test]
    fn allocation_serializes_as_rows() {
        let p = heuristic_power(&snap(5));
        let json = serde_json::to_string(&p).unwrap();
        let back: PowerAllocation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
