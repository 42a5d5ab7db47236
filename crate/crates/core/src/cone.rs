//! Second-order cone feasibility.
//!
//! Decides whether `x ∈ [0, ub]ⁿ` exists with `‖A_i x + b_i‖ ≤ c_iᵀx + d_i`
//! for every constraint `i`, by minimizing the largest violation on the
//! epigraph
//!
//! ```text
//! minimize t  subject to  ‖A_i x + b_i‖ ≤ c_iᵀx + d_i + t,  0 ≤ x ≤ ub
//! ```
//!
//! with a primal-dual interior-point method (Nesterov-Todd scaling,
//! Mehrotra predictor-corrector). Every iterate is checked directly, so a
//! feasible verdict always comes with a witness. An infeasible verdict is
//! backed by a dual point whose objective lower-bounds the optimal `t`.
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_solve};

/// Sparse vector as parallel index/value lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn new(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let (idx, val) = entries.into_iter().filter(|e| e.1 != 0.0).unzip();
        Self { idx, val }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * x[i]).sum()
    }
}

/// One row of `A x + b`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    #[serde(flatten)]
    pub coef: SparseVec,
    pub b: f64,
}

/// `‖A x + b‖ ≤ cᵀx + d`, with `A` stored row by row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub rows: Vec<SparseRow>,
    pub c: SparseVec,
    pub d: f64,
}

impl SocConstraint {
    /// `(‖A x + b‖, cᵀx + d)`.
    pub fn sides(&self, x: &[f64]) -> (f64, f64) {
        let norm = self
            .rows
            .iter()
            .map(|r| {
                let v = r.coef.dot(x) + r.b;
                v * v
            })
            .sum::<f64>()
            .sqrt();
        (norm, self.c.dot(x) + self.d)
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let (lhs, rhs) = self.sides(x);
        lhs - rhs
    }
}

/// A conjunction of cone constraints over `x ∈ [0, upper_bound]ⁿ`.
///
/// JSON layout:
///
/// ```json
/// { "n": 2, "upper_bound": 1e6,
///   "constraints": [ { "rows": [ { "idx": [0], "val": [1.0], "b": 0.0 } ],
///                      "c": { "idx": [], "val": [] }, "d": 1.0 } ] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProblem {
    pub n: usize,
    #[serde(default = "default_upper_bound")]
    pub upper_bound: f64,
    pub constraints: Vec<SocConstraint>,
}

fn default_upper_bound() -> f64 {
    1e6
}

impl ConeProblem {
    pub fn new(n: usize, constraints: Vec<SocConstraint>) -> Self {
        Self { n, upper_bound: default_upper_bound(), constraints }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedInstance(m));
        if self.n == 0 {
            return bad("no variables".into());
        }
        if !(self.upper_bound > 0.0) {
            return bad(format!("upper bound must be positive, got {}", self.upper_bound));
        }
        let check = |v: &SparseVec, what: &str, i: usize| -> Result<()> {
            if v.idx.len() != v.val.len() {
                return Err(Error::MalformedInstance(format!("constraint {i}: {what} has mismatched lengths")));
            }
            if let Some(&j) = v.idx.iter().find(|&&j| j >= self.n) {
                return Err(Error::MalformedInstance(format!("constraint {i}: {what} index {j} out of range")));
            }
            if v.val.iter().any(|x| !x.is_finite()) {
                return Err(Error::MalformedInstance(format!("constraint {i}: {what} has a non-finite value")));
            }
            Ok(())
        };
        for (i, con) in self.constraints.iter().enumerate() {
            check(&con.c, "c", i)?;
            for r in &con.rows {
                check(&r.coef, "row", i)?;
                if !r.b.is_finite() {
                    return bad(format!("constraint {i}: non-finite b"));
                }
            }
            if !con.d.is_finite() {
                return bad(format!("constraint {i}: non-finite d"));
            }
        }
        Ok(())
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cone problem serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Feasible,
    Infeasible,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub status: Status,
    /// Best iterate found (smallest maximum violation).
    pub witness: Vec<f64>,
    /// Maximum violation at the witness.
    pub max_violation: f64,
    /// Certified lower bound on the smallest achievable maximum violation.
    pub lower_bound: f64,
    /// Interior-point iterations taken.
    pub iterations: usize,
    /// Best maximum violation after each iteration (non-increasing).
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 100 }
    }
}

/// Per-constraint data reused across iterations.
struct Prepared {
    /// Sorted union of the variables the constraint touches, `t` (index `n`) last.
    support: Vec<usize>,
    /// Lower triangle of `ĉĉᵀ + AᵀA` with `ĉ = (c, 1)`, as `(i, j, value)` with `i >= j`.
    gram: Vec<(usize, usize, f64)>,
}

fn prepare(con: &SocConstraint, n: usize) -> Prepared {
    let mut gram: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut support: Vec<usize> = con.c.idx.clone();
    let mut add = |idx: &[usize], val: &[f64]| {
        for (a, (&i, &vi)) in idx.iter().zip(val).enumerate() {
            for (&j, &vj) in idx[..=a].iter().zip(&val[..=a]) {
                let key = if i >= j { (i, j) } else { (j, i) };
                *gram.entry(key).or_insert(0.0) += vi * vj;
            }
        }
    };
    for r in &con.rows {
        support.extend(&r.coef.idx);
        add(&r.coef.idx, &r.coef.val);
    }
    let mut idx = con.c.idx.clone();
    let mut val = con.c.val.clone();
    idx.push(n);
    val.push(1.0);
    add(&idx, &val);
    support.sort_unstable();
    support.dedup();
    support.push(n);
    Prepared { support, gram: gram.into_iter().map(|((i, j), v)| (i, j, v)).collect() }
}

/// Largest `α ≥ 0` keeping `u + α d` in the second-order cone (`u` interior).
fn lorentz_step(u: &[f64], d: &[f64]) -> f64 {
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = u[0] * d[0] - dot(&u[1..], &d[1..]);
    let c = u[0] * u[0] - dot(&u[1..], &u[1..]);
    if a >= 0.0 && d[0] >= 0.0 {
        return f64::INFINITY;
    }
    let root = (b * b - a * c).max(0.0).sqrt();
    if b <= 0.0 {
        c / (root - b)
    } else {
        (b + root) / -a
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nesterov-Todd scaling `W` with `W z = W⁻¹ s = λ`.
struct Scaling {
    /// One factor per Lorentz block.
    eta: Vec<f64>,
    /// `√w̄` on Lorentz blocks, `√(s/z)` on the orthant.
    w: Vec<f64>,
    lambda: Vec<f64>,
}

/// The epigraph in the standard form `G v + s = h`, `s ∈ K`, with
/// `v = (x, t)`. `K` is one Lorentz block `(head, rows)` per constraint,
/// then `x ≥ 0`, then `ub − x ≥ 0`.
struct Epigraph<'a> {
    problem: &'a ConeProblem,
    prepared: Vec<Prepared>,
    offsets: Vec<usize>,
    lo: usize,
    up: usize,
    len: usize,
    degree: f64,
    h: Vec<f64>,
}

impl<'a> Epigraph<'a> {
    fn new(problem: &'a ConeProblem) -> Self {
        let n = problem.n;
        let prepared = problem.constraints.iter().map(|c| prepare(c, n)).collect();
        let mut offsets = Vec::with_capacity(problem.constraints.len());
        let mut h = Vec::new();
        for con in &problem.constraints {
            offsets.push(h.len());
            h.push(con.d);
            h.extend(con.rows.iter().map(|r| r.b));
        }
        let lo = h.len();
        h.extend(std::iter::repeat_n(0.0, n));
        let up = h.len();
        h.extend(std::iter::repeat_n(problem.upper_bound, n));
        let len = h.len();
        let degree = (problem.constraints.len() + 2 * n) as f64;
        Self { problem, prepared, offsets, lo, up, len, degree, h }
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, std::ops::Range<usize>)> + '_ {
        self.problem.constraints.iter().zip(&self.offsets).enumerate().map(|(i, (con, &off))| (i, off..off + 1 + con.rows.len()))
    }

    /// `out = G v`
    fn g_mul(&self, v: &[f64], out: &mut [f64]) {
        let n = self.problem.n;
        let x = &v[..n];
        for (con, &off) in self.problem.constraints.iter().zip(&self.offsets) {
            out[off] = -(con.c.dot(x) + v[n]);
            for (r, row) in con.rows.iter().enumerate() {
                out[off + 1 + r] = -row.coef.dot(x);
            }
        }
        for j in 0..n {
            out[self.lo + j] = -x[j];
            out[self.up + j] = x[j];
        }
    }

    /// `out = Gᵀ z`
    fn gt_mul(&self, z: &[f64], out: &mut [f64]) {
        let n = self.problem.n;
        out.fill(0.0);
        for (con, &off) in self.problem.constraints.iter().zip(&self.offsets) {
            let z0 = z[off];
            out[n] -= z0;
            for (&j, &c) in con.c.idx.iter().zip(&con.c.val) {
                out[j] -= z0 * c;
            }
            for (r, row) in con.rows.iter().enumerate() {
                let zr = z[off + 1 + r];
                for (&j, &a) in row.coef.idx.iter().zip(&row.coef.val) {
                    out[j] -= zr * a;
                }
            }
        }
        for j in 0..n {
            out[j] += z[self.up + j] - z[self.lo + j];
        }
    }

    /// Dual objective of `z`'s Lorentz blocks, completed with the cheapest
    /// orthant multipliers. Valid lower bound on the optimal `t` for any
    /// `z` inside the cones.
    fn lower_bound(&self, z: &[f64]) -> f64 {
        let n = self.problem.n;
        let heads: f64 = self.offsets.iter().map(|&o| z[o]).sum();
        if !(heads > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut a = vec![0.0; n];
        let mut obj = 0.0;
        for (i, range) in self.blocks() {
            let con = &self.problem.constraints[i];
            let zi = &z[range];
            if zi[0] < dot(&zi[1..], &zi[1..]).sqrt() {
                return f64::NEG_INFINITY;
            }
            let z0 = zi[0] / heads;
            obj -= con.d * z0;
            for (&j, &c) in con.c.idx.iter().zip(&con.c.val) {
                a[j] -= z0 * c;
            }
            for (row, &zr) in con.rows.iter().zip(&zi[1..]) {
                let zr = zr / heads;
                obj -= row.b * zr;
                for (&j, &v) in row.coef.idx.iter().zip(&row.coef.val) {
                    a[j] -= zr * v;
                }
            }
        }
        obj + self.problem.upper_bound * a.iter().map(|&v| v.min(0.0)).sum::<f64>()
    }

    fn scaling(&self, s: &[f64], z: &[f64]) -> Option<Scaling> {
        let mut eta = Vec::with_capacity(self.offsets.len());
        let mut w = vec![0.0; self.len];
        let mut lambda = vec![0.0; self.len];
        for (_, range) in self.blocks() {
            let (si, zi) = (&s[range.clone()], &z[range.clone()]);
            let sn = dot(&si[1..], &si[1..]).sqrt();
            let zn = dot(&zi[1..], &zi[1..]).sqrt();
            let sdet = (si[0] - sn) * (si[0] + sn);
            let zdet = (zi[0] - zn) * (zi[0] + zn);
            if !(sdet > 0.0 && zdet > 0.0 && si[0] > 0.0 && zi[0] > 0.0) {
                return None;
            }
            let (sr, zr) = (sdet.sqrt(), zdet.sqrt());
            let gamma = ((1.0 + dot(si, zi) / (sr * zr)) / 2.0).sqrt();
            // NT point w̄ = (s̄ + J z̄) / 2γ; W is the quadratic representation of √w̄
            let wi = &mut w[range.clone()];
            let w0 = (si[0] / sr + zi[0] / zr) / (2.0 * gamma);
            let root = (2.0 * (w0 + 1.0)).sqrt();
            wi[0] = (w0 + 1.0) / root;
            for k in 1..wi.len() {
                wi[k] = (si[k] / sr - zi[k] / zr) / (2.0 * gamma * root);
            }
            let e = (sr / zr).sqrt();
            eta.push(e);
            // λ = W z = η (2 w̄ (w̄ᵀz) − J z)
            let wz = dot(wi, zi);
            let li = &mut lambda[range];
            li[0] = e * (2.0 * wi[0] * wz - zi[0]);
            for k in 1..li.len() {
                li[k] = e * (2.0 * wi[k] * wz + zi[k]);
            }
        }
        for k in self.lo..self.len {
            if !(s[k] > 0.0 && z[k] > 0.0) {
                return None;
            }
            w[k] = (s[k] / z[k]).sqrt();
            lambda[k] = (s[k] * z[k]).sqrt();
        }
        Some(Scaling { eta, w, lambda })
    }

    /// `out = W v` or, with `inverse`, `out = W⁻¹ v`.
    fn w_mul(&self, sc: &Scaling, v: &[f64], out: &mut [f64], inverse: bool) {
        for (i, range) in self.blocks() {
            let (wi, vi) = (&sc.w[range.clone()], &v[range.clone()]);
            let oi = &mut out[range];
            if inverse {
                // (1/η)(2 J w̄ (w̄ᵀ J v) − J v)
                let f = 1.0 / sc.eta[i];
                let wjv = wi[0] * vi[0] - dot(&wi[1..], &vi[1..]);
                oi[0] = f * (2.0 * wi[0] * wjv - vi[0]);
                for k in 1..oi.len() {
                    oi[k] = f * (-2.0 * wi[k] * wjv + vi[k]);
                }
            } else {
                let f = sc.eta[i];
                let wv = dot(wi, vi);
                oi[0] = f * (2.0 * wi[0] * wv - vi[0]);
                for k in 1..oi.len() {
                    oi[k] = f * (2.0 * wi[k] * wv + vi[k]);
                }
            }
        }
        for k in self.lo..self.len {
            out[k] = if inverse { v[k] / sc.w[k] } else { v[k] * sc.w[k] };
        }
    }

    /// Jordan product `u ∘ v`.
    fn product(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for (_, range) in self.blocks() {
            let (ui, vi) = (&u[range.clone()], &v[range.clone()]);
            let oi = &mut out[range];
            oi[0] = dot(ui, vi);
            for k in 1..oi.len() {
                oi[k] = ui[0] * vi[k] + vi[0] * ui[k];
            }
        }
        for k in self.lo..self.len {
            out[k] = u[k] * v[k];
        }
    }

    /// Solves `u ∘ x = v` for `x`.
    fn divide(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for (_, range) in self.blocks() {
            let (ui, vi) = (&u[range.clone()], &v[range.clone()]);
            let oi = &mut out[range];
            let det = ui[0] * ui[0] - dot(&ui[1..], &ui[1..]);
            let x0 = (ui[0] * vi[0] - dot(&ui[1..], &vi[1..])) / det;
            oi[0] = x0;
            for k in 1..oi.len() {
                oi[k] = (vi[k] - x0 * ui[k]) / ui[0];
            }
        }
        for k in self.lo..self.len {
            out[k] = v[k] / u[k];
        }
    }

    fn max_step(&self, u: &[f64], d: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for (_, range) in self.blocks() {
            alpha = alpha.min(lorentz_step(&u[range.clone()], &d[range]));
        }
        for k in self.lo..self.len {
            if d[k] < 0.0 {
                alpha = alpha.min(-u[k] / d[k]);
            }
        }
        alpha
    }

    /// Lower triangle (row-major) of `Gᵀ W⁻² G`, Cholesky-factored in place.
    fn factor(&self, sc: &Scaling, z: &[f64], s: &[f64], mat: &mut [f64], a: &mut [f64], b: &mut [f64]) -> bool {
        let n = self.problem.n;
        let dim = n + 1;
        mat.fill(0.0);
        for (i, range) in self.blocks() {
            let con = &self.problem.constraints[i];
            let prep = &self.prepared[i];
            let wi = &sc.w[range];
            // a = Bᵀ J w̄, b = Bᵀ w̄ with Bᵀv = −(v₀ ĉ + Aᵀ v₁)
            for &j in &prep.support {
                a[j] = 0.0;
                b[j] = 0.0;
            }
            for (&j, &c) in con.c.idx.iter().zip(&con.c.val) {
                a[j] -= wi[0] * c;
                b[j] -= wi[0] * c;
            }
            a[n] = -wi[0];
            b[n] = -wi[0];
            for (row, &wr) in con.rows.iter().zip(&wi[1..]) {
                for (&j, &v) in row.coef.idx.iter().zip(&row.coef.val) {
                    a[j] += wr * v;
                    b[j] -= wr * v;
                }
            }
            let f = 1.0 / (sc.eta[i] * sc.eta[i]);
            let k4 = 4.0 * dot(wi, wi) * f;
            let k2 = 2.0 * f;
            for &(p, q, v) in &prep.gram {
                mat[p * dim + q] += f * v;
            }
            for (pos, &p) in prep.support.iter().enumerate() {
                let row = &mut mat[p * dim..p * dim + dim];
                let (ap, bp) = (a[p], b[p]);
                let (c1, c2) = (k4 * ap - k2 * bp, k2 * ap);
                for &q in &prep.support[..=pos] {
                    row[q] += c1 * a[q] - c2 * b[q];
                }
            }
        }
        for j in 0..n {
            mat[j * dim + j] += z[self.lo + j] / s[self.lo + j] + z[self.up + j] / s[self.up + j];
        }
        let diag_max = (0..dim).map(|j| mat[j * dim + j]).fold(0.0f64, f64::max);
        let backup = mat.to_vec();
        if cholesky_in_place(mat, dim) {
            return true;
        }
        mat.copy_from_slice(&backup);
        for j in 0..dim {
            mat[j * dim + j] += 1e-12 * diag_max;
        }
        cholesky_in_place(mat, dim)
    }
}

/// Scratch space for one Newton solve.
struct Work {
    t1: Vec<f64>,
    t2: Vec<f64>,
    rhs: Vec<f64>,
}

impl Epigraph<'_> {
    /// Search direction for `G dv + ds = −rp`, `Gᵀ dz = −rd`,
    /// `W⁻¹ds + W dz = r̃`.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        sc: &Scaling,
        chol: &[f64],
        rp: &[f64],
        rd: &[f64],
        rt: &[f64],
        dv: &mut [f64],
        ds: &mut [f64],
        dz: &mut [f64],
        wk: &mut Work,
    ) {
        let dim = self.problem.n + 1;
        self.w_mul(sc, rp, &mut wk.t1, true);
        for (a, b) in wk.t1.iter_mut().zip(rt) {
            *a += b;
        }
        self.w_mul(sc, &wk.t1, &mut wk.t2, true);
        self.gt_mul(&wk.t2, &mut wk.rhs);
        for (d, (g, r)) in dv.iter_mut().zip(wk.rhs.iter().zip(rd)) {
            *d = -r - g;
        }
        cholesky_solve(chol, dim, dv);
        self.g_mul(dv, &mut wk.t1);
        for (a, b) in wk.t1.iter_mut().zip(rp) {
            *a += b;
        }
        self.w_mul(sc, &wk.t1, &mut wk.t2, true);
        for (a, b) in wk.t2.iter_mut().zip(rt) {
            *a += b;
        }
        self.w_mul(sc, &wk.t2, dz, true);
        self.w_mul(sc, dz, &mut wk.t1, false);
        for (a, b) in wk.t1.iter_mut().zip(rt) {
            *a = b - *a;
        }
        self.w_mul(sc, &wk.t1, ds, false);
    }
}

/// Minimizes the maximum constraint violation starting from `x0 ≥ 0`.
pub fn min_max_violation(problem: &ConeProblem, x0: &[f64], opts: &SolverOptions) -> FeasibilityReport {
    let n = problem.n;
    assert_eq!(x0.len(), n, "starting point has the wrong length");
    let eps = opts.tolerance;
    let ub = problem.upper_bound;
    let start = x0.iter().map(|&v| v.clamp(0.0, ub)).collect::<Vec<_>>();
    let f0 = problem.max_violation(&start);
    let mut report = FeasibilityReport {
        status: Status::Undecided,
        witness: start.clone(),
        max_violation: f0,
        lower_bound: f64::NEG_INFINITY,
        iterations: 0,
        history: Vec::new(),
    };
    if f0 <= eps {
        report.status = Status::Feasible;
        return report;
    }

    let epi = Epigraph::new(problem);
    let dim = n + 1;
    let len = epi.len;
    let lo = (1e-3f64).min(ub / 4.0);
    let mut v: Vec<f64> = start.iter().map(|&x| x.clamp(lo, ub / 2.0)).collect();
    let fx = problem.max_violation(&v);
    v.push(fx + 1.0);
    if fx < report.max_violation {
        report.max_violation = fx;
        report.witness = v[..n].to_vec();
    }

    // s = h − G v; z = μ s⁻¹ scaled so the dual t-equation holds
    let mut s = vec![0.0; len];
    epi.g_mul(&v, &mut s);
    for (sk, hk) in s.iter_mut().zip(&epi.h) {
        *sk = hk - *sk;
    }
    let mut z = vec![0.0; len];
    for (_, range) in epi.blocks() {
        let si = &s[range.clone()];
        let det = si[0] * si[0] - dot(&si[1..], &si[1..]);
        let zi = &mut z[range];
        zi[0] = si[0] / det;
        for k in 1..zi.len() {
            zi[k] = -si[k] / det;
        }
    }
    let heads: f64 = epi.offsets.iter().map(|&o| z[o]).sum();
    let mu0 = 1.0 / heads;
    for (_, range) in epi.blocks() {
        for zk in &mut z[range] {
            *zk *= mu0;
        }
    }
    for k in epi.lo..len {
        z[k] = mu0 / s[k];
    }

    let mut chol = vec![0.0; dim * dim];
    let (mut sa, mut sb) = (vec![0.0; dim], vec![0.0; dim]);
    let mut wk = Work { t1: vec![0.0; len], t2: vec![0.0; len], rhs: vec![0.0; dim] };
    let mut rp = vec![0.0; len];
    let mut rd = vec![0.0; dim];
    let mut rt = vec![0.0; len];
    let mut rc = vec![0.0; len];
    let (mut dv, mut ds, mut dz) = (vec![0.0; dim], vec![0.0; len], vec![0.0; len]);
    let (mut ds_s, mut dz_s) = (vec![0.0; len], vec![0.0; len]);
    let mut x = vec![0.0; n];

    while report.iterations < opts.max_iterations {
        let bound = epi.lower_bound(&z);
        report.lower_bound = report.lower_bound.max(bound);
        if report.lower_bound > eps {
            report.status = Status::Infeasible;
            return report;
        }
        if v[n] - report.lower_bound <= 1e-12 * v[n].abs().max(1.0) {
            break;
        }
        epi.g_mul(&v, &mut rp);
        for k in 0..len {
            rp[k] += s[k] - epi.h[k];
        }
        epi.gt_mul(&z, &mut rd);
        rd[n] += 1.0;
        let mu = dot(&s, &z) / epi.degree;
        let Some(sc) = epi.scaling(&s, &z) else { break };
        if !epi.factor(&sc, &z, &s, &mut chol, &mut sa, &mut sb) {
            break;
        }

        // predictor: r̃ = λ \ (−λ∘λ) = −λ
        for (r, l) in rt.iter_mut().zip(&sc.lambda) {
            *r = -l;
        }
        epi.direction(&sc, &chol, &rp, &rd, &rt, &mut dv, &mut ds, &mut dz, &mut wk);
        let alpha = epi.max_step(&s, &ds).min(epi.max_step(&z, &dz)).min(1.0);
        let mu_aff = (0..len).map(|k| (s[k] + alpha * ds[k]) * (z[k] + alpha * dz[k])).sum::<f64>() / epi.degree;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector: r̃ = λ \ (−λ∘λ − (W⁻¹ds)∘(W dz) + σμe)
        epi.w_mul(&sc, &ds, &mut ds_s, true);
        epi.w_mul(&sc, &dz, &mut dz_s, false);
        epi.product(&ds_s, &dz_s, &mut rc);
        epi.product(&sc.lambda, &sc.lambda, &mut rt);
        for k in 0..len {
            rc[k] = -rt[k] - rc[k];
        }
        for &o in &epi.offsets {
            rc[o] += sigma * mu;
        }
        for r in &mut rc[epi.lo..] {
            *r += sigma * mu;
        }
        epi.divide(&sc.lambda, &rc, &mut rt);
        epi.direction(&sc, &chol, &rp, &rd, &rt, &mut dv, &mut ds, &mut dz, &mut wk);
        let alpha = (0.99 * epi.max_step(&s, &ds).min(epi.max_step(&z, &dz))).min(1.0);
        if !(alpha > 1e-12) {
            break;
        }
        for k in 0..dim {
            v[k] += alpha * dv[k];
        }
        for k in 0..len {
            s[k] += alpha * ds[k];
            z[k] += alpha * dz[k];
        }

        report.iterations += 1;
        for (xj, vj) in x.iter_mut().zip(&v) {
            *xj = vj.clamp(0.0, ub);
        }
        let f = problem.max_violation(&x);
        if f < report.max_violation {
            report.max_violation = f;
            report.witness.copy_from_slice(&x);
        }
        report.history.push(report.max_violation);
        if report.max_violation <= eps {
            report.status = Status::Feasible;
            return report;
        }
    }
    report
}
