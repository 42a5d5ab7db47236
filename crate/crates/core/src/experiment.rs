//! Snapshot sweeps, per-user records and their aggregates.
//!
//! Output files written to the experiment's `output_dir`:
//!
//! | file | columns |
//! |---|---|
//! | `records.csv` | `sweep,value,snapshot,ue,scheme,policy,method,sinr,se,se_stderr` |
//! | `summary.csv` | `sweep,value,scheme,policy,method,ues,mean_se,median_se,p05_se,mean_sum_se,median_sum_se` |
//! | `cdf.csv` | `sweep,value,scheme,policy,method,se,probability` |
//!
//! `records.json` and `summary.json` hold the same rows as arrays of
//! objects. `value` and `se_stderr` are empty when not applicable.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::geometry::{generate_snapshot, Snapshot};
use crate::power::{heuristic_power, maxmin_power, MaxMinProblem, Policy};
use crate::precoding::{Precoder, RzfNormalizer, Scheme};
use crate::rng::{derive_seed, stream};
use crate::se::{sinr_closed_form, sinr_monte_carlo_multi, McCase, Method, SeResult};
use crate::stats::aggregate_cdf;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "CELLFREE_THREADS";

/// Thread pool sized by [`THREADS_ENV`], or by rayon's default when unset.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidExperiment(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::InvalidExperiment(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    AntennasPerAp,
    PilotLen,
    GroupingThreshold,
    ClusteringThreshold,
    NumUes,
}

impl SweepVariable {
    pub const ALL: [SweepVariable; 5] = [
        SweepVariable::AntennasPerAp,
        SweepVariable::PilotLen,
        SweepVariable::GroupingThreshold,
        SweepVariable::ClusteringThreshold,
        SweepVariable::NumUes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::AntennasPerAp => "antennas_per_ap",
            SweepVariable::PilotLen => "pilot_len",
            SweepVariable::GroupingThreshold => "grouping_threshold",
            SweepVariable::ClusteringThreshold => "clustering_threshold",
            SweepVariable::NumUes => "num_ues",
        }
    }

    /// `cfg` with this variable set to `value`.
    pub fn apply(self, cfg: &NetworkConfig, value: f64) -> Result<NetworkConfig> {
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidExperiment(format!("{} needs positive integers, got {value}", self.name())))
            }
        };
        let mut out = cfg.clone();
        match self {
            SweepVariable::AntennasPerAp => out.antennas_per_ap = count()?,
            SweepVariable::PilotLen => out.pilot_len = count()?,
            SweepVariable::NumUes => out.num_ues = count()?,
            SweepVariable::GroupingThreshold => out.grouping_threshold = value,
            SweepVariable::ClusteringThreshold => out.clustering_threshold = value,
        }
        Ok(out)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "m" | "antennas" => "antennas_per_ap",
            "tau_p" | "pilots" => "pilot_len",
            "upsilon" | "grouping" => "grouping_threshold",
            "kappa" | "clustering" => "clustering_threshold",
            "k" | "ues" => "num_ues",
            other => other,
        };
        SweepVariable::ALL
            .into_iter()
            .find(|v| v.name() == alias)
            .ok_or_else(|| Error::InvalidExperiment(format!("unknown sweep variable `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Which powers regularize the RZF Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RzfRegularization {
    /// Heuristic coefficients, whatever the power policy.
    #[default]
    Heuristic,
    /// The powers the vectors are transmitted with.
    Allocated,
}

impl FromStr for RzfRegularization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heuristic" => Ok(Self::Heuristic),
            "allocated" => Ok(Self::Allocated),
            _ => Err(Error::InvalidExperiment(format!("unknown RZF regularization `{s}`"))),
        }
    }
}

/// Everything one `run` needs. TOML keys match the field names; the
/// network constants live under `[network]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub network: NetworkConfig,
    pub schemes: Vec<Scheme>,
    pub policies: Vec<Policy>,
    pub snapshots: usize,
    pub sweep: Option<Sweep>,
    /// Also estimate closed-form schemes by Monte-Carlo.
    pub monte_carlo: bool,
    pub rzf_regularization: RzfRegularization,
    /// Estimate draws behind each RZF normalization.
    pub rzf_realizations: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            schemes: vec![Scheme::Mrt, Scheme::Fzf, Scheme::Pzf, Scheme::Ppzf],
            policies: vec![Policy::Heuristic],
            snapshots: 100,
            sweep: None,
            monte_carlo: false,
            rzf_regularization: RzfRegularization::Heuristic,
            rzf_realizations: 1000,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// One point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub network: NetworkConfig,
}

impl ExperimentSpec {
    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn sweep_name(&self) -> &'static str {
        self.sweep.as_ref().map_or("none", |s| s.variable.name())
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        match &self.sweep {
            None => Ok(vec![SweepPoint { value: None, network: self.network.clone() }]),
            Some(sw) => sw
                .values
                .iter()
                .map(|&v| Ok(SweepPoint { value: Some(v), network: sw.variable.apply(&self.network, v)? }))
                .collect(),
        }
    }

    fn needs_monte_carlo(&self) -> bool {
        self.monte_carlo || self.schemes.contains(&Scheme::Rzf)
    }

    /// Rejects invalid specs before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidExperiment(m));
        if self.snapshots == 0 {
            return bad("snapshot count must be at least 1".into());
        }
        if self.schemes.is_empty() || self.policies.is_empty() {
            return bad("at least one scheme and one power policy are required".into());
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return bad(format!("scheme {s} listed twice"));
            }
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return bad(format!("policy {} listed twice", p.name()));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return bad(format!("sweep over {} has no values", sw.variable));
            }
        }
        if self.needs_monte_carlo() && self.network.mc_realizations == 0 {
            return bad("Monte-Carlo evaluation needs mc_realizations >= 1".into());
        }
        if self.schemes.contains(&Scheme::Rzf) && self.rzf_realizations == 0 {
            return bad("RZF needs rzf_realizations >= 1".into());
        }
        for p in self.points()? {
            p.network.validate()?;
            let cfg = &p.network;
            if self.schemes.contains(&Scheme::Fzf) && cfg.antennas_per_ap <= cfg.pilot_len {
                return bad(format!(
                    "FZF needs more antennas than pilots, got M = {} and tau_p = {}",
                    cfg.antennas_per_ap, cfg.pilot_len
                ));
            }
        }
        Ok(())
    }
}

/// One UE under one scheme, policy and evaluation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeRecord {
    pub sweep: String,
    pub value: Option<f64>,
    pub snapshot: usize,
    pub ue: usize,
    pub scheme: Scheme,
    pub policy: Policy,
    pub method: Method,
    pub sinr: f64,
    pub se: f64,
    pub se_stderr: Option<f64>,
}

/// Aggregate over all snapshots of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep: String,
    pub value: Option<f64>,
    pub scheme: Scheme,
    pub policy: Policy,
    pub method: Method,
    pub ues: usize,
    pub mean_se: f64,
    pub median_se: f64,
    /// 95%-likely per-user SE.
    pub p05_se: f64,
    pub mean_sum_se: f64,
    pub median_sum_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub sweep: String,
    pub value: Option<f64>,
    pub scheme: Scheme,
    pub policy: Policy,
    pub method: Method,
    pub se: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<UeRecord>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Seed of snapshot `index`, shared by every sweep point.
pub fn snapshot_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &[stream::SNAPSHOT, index as u64])
}

/// All records of one snapshot, in policy, scheme, method, UE order.
pub fn evaluate_snapshot(spec: &ExperimentSpec, snapshot: &Snapshot, index: usize, value: Option<f64>) -> Result<Vec<UeRecord>> {
    let cfg = &snapshot.cfg;
    let heuristic = heuristic_power(snapshot).rho;
    let mut maxmin: HashMap<Scheme, DMatrix<f64>> = HashMap::new();
    let mut power_for = |policy: Policy, scheme: Scheme| -> Result<DMatrix<f64>> {
        match policy {
            Policy::Heuristic => Ok(heuristic.clone()),
            Policy::MaxMin => {
                // RZF has no closed form; it borrows the PPZF optimum
                let target = if scheme == Scheme::Rzf { Scheme::Ppzf } else { scheme };
                if let Some(rho) = maxmin.get(&target) {
                    return Ok(rho.clone());
                }
                let rho = maxmin_power(&MaxMinProblem::new(target, snapshot)?).rho;
                maxmin.insert(target, rho.clone());
                Ok(rho)
            }
        }
    };

    let mut jobs = Vec::new();
    let mut cases = Vec::new();
    for &policy in &spec.policies {
        for &scheme in &spec.schemes {
            let rho = power_for(policy, scheme)?;
            let closed = if scheme.has_closed_form() {
                Some(SeResult::closed_form(sinr_closed_form(scheme, snapshot, &rho)?, cfg))
            } else {
                None
            };
            let mc = if scheme == Scheme::Rzf {
                let reg = match spec.rzf_regularization {
                    RzfRegularization::Heuristic => &heuristic,
                    RzfRegularization::Allocated => &rho,
                };
                let seed = derive_seed(snapshot.seed, &[stream::RZF_NORMALIZATION]);
                let n = RzfNormalizer::estimate(snapshot, reg, spec.rzf_realizations, seed)?;
                cases.push(McCase::new(Precoder::Rzf(n), snapshot, &rho));
                Some(cases.len() - 1)
            } else if spec.monte_carlo {
                cases.push(McCase::new(Precoder::Pilot(scheme), snapshot, &rho));
                Some(cases.len() - 1)
            } else {
                None
            };
            jobs.push((policy, scheme, closed, mc));
        }
    }
    let mc_results = if cases.is_empty() {
        Vec::new()
    } else {
        let seed = derive_seed(snapshot.seed, &[stream::MONTE_CARLO]);
        sinr_monte_carlo_multi(snapshot, &cases, cfg.mc_realizations, seed)?
    };

    let mut out = Vec::new();
    let sweep = spec.sweep_name().to_string();
    for (policy, scheme, closed, mc) in jobs {
        let mc = mc.map(|c| SeResult::monte_carlo(mc_results[c].clone(), cfg));
        for res in closed.into_iter().chain(mc) {
            for ue in 0..snapshot.num_ues() {
                out.push(UeRecord {
                    sweep: sweep.clone(),
                    value,
                    snapshot: index,
                    ue,
                    scheme,
                    policy,
                    method: res.method,
                    sinr: res.sinr[ue],
                    se: res.se[ue],
                    se_stderr: res.se_stderr.as_ref().map(|s| s[ue]),
                });
            }
        }
    }
    Ok(out)
}

/// Runs every snapshot of every sweep point on the current rayon pool.
pub fn evaluate(spec: &ExperimentSpec) -> Result<Vec<UeRecord>> {
    spec.validate()?;
    let master = spec.network.rng_seed;
    let mut records = Vec::new();
    for point in spec.points()? {
        let per_snapshot: Vec<Vec<UeRecord>> = (0..spec.snapshots)
            .into_par_iter()
            .map(|i| {
                let snapshot = generate_snapshot(&point.network, snapshot_seed(master, i))?;
                evaluate_snapshot(spec, &snapshot, i, point.value)
            })
            .collect::<Result<_>>()?;
        records.extend(per_snapshot.into_iter().flatten());
    }
    Ok(records)
}

type GroupKey = (Option<u64>, Scheme, Policy, Method);

fn group_key(r: &UeRecord) -> GroupKey {
    (r.value.map(f64::to_bits), r.scheme, r.policy, r.method)
}

/// Groups records by (sweep value, scheme, policy, method), in order of
/// first appearance.
fn groups(records: &[UeRecord]) -> Vec<Vec<&UeRecord>> {
    let mut index: HashMap<GroupKey, usize> = HashMap::new();
    let mut out: Vec<Vec<&UeRecord>> = Vec::new();
    for r in records {
        let i = *index.entry(group_key(r)).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[i].push(r);
    }
    out
}

pub fn summarize(records: &[UeRecord]) -> Vec<SummaryRow> {
    groups(records)
        .into_iter()
        .map(|g| {
            let first = g[0];
            let se: Vec<f64> = g.iter().map(|r| r.se).collect();
            let cdf = aggregate_cdf(&se);
            let mut sums: Vec<(usize, f64)> = Vec::new();
            for r in &g {
                match sums.last_mut() {
                    Some((s, total)) if *s == r.snapshot => *total += r.se,
                    _ => sums.push((r.snapshot, r.se)),
                }
            }
            let sums = aggregate_cdf(&sums.iter().map(|s| s.1).collect::<Vec<_>>());
            SummaryRow {
                sweep: first.sweep.clone(),
                value: first.value,
                scheme: first.scheme,
                policy: first.policy,
                method: first.method,
                ues: g.len(),
                mean_se: cdf.mean,
                median_se: cdf.median,
                p05_se: cdf.p05,
                mean_sum_se: sums.mean,
                median_sum_se: sums.median,
            }
        })
        .collect()
}

pub fn cdf_rows(records: &[UeRecord]) -> Vec<CdfRow> {
    let mut out = Vec::new();
    for g in groups(records) {
        let first = g[0];
        let cdf = aggregate_cdf(&g.iter().map(|r| r.se).collect::<Vec<_>>());
        for (&se, &probability) in cdf.values.iter().zip(&cdf.probabilities) {
            out.push(CdfRow {
                sweep: first.sweep.clone(),
                value: first.value,
                scheme: first.scheme,
                policy: first.policy,
                method: first.method,
                se,
                probability,
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Validates, evaluates, aggregates and writes all result files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let records = evaluate(spec)?;
    let summary = summarize(&records);
    let dir = &spec.output_dir;
    std::fs::create_dir_all(dir)?;
    let files = vec![
        dir.join("records.csv"),
        dir.join("records.json"),
        dir.join("summary.csv"),
        dir.join("summary.json"),
        dir.join("cdf.csv"),
        dir.join("experiment.json"),
    ];
    write_csv(&files[0], &records)?;
    write_json(&files[1], &records)?;
    write_csv(&files[2], &summary)?;
    write_json(&files[3], &summary)?;
    write_csv(&files[4], &cdf_rows(&records))?;
    write_json(&files[5], spec)?;
    Ok(ExperimentOutput { records, summary, files })
}
