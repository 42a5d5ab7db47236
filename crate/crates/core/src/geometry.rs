//! Network snapshots: AP/UE placement on a wrapped-around square, large-scale
//! fading with spatially correlated shadowing, pilot assignment, AP
//! clustering and strong/weak UE grouping.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::EstimationStats;
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub type Point = [f64; 2];

/// 3-D distance between two points of a `side × side` torus whose heights
/// differ by `height_diff`. The planar part is the shortest of the nine
/// images (the area plus its eight twins).
pub fn wrap_distance(p: Point, q: Point, side: f64, height_diff: f64) -> f64 {
    let mut best = f64::INFINITY;
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = p[0] - q[0] + sx * side;
            let dy = p[1] - q[1] + sy * side;
            best = best.min(dx * dx + dy * dy);
        }
    }
    (best + height_diff * height_diff).sqrt()
}

/// Urban-microcell pathloss at 2 GHz, in dB.
pub fn pathloss_db(distance_m: f64) -> f64 {
    -30.5 - 36.7 * distance_m.log10()
}

/// Draws one standard normal per point with correlation
/// `2^(-d / decorr_m)` between points at wrapped distance `d`.
pub fn correlated_normals<R: Rng + ?Sized>(
    points: &[Point],
    side: f64,
    decorr_m: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = points.len();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            2f64.powf(-wrap_distance(points[i], points[j], side, 0.0) / decorr_m)
        }
    });
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-8 * max_eig.max(1.0) {
        return Err(Error::ShadowingCovariance { min_eigenvalue: min_eig });
    }
    let white = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scaled = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(0.0).sqrt() * white[i]);
    Ok((eig.eigenvectors * scaled).iter().copied().collect())
}

/// Shadowing terms `z[l,k] = sqrt(w) a_l + sqrt(1-w) b_k`.
pub fn sample_shadowing<R: Rng + ?Sized>(
    ap_positions: &[Point],
    ue_positions: &[Point],
    cfg: &NetworkConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let a = correlated_normals(ap_positions, cfg.area_side_m, cfg.shadow_decorr_m, rng)?;
    let b = correlated_normals(ue_positions, cfg.area_side_m, cfg.shadow_decorr_m, rng)?;
    let wa = cfg.shadow_weight.sqrt();
    let wb = (1.0 - cfg.shadow_weight).sqrt();
    Ok(DMatrix::from_fn(ap_positions.len(), ue_positions.len(), |l, k| wa * a[l] + wb * b[k]))
}

/// Random pilot assignment (0-based pilot indices). A random permutation of
/// the UEs hands the first `pilot_len` UEs distinct pilots so every pilot
/// is in use; the remaining UEs draw uniformly.
pub fn assign_pilots(num_ues: usize, pilot_len: usize, seed: u64) -> Vec<usize> {
    assert!(pilot_len >= 1 && pilot_len <= num_ues);
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..num_ues).collect();
    order.shuffle(&mut rng);
    let mut pilots = vec![0; num_ues];
    for (rank, &ue) in order.iter().enumerate() {
        pilots[ue] = if rank < pilot_len { rank } else { rng.random_range(0..pilot_len) };
    }
    pilots
}

/// `P_k`: the UEs sharing UE k's pilot, including k, ascending.
pub fn copilot_sets(pilot_index: &[usize]) -> Vec<Vec<usize>> {
    pilot_index
        .iter()
        .map(|&i| (0..pilot_index.len()).filter(|&t| pilot_index[t] == i).collect())
        .collect()
}

/// Indices of `values` sorted by decreasing value (ties by index).
fn descending_order(values: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = values.collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

/// Shortest prefix of the descending-sorted values covering `threshold` of
/// their sum. `min_len` lets callers forbid the empty prefix.
fn covering_prefix(sorted: &[(usize, f64)], threshold: f64, min_len: usize) -> usize {
    if threshold >= 1.0 {
        return sorted.len();
    }
    let total: f64 = sorted.iter().map(|x| x.1).sum();
    let target = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut len = 0;
    while len < sorted.len() && (len < min_len || acc < target) {
        acc += sorted[len].1;
        len += 1;
    }
    len
}

/// User-specific AP clusters `A_k` (ascending AP indices). Each cluster is
/// the smallest set of strongest APs covering `threshold` of the UE's total
/// channel gain, and always holds at least one AP.
pub fn cluster_aps(beta: &DMatrix<f64>, threshold: f64) -> Vec<Vec<usize>> {
    (0..beta.ncols())
        .map(|k| {
            let sorted = descending_order((0..beta.nrows()).map(|l| (l, beta[(l, k)])));
            let len = covering_prefix(&sorted, threshold, 1);
            let mut cluster: Vec<usize> = sorted[..len].iter().map(|x| x.0).collect();
            cluster.sort_unstable();
            cluster
        })
        .collect()
}

/// Per-AP strong/weak partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    /// `S_l`, closed under co-pilot membership. May contain co-pilots of a
    /// strong UE that the AP does not serve under clustering.
    pub strong: Vec<Vec<usize>>,
    /// `W_l`: served UEs whose pilot is not used in `S_l`.
    pub weak: Vec<Vec<usize>>,
    /// `R_{S_l}`: distinct pilots used in `S_l`, ascending.
    pub strong_pilots: Vec<Vec<usize>>,
    /// APs whose threshold had to be lowered to keep `tau_S < M`.
    pub lowered: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Grouping {
    pub fn tau_s(&self, l: usize) -> usize {
        self.strong_pilots[l].len()
    }
}

/// Splits each AP's served UEs into strong and weak sets.
///
/// The strongest served UEs covering `threshold` of the AP's served channel
/// gain are selected, then every UE on one of their pilots joins them. If
/// this uses `M` or more pilots, whole pilot groups are dropped, weakest
/// (by their largest gain) first, until `tau_S <= M - 1`.
pub fn group_ues(
    beta: &DMatrix<f64>,
    pilot_index: &[usize],
    served: &[Vec<bool>],
    antennas: usize,
    threshold: f64,
) -> Grouping {
    let (num_aps, num_ues) = beta.shape();
    let mut g = Grouping {
        strong: Vec::with_capacity(num_aps),
        weak: Vec::with_capacity(num_aps),
        strong_pilots: Vec::with_capacity(num_aps),
        lowered: Vec::new(),
        warnings: Vec::new(),
    };
    for l in 0..num_aps {
        let sorted = descending_order((0..num_ues).filter(|&k| served[l][k]).map(|k| (k, beta[(l, k)])));
        let len = if threshold <= 0.0 { 0 } else { covering_prefix(&sorted, threshold, 0) };
        let mut pilots: Vec<usize> = sorted[..len].iter().map(|x| pilot_index[x.0]).collect();
        pilots.sort_unstable();
        pilots.dedup();
        if pilots.len() >= antennas {
            g.lowered.push(l);
            if antennas == 1 {
                g.warnings.push(format!(
                    "AP {l}: a single antenna leaves no degrees of freedom, strong set emptied"
                ));
            }
            // strength of a pilot group = its largest served gain at this AP
            let strength = |p: usize| {
                sorted
                    .iter()
                    .filter(|x| pilot_index[x.0] == p)
                    .map(|x| x.1)
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            while pilots.len() >= antennas {
                let weakest = pilots
                    .iter()
                    .enumerate()
                    .min_by(|a, b| strength(*a.1).total_cmp(&strength(*b.1)))
                    .map(|x| x.0)
                    .expect("non-empty");
                pilots.remove(weakest);
            }
        }
        let strong: Vec<usize> = (0..num_ues).filter(|&k| pilots.binary_search(&pilot_index[k]).is_ok()).collect();
        let weak: Vec<usize> = (0..num_ues)
            .filter(|&k| served[l][k] && pilots.binary_search(&pilot_index[k]).is_err())
            .collect();
        g.strong.push(strong);
        g.weak.push(weak);
        g.strong_pilots.push(pilots);
    }
    g
}

/// One realization of the network's large-scale geometry.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub cfg: NetworkConfig,
    pub seed: u64,
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    /// `L × K` linear large-scale fading.
    pub beta: DMatrix<f64>,
    pub pilot_index: Vec<usize>,
    pub copilots: Vec<Vec<usize>>,
    /// `A_k`.
    pub clusters: Vec<Vec<usize>>,
    /// `served[l][k]` iff `l ∈ A_k`.
    pub served: Vec<Vec<bool>>,
    pub grouping: Grouping,
    /// `rho_l^max`, noise-normalized.
    pub ap_power: Vec<f64>,
    /// `p_k`, noise-normalized.
    pub ue_power: Vec<f64>,
    pub stats: Arc<EstimationStats>,
}

/// Generates a snapshot: uniform AP/UE drops, pathloss plus correlated
/// shadowing, pilots, clusters, grouping and estimation statistics.
pub fn generate_snapshot(cfg: &NetworkConfig, seed: u64) -> Result<Snapshot> {
    cfg.validate()?;
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::GEOMETRY]));
    let side = cfg.area_side_m;
    let mut drop = |n: usize| -> Vec<Point> {
        (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect()
    };
    let ap_positions = drop(cfg.num_aps);
    let ue_positions = drop(cfg.num_ues);

    let mut shadow_rng = rng_from_seed(derive_seed(seed, &[stream::SHADOWING]));
    let z = sample_shadowing(&ap_positions, &ue_positions, cfg, &mut shadow_rng)?;
    let dh = cfg.height_difference_m();
    let beta = DMatrix::from_fn(cfg.num_aps, cfg.num_ues, |l, k| {
        let d = wrap_distance(ap_positions[l], ue_positions[k], side, dh);
        10f64.powf((pathloss_db(d) + cfg.shadow_std_db * z[(l, k)]) / 10.0)
    });
    let pilot_index = assign_pilots(cfg.num_ues, cfg.pilot_len, derive_seed(seed, &[stream::PILOTS]));
    Ok(Snapshot::assemble(cfg.clone(), seed, ap_positions, ue_positions, beta, pilot_index))
}

impl Snapshot {
    /// Builds a snapshot from explicit large-scale quantities. Clustering,
    /// grouping, powers and estimation statistics are derived from `cfg`.
    pub fn assemble(
        cfg: NetworkConfig,
        seed: u64,
        ap_positions: Vec<Point>,
        ue_positions: Vec<Point>,
        beta: DMatrix<f64>,
        pilot_index: Vec<usize>,
    ) -> Self {
        let (num_aps, num_ues) = beta.shape();
        let clusters = cluster_aps(&beta, cfg.clustering_threshold);
        let mut served = vec![vec![false; num_ues]; num_aps];
        for (k, cluster) in clusters.iter().enumerate() {
            for &l in cluster {
                served[l][k] = true;
            }
        }
        let grouping = group_ues(&beta, &pilot_index, &served, cfg.antennas_per_ap, cfg.grouping_threshold);
        let ap_power = vec![cfg.ap_power_normalized(); num_aps];
        let ue_power = vec![cfg.ue_power_normalized(); num_ues];
        let stats = Arc::new(EstimationStats::new(&beta, &pilot_index, &ue_power, cfg.pilot_len));
        Self {
            copilots: copilot_sets(&pilot_index),
            cfg,
            seed,
            ap_positions,
            ue_positions,
            beta,
            pilot_index,
            clusters,
            served,
            grouping,
            ap_power,
            ue_power,
            stats,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.beta.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.cfg.antennas_per_ap
    }

    pub fn pilot_len(&self) -> usize {
        self.cfg.pilot_len
    }

    /// `delta_{l,k}`: 1 if UE k is in AP l's strong set.
    pub fn is_strong(&self, l: usize, k: usize) -> bool {
        self.grouping.strong_pilots[l].binary_search(&self.pilot_index[k]).is_ok()
    }

    pub fn tau_s(&self, l: usize) -> usize {
        self.grouping.tau_s(l)
    }

    /// `Z_k`: APs that zero-force towards UE k.
    pub fn zf_aps(&self, k: usize) -> Vec<usize> {
        (0..self.num_aps()).filter(|&l| self.is_strong(l, k)).collect()
    }

    /// `M_k`: APs that serve UE k with maximum-ratio transmission.
    pub fn mr_aps(&self, k: usize) -> Vec<usize> {
        (0..self.num_aps()).filter(|&l| self.grouping.weak[l].binary_search(&k).is_ok()).collect()
    }

    /// Same geometry with a different grouping threshold.
    pub fn with_grouping_threshold(&self, threshold: f64) -> Self {
        let mut cfg = self.cfg.clone();
        cfg.grouping_threshold = threshold;
        Self::assemble(cfg, self.seed, self.ap_positions.clone(), self.ue_positions.clone(), self.beta.clone(), self.pilot_index.clone())
    }

    /// Same geometry with a different clustering threshold.
    pub fn with_clustering_threshold(&self, threshold: f64) -> Self {
        let mut cfg = self.cfg.clone();
        cfg.clustering_threshold = threshold;
        Self::assemble(cfg, self.seed, self.ap_positions.clone(), self.ue_positions.clone(), self.beta.clone(), self.pilot_index.clone())
    }

    /// Same geometry with a different number of antennas per AP.
    pub fn with_antennas(&self, antennas: usize) -> Self {
        let mut cfg = self.cfg.clone();
        cfg.antennas_per_ap = antennas;
        Self::assemble(cfg, self.seed, self.ap_positions.clone(), self.ue_positions.clone(), self.beta.clone(), self.pilot_index.clone())
    }

    pub fn dump(&self) -> SnapshotDump {
        SnapshotDump {
            seed: self.seed,
            config: self.cfg.clone(),
            ap_positions: self.ap_positions.clone(),
            ue_positions: self.ue_positions.clone(),
            beta_db: (0..self.num_aps())
                .map(|l| (0..self.num_ues()).map(|k| 10.0 * self.beta[(l, k)].log10()).collect())
                .collect(),
            pilot_index: self.pilot_index.clone(),
            copilot_sets: self.copilots.clone(),
            ap_clusters: self.clusters.clone(),
            strong_sets: self.grouping.strong.clone(),
            weak_sets: self.grouping.weak.clone(),
            strong_pilots: self.grouping.strong_pilots.clone(),
            ap_power: self.ap_power.clone(),
            ue_power: self.ue_power.clone(),
            warnings: self.grouping.warnings.clone(),
        }
    }
}

/// JSON form of a snapshot. Indices are 0-based; `beta_db[l][k]` is the
/// large-scale fading between AP `l` and UE `k` in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDump {
    pub seed: u64,
    pub config: NetworkConfig,
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    pub beta_db: Vec<Vec<f64>>,
    pub pilot_index: Vec<usize>,
    pub copilot_sets: Vec<Vec<usize>>,
    pub ap_clusters: Vec<Vec<usize>>,
    pub strong_sets: Vec<Vec<usize>>,
    pub weak_sets: Vec<Vec<usize>>,
    pub strong_pilots: Vec<Vec<usize>>,
    pub ap_power: Vec<f64>,
    pub ue_power: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SnapshotDump {
    /// Rebuilds the snapshot (sets are re-derived from the stored config).
    pub fn restore(&self) -> Snapshot {
        let beta = DMatrix::from_fn(self.beta_db.len(), self.pilot_index.len(), |l, k| {
            10f64.powf(self.beta_db[l][k] / 10.0)
        });
        Snapshot::assemble(
            self.config.clone(),
            self.seed,
            self.ap_positions.clone(),
            self.ue_positions.clone(),
            beta,
            self.pilot_index.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_distance_uses_nearest_image() {
        assert!((wrap_distance([0.0, 0.0], [999.0, 0.0], 1000.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((wrap_distance([3.0, 4.0], [3.0, 4.0], 1000.0, 8.5) - 8.5).abs() < 1e-12);
        let d = wrap_distance([0.0, 0.0], [500.0, 500.0], 1000.0, 0.0);
        assert!((d - 500.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn pathloss_reference_points() {
        assert!((pathloss_db(1.0) + 30.5).abs() < 1e-12);
        assert!((pathloss_db(10.0) + 67.2).abs() < 1e-12);
    }

    #[test]
    fn pilots_without_reuse_are_a_permutation() {
        let p = assign_pilots(6, 6, 3);
        let mut s = p.clone();
        s.sort_unstable();
        assert_eq!(s, (0..6).collect::<Vec<_>>());
        assert!(copilot_sets(&p).iter().enumerate().all(|(k, set)| set == &vec![k]));
    }

    #[test]
    fn single_pilot_contaminates_everyone() {
        let p = assign_pilots(5, 1, 3);
        assert!(copilot_sets(&p).iter().all(|set| set == &vec![0, 1, 2, 3, 4]));
    }

    #[test]
    fn copilot_sets_follow_assignment() {
        let sets = copilot_sets(&[0, 1, 0, 1]);
        assert_eq!(sets[0], vec![0, 2]);
        assert_eq!(sets[1], vec![1, 3]);
    }

    #[test]
    fn every_pilot_is_used() {
        for seed in 0..50 {
            let p = assign_pilots(20, 7, seed);
            for pilot in 0..7 {
                assert!(p.contains(&pilot));
            }
        }
    }

    fn column(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(values.len(), 1, values)
    }

    #[test]
    fn clustering_prefix_rule() {
        let beta = column(&[0.5, 0.3, 0.2]);
        assert_eq!(cluster_aps(&beta, 0.75), vec![vec![0, 1]]);
        assert_eq!(cluster_aps(&beta, 1.0), vec![vec![0, 1, 2]]);
        assert_eq!(cluster_aps(&beta, 0.0), vec![vec![0]]);
    }

    #[test]
    fn grouping_prefix_rule() {
        let beta = DMatrix::from_row_slice(1, 3, &[0.9, 0.08, 0.02]);
        let served = vec![vec![true; 3]];
        let g = group_ues(&beta, &[0, 1, 2], &served, 8, 0.95);
        assert_eq!(g.strong[0], vec![0, 1]);
        assert_eq!(g.weak[0], vec![2]);
        assert_eq!(g.tau_s(0), 2);
        let none = group_ues(&beta, &[0, 1, 2], &served, 8, 0.0);
        assert!(none.strong[0].is_empty());
        let all = group_ues(&beta, &[0, 1, 2], &served, 8, 1.0);
        assert_eq!(all.strong[0], vec![0, 1, 2]);
    }

    #[test]
    fn grouping_closes_over_copilots_and_lowers_threshold() {
        let beta = DMatrix::from_row_slice(1, 4, &[0.5, 0.3, 0.15, 0.05]);
        let served = vec![vec![true; 4]];
        // UE 3 shares UE 0's pilot.
        let g = group_ues(&beta, &[0, 1, 2, 0], &served, 8, 0.5);
        assert_eq!(g.strong[0], vec![0, 3]);
        // three pilots selected, M = 3: drop the weakest group (pilot 2).
        let g = group_ues(&beta, &[0, 1, 2, 0], &served, 3, 0.9);
        assert_eq!(g.strong_pilots[0], vec![0, 1]);
        assert_eq!(g.weak[0], vec![2]);
        assert_eq!(g.lowered, vec![0]);
    }

    #[test]
    fn single_antenna_empties_strong_set_with_warning() {
        let beta = DMatrix::from_row_slice(1, 2, &[0.6, 0.4]);
        let g = group_ues(&beta, &[0, 1], &[vec![true, true]], 1, 0.95);
        assert!(g.strong[0].is_empty());
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn full_shadow_weight_gives_ue_independent_shadowing() {
        let cfg = NetworkConfig { shadow_weight: 1.0, num_aps: 6, num_ues: 4, pilot_len: 2, ..Default::default() };
        let aps: Vec<Point> = (0..6).map(|i| [i as f64 * 40.0, 10.0]).collect();
        let ues: Vec<Point> = (0..4).map(|i| [i as f64 * 30.0, 200.0]).collect();
        let z = sample_shadowing(&aps, &ues, &cfg, &mut rng_from_seed(1)).unwrap();
        for l in 0..6 {
            for k in 1..4 {
                assert_eq!(z[(l, k)], z[(l, 0)]);
            }
        }
    }

    #[test]
    fn snapshot_is_deterministic_and_consistent() {
        let cfg = NetworkConfig { num_aps: 12, num_ues: 6, pilot_len: 3, antennas_per_ap: 4, ..Default::default() };
        let a = generate_snapshot(&cfg, 11).unwrap();
        let b = generate_snapshot(&cfg, 11).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.dump(), b.dump());
        for l in 0..a.num_aps() {
            assert!(a.tau_s(l) < a.antennas());
            assert_eq!(a.grouping.strong[l].len() + a.grouping.weak[l].len(), a.num_ues());
            for &k in &a.grouping.strong[l] {
                for &t in &a.copilots[k] {
                    assert!(a.grouping.strong[l].contains(&t));
                }
            }
        }
        for p in a.ap_positions.iter().chain(&a.ue_positions) {
            assert!(p[0] >= 0.0 && p[0] < cfg.area_side_m && p[1] >= 0.0 && p[1] < cfg.area_side_m);
        }
    }

    #[test]
    fn dump_restores_sets() {
        let cfg = NetworkConfig { num_aps: 8, num_ues: 5, pilot_len: 3, antennas_per_ap: 3, ..Default::default() };
        let s = generate_snapshot(&cfg, 2).unwrap();
        let json = serde_json::to_string(&s.dump()).unwrap();
        let back: SnapshotDump = serde_json::from_str(&json).unwrap();
        let r = back.restore();
        assert_eq!(r.grouping, s.grouping);
        assert_eq!(r.clusters, s.clusters);
    }
}
