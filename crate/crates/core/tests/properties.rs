use nalgebra::DMatrix;
use proptest::prelude::*;

use cellfree::complexity::complexity;
use cellfree::cone::{min_max_violation, ConeProblem, SocConstraint, SolverOptions, SparseRow, SparseVec, Status};
use cellfree::power::heuristic_power;
use cellfree::precoding::{Precoder, Scheme};
use cellfree::se::sinr_closed_form;
use cellfree::stats::{aggregate_cdf, quantile};
use cellfree::{generate_snapshot, realize_channels, NetworkConfig, Snapshot};

fn network() -> impl Strategy<Value = (NetworkConfig, u64)> {
    (2usize..8, 2usize..9, 1usize..5, 2usize..9, 0.0f64..=1.0, 0.5f64..=1.0, any::<u64>()).prop_map(
        |(num_aps, antennas, pilot_len, extra_ues, upsilon, kappa, seed)| {
            let num_ues = pilot_len.max(extra_ues);
            let antennas = antennas.max(num_ues / num_aps + 1);
            let cfg = NetworkConfig {
                num_aps,
                antennas_per_ap: antennas,
                num_ues,
                pilot_len,
                grouping_threshold: upsilon,
                clustering_threshold: kappa,
                ..Default::default()
            };
            (cfg, seed)
        },
    )
}

fn snapshot() -> impl Strategy<Value = Snapshot> {
    network().prop_map(|(cfg, seed)| generate_snapshot(&cfg, seed).expect("valid network"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_power_never_exceeds_channel_power(snap in snapshot()) {
        let st = &snap.stats;
        for l in 0..snap.num_aps() {
            for k in 0..snap.num_ues() {
                let (g, b) = (st.gamma[(l, k)], st.beta[(l, k)]);
                prop_assert!(g > 0.0 && g <= b);
                let theta = st.theta_pilot[(l, snap.pilot_index[k])];
                prop_assert!((g / (st.c[(l, k)] * st.c[(l, k)]) / theta - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn grouping_is_closed_under_shared_pilots(snap in snapshot()) {
        for l in 0..snap.num_aps() {
            let strong = &snap.grouping.strong[l];
            prop_assert!(snap.tau_s(l) < snap.antennas());
            for &k in strong {
                for &t in &snap.copilots[k] {
                    prop_assert!(strong.contains(&t));
                }
            }
            for &k in &snap.grouping.weak[l] {
                prop_assert!(snap.served[l][k] && !strong.contains(&k));
            }
            for k in 0..snap.num_ues() {
                if snap.served[l][k] {
                    prop_assert!(strong.contains(&k) || snap.grouping.weak[l].contains(&k));
                }
            }
        }
    }

    #[test]
    fn every_ue_is_served(snap in snapshot()) {
        for k in 0..snap.num_ues() {
            prop_assert!(!snap.clusters[k].is_empty());
        }
    }

    #[test]
    fn heuristic_power_fills_each_budget(snap in snapshot()) {
        let p = heuristic_power(&snap);
        for l in 0..snap.num_aps() {
            prop_assert!(p.rho.row(l).iter().all(|&r| r >= 0.0));
            let any = (0..snap.num_ues()).any(|k| snap.served[l][k]);
            let total = p.ap_total(l);
            if any {
                prop_assert!((total / snap.ap_power[l] - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(total, 0.0);
            }
        }
    }

    #[test]
    fn closed_form_sinr_is_nonnegative_and_finite(snap in snapshot()) {
        let rho = heuristic_power(&snap).rho;
        for s in [Scheme::Mrt, Scheme::Pzf, Scheme::Ppzf, Scheme::PpzfNoMrt] {
            for v in sinr_closed_form(s, &snap, &rho).unwrap() {
                prop_assert!(v.is_finite() && v >= 0.0);
            }
        }
    }

    #[test]
    fn protective_scheme_never_leaks_into_strong_ues(snap in snapshot(), seed in any::<u64>()) {
        let ch = realize_channels(&snap, seed);
        let set = Precoder::Pilot(Scheme::Ppzf).build(&snap, &ch).unwrap();
        for l in 0..snap.num_aps() {
            for &k in &snap.grouping.strong[l] {
                let h = ch.estimate(l, k);
                let hn = h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                for t in 0..snap.num_ues() {
                    if snap.pilot_index[t] == snap.pilot_index[k] {
                        continue;
                    }
                    let w = set.vector(l, t);
                    let ip: num_complex::Complex64 = h.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
                    prop_assert!(ip.norm() <= 1e-10 * hn * w.norm().max(f64::MIN_POSITIVE));
                }
            }
        }
    }

    #[test]
    fn snapshots_are_reproducible((cfg, seed) in network()) {
        let a = generate_snapshot(&cfg, seed).unwrap();
        let b = generate_snapshot(&cfg, seed).unwrap();
        prop_assert_eq!(a.beta, b.beta);
        prop_assert_eq!(a.pilot_index, b.pilot_index);
        prop_assert_eq!(a.grouping.strong, b.grouping.strong);
    }

    #[test]
    fn complexity_counts_are_ordered(m in 2usize..64, tau_p in 1usize..20, frac in 0.0f64..=1.0) {
        let ts = (frac * tau_p as f64).round() as usize;
        let r = complexity(m, tau_p, ts, 100, 10).unwrap();
        let get = |s| *r.get(s).unwrap();
        let (f, p, pp) = (get(Scheme::Fzf), get(Scheme::Pzf), get(Scheme::Ppzf));
        for c in [f, p, pp] {
            prop_assert!(c.multiplications >= 0.0 && c.divisions >= 0.0 && c.transmission >= 0.0);
        }
        prop_assert!(pp.multiplications >= p.multiplications);
        prop_assert!(p.normalized <= 1.0 + 1e-12);
        if ts == tau_p {
            prop_assert_eq!(p.multiplications, f.multiplications);
            prop_assert_eq!(pp.multiplications, f.multiplications);
        }
    }

    #[test]
    fn quantiles_match_sorted_recomputation(values in prop::collection::vec(-1e3f64..1e3, 1..200), q in 0.0f64..=1.0) {
        let cdf = aggregate_cdf(&values);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let pos = q * (n - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        let expected = if i + 1 < n { sorted[i] * (1.0 - frac) + sorted[i + 1] * frac } else { sorted[i] };
        prop_assert!((quantile(&cdf.values, q) - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        prop_assert_eq!(&cdf.values, &sorted);
        prop_assert_eq!(cdf.probabilities[n - 1], 1.0);
        prop_assert!(cdf.probabilities.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cone_solver_finds_planted_points(
        center in prop::collection::vec(0.5f64..3.0, 3),
        radii in prop::collection::vec(0.3f64..2.0, 4),
        shifts in prop::collection::vec(prop::collection::vec(-0.15f64..0.15, 3), 4),
    ) {
        // balls around perturbed copies of `center` whose radius exceeds the perturbation
        let constraints: Vec<SocConstraint> = radii
            .iter()
            .zip(&shifts)
            .map(|(&r, s)| SocConstraint {
                rows: (0..3).map(|j| SparseRow { coef: SparseVec::new([(j, 1.0)]), b: -(center[j] + s[j]) }).collect(),
                c: SparseVec::new([]),
                d: r,
            })
            .collect();
        let mut problem = ConeProblem::new(3, constraints);
        problem.upper_bound = 4.0;
        let report = min_max_violation(&problem, &[1.0; 3], &SolverOptions::default());
        prop_assert_eq!(report.status, Status::Feasible);
        prop_assert!(problem.max_violation(&report.witness) <= 1e-6);
        prop_assert!(report.witness.iter().all(|&x| (0.0..=4.0).contains(&x)));
    }

    #[test]
    fn cone_solver_refutes_disjoint_balls(gap in 0.5f64..3.0, r in 0.1f64..1.0) {
        let ball = |c: f64| SocConstraint {
            rows: vec![SparseRow { coef: SparseVec::new([(0, 1.0)]), b: -c }, SparseRow { coef: SparseVec::new([(1, 1.0)]), b: -1.0 }],
            c: SparseVec::new([]),
            d: r,
        };
        let mut problem = ConeProblem::new(2, vec![ball(1.0), ball(1.0 + 2.0 * r + gap)]);
        problem.upper_bound = 2.0 + 2.0 * r + gap;
        let report = min_max_violation(&problem, &[0.5, 0.5], &SolverOptions::default());
        prop_assert_eq!(report.status, Status::Infeasible);
        prop_assert!(report.lower_bound > 0.0);
        prop_assert!(report.lower_bound <= gap / 2.0 + 1e-6);
    }
}

#[test]
fn zero_power_gives_zero_sinr() {
    let snap = generate_snapshot(&NetworkConfig::default(), 1).unwrap();
    let zero = DMatrix::zeros(snap.num_aps(), snap.num_ues());
    for s in [Scheme::Mrt, Scheme::Fzf, Scheme::Pzf, Scheme::Ppzf] {
        assert!(sinr_closed_form(s, &snap, &zero).unwrap().iter().all(|&v| v == 0.0));
    }
}
