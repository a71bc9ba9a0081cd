use super::*;
use crate::svgp::{feature_operators, trace_gap};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng;
use std::collections::HashMap;

fn col(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

fn random_x(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.0..3.0))
}

fn det_of(kernel: &KernelSpec, x: &DMatrix<f64>, idx: &[usize]) -> f64 {
    kernel.gram_subset(x, idx).determinant()
}

fn se(l: f64) -> KernelSpec {
    KernelSpec::squared_exponential(1.0, l).unwrap()
}

#[test]
fn uniform_subset_basics() {
    assert_eq!(uniform_subset(7, 7, 3).unwrap(), (0..7).collect::<Vec<_>>());
    assert_eq!(uniform_subset(50, 5, 11).unwrap(), uniform_subset(50, 5, 11).unwrap());
    assert_ne!(uniform_subset(50, 5, 11).unwrap(), uniform_subset(50, 5, 12).unwrap());
    assert!(matches!(uniform_subset(3, 4, 0), Err(Error::MTooLarge { m: 4, n: 3 })));
}

#[test]
fn uniform_subset_frequencies() {
    let (n, m, trials) = (10usize, 3usize, 100_000u64);
    let mut counts = vec![0u64; n];
    for seed in 0..trials {
        for i in uniform_subset(n, m, seed).unwrap() {
            counts[i] += 1;
        }
    }
    let p = m as f64 / n as f64;
    let se = (trials as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - trials as f64 * p).abs() <= 3.0 * se, "{c}");
    }
}

#[test]
fn greedy_single_point_tie_breaks_low() {
    let x = random_x(20, 1);
    assert_eq!(greedy_det_init(&se(0.5), &x, 1).unwrap(), vec![0]);
}

#[test]
fn greedy_picks_one_point_per_cluster() {
    let x = col(&[0.0, 0.1, 0.2, 5.0, 5.1]);
    let k = se(1.0);
    let mut best = (0.0, vec![]);
    for a in 0..5 {
        for b in a + 1..5 {
            let d = det_of(&k, &x, &[a, b]);
            if d > best.0 {
                best = (d, vec![a, b]);
            }
        }
    }
    let mut got = greedy_det_init(&k, &x, 2).unwrap();
    got.sort_unstable();
    assert_eq!(got, best.1);
    assert!(got[0] < 3 && got[1] >= 3);
}

#[test]
fn greedy_is_stepwise_argmax() {
    let x = random_x(30, 4);
    let k = se(0.4);
    let sel = greedy_det_init(&k, &x, 6).unwrap();
    for step in 0..sel.len() {
        let prefix = &sel[..step];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for j in 0..30 {
            if prefix.contains(&j) {
                continue;
            }
            let mut s = prefix.to_vec();
            s.push(j);
            let d = det_of(&k, &x, &s);
            if d > best.0 * (1.0 + 1e-9) {
                best = (d, j);
            }
        }
        let mut s = prefix.to_vec();
        s.push(sel[step]);
        assert_relative_eq!(det_of(&k, &x, &s), best.0, max_relative = 1e-8);
    }
}

#[test]
fn greedy_beats_uniform() {
    let k = se(0.5);
    for trial in 0..50 {
        let x = random_x(40, 100 + trial);
        let g = greedy_det_init(&k, &x, 5).unwrap();
        let u = uniform_subset(40, 5, trial).unwrap();
        assert!(det_of(&k, &x, &g) >= det_of(&k, &x, &u));
    }
}

#[test]
fn greedy_detects_rank_deficiency() {
    let x = col(&[1.0, 1.0, 1.0, 1.0]);
    assert!(matches!(
        greedy_det_init(&se(1.0), &x, 2),
        Err(Error::DegenerateKernel { wanted: 2, selected: 1 })
    ));
}

#[test]
fn mixing_budget() {
    assert_eq!(mixing_steps(1000, 10, 1e-3).unwrap(), 759_854);
    let base = (1000.0 * 100.0 * 1000f64.ln()).ceil() as u64;
    let near_one = mixing_steps(1000, 10, 1.0 - 1e-12).unwrap();
    assert!(near_one >= base && near_one <= base + 1);
    assert!(mixing_steps(1000, 11, 1e-3).unwrap() > 759_854);
    assert!(mixing_steps(1001, 10, 1e-3).unwrap() > 759_854);
    assert!(mixing_steps(1000, 10, 1e-4).unwrap() > 759_854);
    for eps in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(matches!(mixing_steps(10, 2, eps), Err(Error::InvalidEpsilon(_))));
    }
}

#[test]
fn enumeration_basics() {
    let k = se(0.5);
    let x = random_x(4, 2);
    let t = exact_kdpp_enumeration(&k, &x, 4).unwrap();
    assert_eq!(t.len(), 1);
    assert_relative_eq!(t[0].1, 1.0, epsilon = 1e-12);

    let x = random_x(8, 3);
    let t = exact_kdpp_enumeration(&k, &x, 3).unwrap();
    assert_eq!(t.len(), 56);
    assert!((t.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= 1e-10);
    // Independent check through log-determinants of Cholesky factors.
    let logs: Vec<f64> = t
        .iter()
        .map(|(s, _)| LowerFactor::factor(&k.gram_subset(&x, s), &[0.0]).unwrap().log_det())
        .collect();
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - lmax).exp()).sum();
    for ((_, p), l) in t.iter().zip(&logs) {
        assert_relative_eq!(*p, (l - lmax).exp() / z, max_relative = 1e-8);
    }

    let far = col(&[0.0, 100.0, 200.0, 300.0, 400.0]);
    for (_, p) in exact_kdpp_enumeration(&k, &far, 2).unwrap() {
        assert_relative_eq!(p, 0.1, max_relative = 1e-12);
    }
    assert!(matches!(
        exact_kdpp_enumeration(&k, &random_x(40, 0), 20),
        Err(Error::EnumerationTooLarge { .. })
    ));
}

#[test]
fn zero_steps_returns_greedy() {
    let x = random_x(25, 9);
    let k = se(0.3);
    let mut g = greedy_det_init(&k, &x, 4).unwrap();
    g.sort_unstable();
    assert_eq!(kdpp_mcmc(&k, &x, 4, 0, 17).unwrap(), g);
}

#[test]
fn chain_is_deterministic_per_seed_and_stream() {
    let x = random_x(25, 9);
    let k = se(0.3);
    let a = kdpp_mcmc(&k, &x, 4, 5000, 1).unwrap();
    assert_eq!(a, kdpp_mcmc(&k, &x, 4, 5000, 1).unwrap());
    let mut s0 = KdppSampler::new(&k, &x, 4, 1, 0).unwrap();
    let mut s1 = KdppSampler::new(&k, &x, 4, 1, 1).unwrap();
    let mut differ = false;
    for _ in 0..200 {
        s0.step().unwrap();
        s1.step().unwrap();
        differ |= s0.sorted_subset() != s1.sorted_subset();
    }
    assert!(differ);
}

#[test]
fn duplicate_proposals_are_rejected() {
    let x = col(&[0.0, 1.0, 2.0, 0.0, 3.0]);
    let k = se(0.7);
    let s = KdppSampler::from_subset(&k, &x, vec![0, 1], 0, 0).unwrap();
    assert_eq!(s.acceptance(1, 3).unwrap(), 0.0);
    assert!(s.acceptance(0, 3).unwrap() > 0.0);

    let mut s = KdppSampler::new(&k, &x, 3, 5, 0).unwrap();
    for _ in 0..20_000 {
        s.step().unwrap();
        let sub = s.subset();
        assert!(!(sub.contains(&0) && sub.contains(&3)));
        assert!(s.log_det().is_finite());
    }
}

#[test]
fn detailed_balance_holds_exactly() {
    for (seed, m) in [(1u64, 1usize), (2, 2), (3, 2), (4, 3)] {
        let x = random_x(5, seed);
        let k = se(0.8);
        let pi: HashMap<Vec<usize>, f64> = exact_kdpp_enumeration(&k, &x, m).unwrap().into_iter().collect();
        let mut flux: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
        for s in pi.keys() {
            let sampler = KdppSampler::from_subset(&k, &x, s.clone(), 0, 0).unwrap();
            for (t, p) in sampler.transitions().unwrap() {
                *flux.entry((s.clone(), t)).or_default() += pi[s] * p;
            }
        }
        for ((s, t), f) in &flux {
            let back = flux[&(t.clone(), s.clone())];
            assert!((f - back).abs() <= 1e-12 * f.max(back).max(1e-300), "{s:?} {t:?}");
        }
    }
}

#[test]
fn three_point_balance_by_hand() {
    // N = 3, M = 1: π(i) ∝ k(x_i, x_i) is uniform, so every move is accepted
    // with probability 1/2 and proposed with probability 1/2.
    let x = col(&[0.0, 0.3, 1.0]);
    let k = se(0.5);
    let s = KdppSampler::from_subset(&k, &x, vec![0], 0, 0).unwrap();
    for (_, p) in s.transitions().unwrap() {
        assert_relative_eq!(p, 0.25, epsilon = 1e-15);
    }
    // N = 3, M = 2: det K_{ij} = 1 − k_ij².
    let s = KdppSampler::from_subset(&k, &x, vec![0, 1], 0, 0).unwrap();
    let d = |i: usize, j: usize| 1.0 - k.eval_rows(&x, i, &x, j).powi(2);
    let expected_02 = 0.5 * 0.5 * (d(0, 2) / d(0, 1)).min(1.0);
    let got: HashMap<Vec<usize>, f64> = s.transitions().unwrap().into_iter().collect();
    assert_relative_eq!(got[&vec![0, 2]], expected_02, max_relative = 1e-12);
}

#[test]
fn chain_matches_exact_kdpp() {
    let x = random_x(10, 21);
    let k = se(0.6);
    let exact = exact_kdpp_enumeration(&k, &x, 3).unwrap();
    let mut s = KdppSampler::new(&k, &x, 3, 99, 0).unwrap();
    s.run(10_000).unwrap();
    let steps = 1_000_000u64;
    let mut visits: HashMap<Vec<usize>, u64> = HashMap::new();
    for _ in 0..steps {
        s.step().unwrap();
        *visits.entry(s.sorted_subset()).or_default() += 1;
    }
    let tv: f64 = 0.5
        * exact
            .iter()
            .map(|(sub, p)| (visits.get(sub).copied().unwrap_or(0) as f64 / steps as f64 - p).abs())
            .sum::<f64>();
    assert!(tv <= 0.05, "TV {tv}");
    assert!(s.max_drift() <= LOG_DET_DRIFT_TOL);
}

#[test]
fn log_det_tracks_refactorization() {
    let x = random_x(60, 31);
    let k = KernelSpec::matern(1, 1.0, 0.3).unwrap();
    let mut s = KdppSampler::new(&k, &x, 8, 2, 0).unwrap();
    s.run(3 * REFACTOR_INTERVAL + 7).unwrap();
    assert!(s.accepted() > 0);
    assert!(s.max_drift() <= LOG_DET_DRIFT_TOL);
    let fresh = LowerFactor::factor(&k.gram_subset(&x, s.subset()), &[0.0]).unwrap();
    assert!((fresh.log_det() - s.log_det()).abs() <= 1e-6);
}

#[test]
fn eigenvector_features_are_optimal() {
    let x = random_x(40, 5);
    let k = KernelSpec::matern(0, 1.0, 0.5).unwrap();
    let full = eigenvector_features(&k, &x, 40).unwrap();
    assert_eq!(full.len(), 40);
    let t = trace_gap(&feature_operators(&full, &k, &x).unwrap()).unwrap();
    assert!(t.abs() <= 1e-9);

    let mut eig: Vec<f64> = SymmetricEigen::new(k.gram_sym(&x).unwrap()).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let m = 6;
    let set = eigenvector_features(&k, &x, m).unwrap();
    if let InducingSet::EigenvectorFeatures { eigenvalues, vectors, .. } = &set {
        assert!(eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!((vectors.transpose() * vectors - DMatrix::identity(m, m)).amax() < 1e-10);
    }
    let t_eig = trace_gap(&feature_operators(&set, &k, &x).unwrap()).unwrap();
    let tail: f64 = eig[m..].iter().sum();
    assert_relative_eq!(t_eig, tail, max_relative = 1e-8);
    for trial in 0..100 {
        let idx = uniform_subset(40, m, trial).unwrap();
        let z = x.select_rows(&idx);
        let t_pts = trace_gap(&feature_operators(&InducingSet::Points(z), &k, &x).unwrap()).unwrap();
        assert!(t_pts >= t_eig * (1.0 - 1e-10));
    }
}

#[test]
fn eigenvector_features_drop_null_directions() {
    let x = col(&[0.0, 0.0, 1.0]);
    let set = eigenvector_features(&se(1.0), &x, 3).unwrap();
    assert!(set.len() < 3);
    assert!(matches!(eigenvector_features(&se(1.0), &x, 4), Err(Error::MTooLarge { .. })));
}

#[test]
fn eigenfunction_features_closed_form() {
    let k = KernelSpec::squared_exponential(1.0, 0.6).unwrap();
    let density = DensitySpec::gaussian_1d(0.0, 1.0).unwrap();
    let set = eigenfunction_features(&k, &density, 1, 64).unwrap();
    let lam = SeGaussianSpectrum::new(1.0, 0.6, 1.0).unwrap().eigenvalue(1);
    assert_relative_eq!(set.kuu(&k).unwrap()[(0, 0)], lam, max_relative = 1e-14);
    let x = random_x(30, 8);
    let set = eigenfunction_features(&k, &density, 8, 128).unwrap();
    let t = trace_gap(&feature_operators(&set, &k, &x).unwrap()).unwrap();
    assert!(t >= 0.0);
}

#[test]
fn empirical_eigenfunctions_reproduce_eigenvectors() {
    let x = random_x(40, 13);
    let k = KernelSpec::matern(1, 1.0, 0.4).unwrap();
    let density = DensitySpec::Empirical(x.clone());
    for m in [3, 10] {
        let fun = eigenfunction_features(&k, &density, m, 40).unwrap();
        let vec = eigenvector_features(&k, &x, m).unwrap();
        let t_fun = trace_gap(&feature_operators(&fun, &k, &x).unwrap()).unwrap();
        let t_vec = trace_gap(&feature_operators(&vec, &k, &x).unwrap()).unwrap();
        assert_relative_eq!(t_fun, t_vec, max_relative = 1e-6);
    }
}

#[test]
fn selection_records_round_trip() {
    let r = SelectionRecord::new("clusters", "points-kdpp", 7, &[9, 2, 5]).unwrap();
    assert_eq!(r.to_string(), "clusters,points-kdpp,7,2 5 9");
    assert_eq!(r.to_string().parse::<SelectionRecord>().unwrap(), r);
    assert!(SelectionRecord::new("a,b", "m", 0, &[]).is_err());
    assert!("x,y,notanumber,1".parse::<SelectionRecord>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_and_chain_keep_distinct_indices(seed in 0u64..1000, m in 1usize..6, steps in 0u64..300) {
        let x = random_x(12, seed);
        let k = se(0.5);
        let g = greedy_det_init(&k, &x, m).unwrap();
        let mut sorted = g.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), m);
        let out = kdpp_mcmc(&k, &x, m, steps, seed).unwrap();
        prop_assert_eq!(out.len(), m);
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(det_of(&k, &x, &out) > 0.0);
    }
}

#[test]
fn nugget_zero_matches_plain_chain() {
    let x = random_x(15, 4);
    let k = se(0.7);
    assert_eq!(kdpp_mcmc(&k, &x, 4, 500, 9).unwrap(), kdpp_mcmc_with_nugget(&k, &x, 4, 500, 9, 0.0).unwrap());
    assert!(kdpp_mcmc_with_nugget(&k, &x, 4, 10, 9, -1e-3).is_err());
    assert!(kdpp_mcmc_with_nugget(&k, &x, 4, 10, 9, f64::NAN).is_err());
}

#[test]
fn nugget_reaches_past_numerical_rank() {
    let x = DMatrix::from_fn(200, 1, |i, _| -3.0 + 6.0 * i as f64 / 199.0);
    let k = se(0.6);
    assert!(matches!(greedy_det_init(&k, &x, 45), Err(Error::DegenerateKernel { .. })));
    let mut chain = KdppSampler::with_nugget(&k, &x, 45, 1e-8, 3, 0).unwrap();
    chain.run(20_000).unwrap();
    let s = chain.sorted_subset();
    assert_eq!(s.len(), 45);
    assert!(s.windows(2).all(|w| w[0] < w[1]));
    assert!(chain.max_drift() <= LOG_DET_DRIFT_TOL);
}
