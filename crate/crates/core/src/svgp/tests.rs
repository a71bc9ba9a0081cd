use super::*;
use crate::gp_exact::{log_marginal_likelihood, posterior, sample_prior_outputs};
use crate::kernels::{DensitySpec, KernelFamily};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng;

fn uniform_x(n: usize, lo: f64, hi: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, 1, |_, _| rng.random_range(lo..hi))
}

fn select(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_rows(idx)
}

fn dense_eig_desc(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn eigvec_features(kernel: &KernelSpec, x: &DMatrix<f64>, m: usize) -> (InducingSet, Vec<f64>) {
    let (vals, vecs) = dense_eig_desc(&kernel.gram_sym(x).unwrap());
    let set = InducingSet::EigenvectorFeatures {
        eigenvalues: vals[..m].to_vec(),
        vectors: vecs.columns(0, m).into_owned(),
        inputs: x.clone(),
    };
    (set, vals)
}

fn exp_kernel() -> KernelSpec {
    KernelSpec::matern(0, 1.0, 0.5).unwrap()
}

fn lml(x: &DMatrix<f64>, y: &DVector<f64>, k: &KernelSpec, noise: NoiseModel) -> f64 {
    log_marginal_likelihood(&Dataset::new(x.clone(), y.clone()).unwrap(), k, noise).unwrap()
}

#[test]
fn full_inducing_set_reproduces_gram() {
    let k = exp_kernel();
    let x = uniform_x(20, 0.0, 5.0, 1);
    let ops = feature_operators(&InducingSet::Points(x.clone()), &k, &x).unwrap();
    let kff = k.gram_sym(&x).unwrap();
    assert!((&ops.kuu - &kff).amax() < 1e-15);
    assert!((&ops.kuf - &kff).amax() < 1e-15);
    assert!(ops.trace_gap().unwrap() < 1e-10);
}

#[test]
fn complete_eigenbasis_reproduces_gram() {
    let k = exp_kernel();
    let x = uniform_x(25, -2.0, 2.0, 2);
    let (set, _) = eigvec_features(&k, &x, 25);
    let ops = feature_operators(&set, &k, &x).unwrap();
    assert!((ops.q_ff() - k.gram_sym(&x).unwrap()).amax() < 1e-12);
}

#[test]
fn truncated_eigenbasis_is_rank_m_truncation() {
    let k = KernelSpec::squared_exponential(1.0, 0.8).unwrap();
    let x = uniform_x(40, -2.0, 2.0, 3);
    let m = 6;
    let (set, vals) = eigvec_features(&k, &x, m);
    let ops = feature_operators(&set, &k, &x).unwrap();
    let (_, vecs) = dense_eig_desc(&k.gram_sym(&x).unwrap());
    let mut trunc = DMatrix::zeros(40, 40);
    for (c, val) in vals.iter().enumerate().take(m) {
        trunc += vecs.column(c) * vecs.column(c).transpose() * *val;
    }
    assert!((ops.q_ff() - trunc).amax() < 1e-8);
    // t is the eigenvalue tail, λ̃_max the first discarded eigenvalue.
    let tail: f64 = vals[m..].iter().sum();
    assert_relative_eq!(ops.trace_gap().unwrap(), tail, max_relative = 1e-8);
    let lam = lambda_max_gap(&k, &x, &ops, 1e-8).unwrap();
    assert_relative_eq!(lam, vals[m], max_relative = 1e-6);
}

#[test]
fn eigenvector_features_reject_foreign_inputs() {
    let k = exp_kernel();
    let x = uniform_x(10, 0.0, 1.0, 4);
    let (set, _) = eigvec_features(&k, &x, 3);
    let other = uniform_x(10, 0.0, 1.0, 5);
    assert!(feature_operators(&set, &k, &other).is_err());
}

#[test]
fn duplicate_inducing_points_rejected() {
    let k = exp_kernel();
    let z = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
    assert!(matches!(
        feature_operators(&InducingSet::Points(z), &k, &uniform_x(5, 0.0, 1.0, 0)),
        Err(Error::DuplicateInducingPoint { first: 0, second: 2 })
    ));
}

#[test]
fn empty_inducing_set_has_full_trace_gap() {
    let k = KernelSpec::squared_exponential(1.7, 0.5).unwrap();
    let x = uniform_x(12, 0.0, 1.0, 6);
    let ops = feature_operators(&InducingSet::Points(DMatrix::zeros(0, 1)), &k, &x).unwrap();
    assert_relative_eq!(ops.trace_gap().unwrap(), 12.0 * 1.7, max_relative = 1e-15);
    let y = DVector::from_element(12, 0.3);
    let noise = NoiseModel::new(0.5).unwrap();
    // Q_n = σ²I, so the bound is an explicit scalar expression.
    let expected = -0.5 * y.norm_squared() / 0.5 - 6.0 * 0.5f64.ln() - 6.0 * LN_2PI - 12.0 * 1.7 / 1.0;
    assert_relative_eq!(elbo(&ops, &y, noise).unwrap(), expected, epsilon = 1e-12);
}

#[test]
fn scalar_elbo() {
    let k = KernelSpec::squared_exponential(1.4, 0.9).unwrap();
    let (x, z, yv, s2) = (0.3, -0.2, 0.8, 0.25);
    let c = k.eval(&[z], &[x]).unwrap();
    let q = c * c / 1.4;
    let t = 1.4 - q;
    let expected = -0.5 * yv * yv / (q + s2) - 0.5 * (q + s2).ln() - 0.5 * LN_2PI - t / (2.0 * s2);
    let ops = feature_operators(
        &InducingSet::Points(DMatrix::from_element(1, 1, z)),
        &k,
        &DMatrix::from_element(1, 1, x),
    )
    .unwrap();
    let got = elbo(&ops, &DVector::from_element(1, yv), NoiseModel::new(s2).unwrap()).unwrap();
    assert_relative_eq!(got, expected, epsilon = 1e-14);
}

#[test]
fn full_inducing_set_recovers_exact_quantities() {
    let k = exp_kernel();
    let noise = NoiseModel::new(0.3).unwrap();
    let x = uniform_x(30, 0.0, 5.0, 7);
    let y = sample_prior_outputs(&x, &k, noise, 7).unwrap();
    let ops = feature_operators(&InducingSet::Points(x.clone()), &k, &x).unwrap();
    let exact = lml(&x, &y, &k, noise);
    let t = ops.trace_gap().unwrap();
    assert!((elbo(&ops, &y, noise).unwrap() - exact).abs() <= 1e-8);
    assert!((upper_bound(&ops, &y, noise, t).unwrap() - exact).abs() <= 1e-8);
    let lam = lambda_max_gap(&k, &x, &ops, DEFAULT_POWER_TOL).unwrap();
    assert!(lam <= 1e-10);
    assert!((refined_upper_bound(&ops, &y, noise, lam).unwrap() - exact).abs() <= 1e-8);
    let data = Dataset::new(x.clone(), y.clone()).unwrap();
    assert!(kl_exact(&data, &k, noise, &ops).unwrap() <= 1e-8);

    // Predictions at the training inputs match the exact posterior.
    let sol = optimal_q(&ops, &y, noise).unwrap();
    let pred = predict(&sol, &InducingSet::Points(x.clone()), &k, &x).unwrap();
    let post = posterior(&data, &k, noise, &x).unwrap();
    assert!((&pred.mean - &post.mean).amax() <= 1e-8);
    assert!((&pred.variance - post.variances()).amax() <= 1e-6);
}

#[test]
fn zero_outputs_give_zero_mean() {
    let k = exp_kernel();
    let x = uniform_x(15, 0.0, 5.0, 8);
    let z = select(&x, &[0, 3, 9]);
    let ops = feature_operators(&InducingSet::Points(z), &k, &x).unwrap();
    let sol = optimal_q(&ops, &DVector::zeros(15), NoiseModel::new(0.1).unwrap()).unwrap();
    assert_eq!(sol.mu.amax(), 0.0);
    assert!(SymmetricEigen::new(sol.sigma.clone()).eigenvalues.min() >= -1e-12);
}

#[test]
fn optimum_maximizes_uncollapsed_bound() {
    let k = KernelSpec::squared_exponential(1.0, 0.7).unwrap();
    let noise = NoiseModel::new(0.2).unwrap();
    let x = uniform_x(40, 0.0, 5.0, 9);
    let y = sample_prior_outputs(&x, &k, noise, 9).unwrap();
    let z = uniform_x(6, 0.0, 5.0, 10);
    let ops = feature_operators(&InducingSet::Points(z), &k, &x).unwrap();
    let sol = optimal_q(&ops, &y, noise).unwrap();
    let at_opt = hensman_elbo(&ops, &y, noise, &sol.mu, &sol.sigma).unwrap();
    assert_relative_eq!(at_opt, sol.elbo, epsilon = 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let dmu = DVector::from_fn(6, |_, _| rng.random_range(-0.1..0.1));
        let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-0.1..0.1));
        let sigma = &sol.sigma + &g * g.transpose();
        assert!(hensman_elbo(&ops, &y, noise, &(&sol.mu + &dmu), &sol.sigma).unwrap() < at_opt);
        assert!(hensman_elbo(&ops, &y, noise, &sol.mu, &sigma).unwrap() < at_opt);
    }
}

/// Dense `−½yᵀ(Q + sI)⁻¹y − ½log|Q + σ²I| − (N/2)log2π` with explicit inverses.
fn dense_bounds(q: &DMatrix<f64>, y: &DVector<f64>, s2: f64, shift: f64) -> f64 {
    let n = y.len();
    let qn = q + DMatrix::identity(n, n) * s2;
    let qs = q + DMatrix::identity(n, n) * (s2 + shift);
    let inv = qs.try_inverse().unwrap();
    -0.5 * (y.transpose() * inv * y)[0] - 0.5 * qn.determinant().ln() - 0.5 * n as f64 * LN_2PI
}

#[test]
fn bounds_match_dense_evaluation_and_sandwich() {
    for seed in 0..5 {
        let k = KernelSpec::squared_exponential(1.0, 0.6).unwrap();
        let noise = NoiseModel::new(0.5).unwrap();
        let x = uniform_x(50, -2.0, 2.0, 100 + seed);
        let y = sample_prior_outputs(&x, &k, noise, seed).unwrap();
        let z = uniform_x(5, -2.0, 2.0, 200 + seed);
        let ops = feature_operators(&InducingSet::Points(z), &k, &x).unwrap();
        let t = ops.trace_gap().unwrap();
        let lam = lambda_max_gap(&k, &x, &ops, DEFAULT_POWER_TOL).unwrap();
        let q = ops.q_ff();
        let lo = elbo(&ops, &y, noise).unwrap();
        let up = upper_bound(&ops, &y, noise, t).unwrap();
        let re = refined_upper_bound(&ops, &y, noise, lam).unwrap();
        assert_relative_eq!(lo, dense_bounds(&q, &y, 0.5, 0.0) - t, epsilon = 1e-9);
        assert_relative_eq!(up, dense_bounds(&q, &y, 0.5, t), epsilon = 1e-9);
        assert_relative_eq!(re, dense_bounds(&q, &y, 0.5, lam), epsilon = 1e-9);
        let exact = lml(&x, &y, &k, noise);
        assert!(lo <= exact + 1e-8 && exact <= re + 1e-8 && re <= up + 1e-8);
        let kl = kl_exact(&Dataset::new(x.clone(), y.clone()).unwrap(), &k, noise, &ops).unwrap();
        assert!(((exact - lo) - kl).abs() <= 1e-8 * exact.abs().max(1.0), "{} vs {kl}", exact - lo);
        assert!(kl <= re - lo + 1e-8);
    }
}

#[test]
fn refined_bound_is_tighter_for_eigenvector_features() {
    let k = KernelSpec::squared_exponential(1.0, 0.6).unwrap();
    let noise = NoiseModel::new(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = DensitySpec::gaussian_1d(0.0, 1.0).unwrap().sample(200, &mut rng);
    let y = sample_prior_outputs(&x, &k, noise, 12).unwrap();
    let (set, vals) = eigvec_features(&k, &x, 5);
    let ops = feature_operators(&set, &k, &x).unwrap();
    let t = ops.trace_gap().unwrap();
    let lam = lambda_max_gap(&k, &x, &ops, DEFAULT_POWER_TOL).unwrap();
    assert!(lam < t);
    assert_relative_eq!(lam, vals[5], max_relative = 1e-6);
    let up = upper_bound(&ops, &y, noise, t).unwrap();
    let re = refined_upper_bound(&ops, &y, noise, lam).unwrap();
    assert!(re < up);
    // Forcing λ̃ = t reproduces the plain upper bound.
    assert_eq!(refined_upper_bound(&ops, &y, noise, t).unwrap(), up);
}

#[test]
fn power_iteration_matches_dense_eigenvalue() {
    let k = KernelSpec::squared_exponential(1.0, 0.5).unwrap();
    let x = uniform_x(100, 0.0, 5.0, 13);
    let z = uniform_x(10, 0.0, 5.0, 14);
    let ops = feature_operators(&InducingSet::Points(z), &k, &x).unwrap();
    let gap = gap_matrix(&k, &x, &ops).unwrap();
    let dense = SymmetricEigen::new(gap.clone()).eigenvalues.max();
    let tol = 1e-6;
    let lam = lambda_max_gap(&k, &x, &ops, tol).unwrap();
    assert!((lam - dense).abs() <= tol * dense, "{lam} vs {dense}");
    assert!(lam <= ops.trace_gap().unwrap());
}

#[test]
fn gap_is_psd_for_subsets_of_inputs() {
    let k = KernelSpec::squared_exponential(1.0, 0.4).unwrap();
    let x = uniform_x(200, 0.0, 5.0, 15);
    let idx: Vec<usize> = (0..200).step_by(13).collect();
    let ops = feature_operators(&InducingSet::Points(select(&x, &idx)), &k, &x).unwrap();
    let gap = gap_matrix(&k, &x, &ops).unwrap();
    assert!(SymmetricEigen::new(gap).eigenvalues.min() >= -1e-8);
}

#[test]
fn nested_inducing_sets_are_monotone() {
    let k = KernelSpec::new(KernelFamily::MaternHalfInteger { order: 1 }, 1.0, vec![0.7]).unwrap();
    let noise = NoiseModel::new(0.4).unwrap();
    let x = uniform_x(80, 0.0, 5.0, 16);
    let y = sample_prior_outputs(&x, &k, noise, 16).unwrap();
    let data = Dataset::new(x.clone(), y.clone()).unwrap();
    let order: Vec<usize> = (0..80).map(|i| (i * 37) % 80).collect();
    let (mut prev_elbo, mut prev_kl) = (f64::NEG_INFINITY, f64::INFINITY);
    for m in [1, 2, 4, 8, 16, 32] {
        let ops = feature_operators(&InducingSet::Points(select(&x, &order[..m])), &k, &x).unwrap();
        let lo = elbo(&ops, &y, noise).unwrap();
        let kl = kl_exact(&data, &k, noise, &ops).unwrap();
        assert!(lo >= prev_elbo - 1e-8);
        assert!(kl <= prev_kl + 1e-8);
        prev_elbo = lo;
        prev_kl = kl;
    }
}

#[test]
fn kl_matches_joint_gaussian_divergence() {
    // q(u, f) = q(u) p(f | u) against p(u, f | y), both as explicit 55-dimensional Gaussians.
    let k = KernelSpec::matern(0, 1.0, 0.4).unwrap();
    let noise = NoiseModel::new(0.5).unwrap();
    let (n, m) = (50, 5);
    let x = uniform_x(n, 0.0, 5.0, 17);
    let y = sample_prior_outputs(&x, &k, noise, 17).unwrap();
    let z = uniform_x(m, 0.0, 5.0, 18);
    let ops = feature_operators(&InducingSet::Points(z.clone()), &k, &x).unwrap();
    let sol = optimal_q(&ops, &y, noise).unwrap();

    let kuu = ops.kuu.clone();
    let kuf = ops.kuf.clone();
    let kff = k.gram_sym(&x).unwrap();
    let a = kuu.clone().try_inverse().unwrap() * &kuf; // K_uu⁻¹K_uf
    let cond = &kff - kuf.transpose() * &a;
    let mut s_q = DMatrix::zeros(n + m, n + m);
    s_q.view_mut((0, 0), (m, m)).copy_from(&sol.sigma);
    let sa = &sol.sigma * &a;
    s_q.view_mut((0, m), (m, n)).copy_from(&sa);
    s_q.view_mut((m, 0), (n, m)).copy_from(&sa.transpose());
    s_q.view_mut((m, m), (n, n)).copy_from(&(&cond + a.transpose() * &sa));
    let mut m_q = DVector::zeros(n + m);
    m_q.rows_mut(0, m).copy_from(&sol.mu);
    m_q.rows_mut(m, n).copy_from(&(a.transpose() * &sol.mu));

    let mut prior = DMatrix::zeros(n + m, n + m);
    prior.view_mut((0, 0), (m, m)).copy_from(&kuu);
    prior.view_mut((0, m), (m, n)).copy_from(&kuf);
    prior.view_mut((m, 0), (n, m)).copy_from(&kuf.transpose());
    prior.view_mut((m, m), (n, n)).copy_from(&kff);
    let c_fy = prior.columns(m, n).into_owned(); // cov((u, f), f)
    let kn_inv = (&kff + DMatrix::identity(n, n) * 0.5).try_inverse().unwrap();
    let m_p = &c_fy * &kn_inv * &y;
    let s_p = &prior - &c_fy * &kn_inv * c_fy.transpose();
    let s_p = (&s_p + s_p.transpose()) * 0.5;
    let s_q = (&s_q + s_q.transpose()) * 0.5;
    let oracle = gaussian_kl(&m_q, &s_q, &m_p, &s_p).unwrap();
    let kl = kl_exact(&Dataset::new(x, y).unwrap(), &k, noise, &ops).unwrap();
    assert_relative_eq!(kl, oracle, max_relative = 1e-6);
}

#[test]
fn dense_kl_reuses_factorization_across_outputs() {
    let k = KernelSpec::squared_exponential(1.0, 0.6).unwrap();
    let noise = NoiseModel::new(1.0).unwrap();
    let x = uniform_x(60, -2.0, 2.0, 19);
    let ops = feature_operators(&InducingSet::Points(uniform_x(4, -2.0, 2.0, 20)), &k, &x).unwrap();
    let dense = DenseKl::new(&k, &x, noise, &ops, 100).unwrap();
    for seed in 0..3 {
        let y = sample_prior_outputs(&x, &k, noise, seed).unwrap();
        let exact = lml(&x, &y, &k, noise) - elbo(&ops, &y, noise).unwrap();
        assert!((dense.kl(&y).unwrap() - exact).abs() < 1e-9);
    }
    // y = 0 leaves only the output-independent part.
    assert_relative_eq!(dense.kl(&DVector::zeros(60)).unwrap(), dense.constant(), epsilon = 1e-15);
    assert!(matches!(
        DenseKl::new(&k, &x, noise, &ops, 59),
        Err(Error::DenseLimitExceeded { n: 60, limit: 59 })
    ));
}

#[test]
fn prediction_with_prior_q_is_prior() {
    let k = KernelSpec::squared_exponential(2.0, 0.5).unwrap();
    let z = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
    let set = InducingSet::Points(z);
    let sol = VariationalSolution {
        mu: DVector::zeros(3),
        sigma: set.kuu(&k).unwrap(),
        elbo: 0.0,
        jitter: 0.0,
    };
    let xs = DMatrix::from_column_slice(4, 1, &[-1.0, 0.5, 1.0, 50.0]);
    let pred = predict(&sol, &set, &k, &xs).unwrap();
    assert!(pred.mean.amax() < 1e-12);
    assert!(pred.variance.iter().all(|v| (v - 2.0).abs() < 1e-10));
}

#[test]
fn prediction_far_from_data_reverts() {
    let k = KernelSpec::squared_exponential(1.0, 0.5).unwrap();
    let noise = NoiseModel::new(0.1).unwrap();
    let x = uniform_x(30, 0.0, 5.0, 21);
    let y = sample_prior_outputs(&x, &k, noise, 21).unwrap();
    let set = InducingSet::Points(uniform_x(5, 0.0, 5.0, 22));
    let ops = feature_operators(&set, &k, &x).unwrap();
    let sol = optimal_q(&ops, &y, noise).unwrap();
    let pred = predict(&sol, &set, &k, &DMatrix::from_element(1, 1, 100.0)).unwrap();
    assert!(pred.mean[0].abs() < 1e-10);
    assert_relative_eq!(pred.variance[0], 1.0, epsilon = 1e-10);
}

#[test]
fn eigenfunction_features_from_quadrature() {
    let k = KernelSpec::squared_exponential(1.0, 0.6).unwrap();
    let density = DensitySpec::gaussian_1d(0.0, 1.0).unwrap();
    let ny = crate::kernels::nystrom_spectrum(&k, &density, 8, 512).unwrap();
    let set = InducingSet::EigenfunctionFeatures {
        eigenvalues: ny.eigenvalues().to_vec(),
        basis: Arc::new(ny),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = density.sample(100, &mut rng);
    let ops = feature_operators(&set, &k, &x).unwrap();
    assert_eq!(ops.kuu, DMatrix::from_diagonal(&ops.kuu.diagonal()));
    let t = ops.trace_gap().unwrap();
    assert!(t > 0.0 && t < 100.0 * 0.05);
    let noise = NoiseModel::new(1.0).unwrap();
    let y = sample_prior_outputs(&x, &k, noise, 23).unwrap();
    let sol = optimal_q(&ops, &y, noise).unwrap();
    let pred = predict(&sol, &set, &k, &x).unwrap();
    assert!(pred.variance.iter().all(|v| *v >= 0.0));
}

#[test]
fn gaussian_kl_examples() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let zero = DVector::zeros(1);
    assert_eq!(gaussian_kl(&zero, &one, &zero, &one).unwrap(), 0.0);
    assert_relative_eq!(
        gaussian_kl(&DVector::from_element(1, 1.0), &one, &zero, &one).unwrap(),
        0.5,
        epsilon = 1e-15
    );
    assert_relative_eq!(
        gaussian_kl(&zero, &DMatrix::from_element(1, 1, 2.0), &zero, &one).unwrap(),
        0.5 * (2.0 - 2f64.ln() - 1.0),
        epsilon = 1e-15
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sandwich_holds(seed in 0u64..10_000, m in 1usize..12, ell in 0.2f64..2.0, s2 in 0.05f64..2.0) {
        let k = KernelSpec::squared_exponential(1.0, ell).unwrap();
        let noise = NoiseModel::new(s2).unwrap();
        let x = uniform_x(40, 0.0, 5.0, seed);
        let y = sample_prior_outputs(&x, &k, noise, seed).unwrap();
        let idx: Vec<usize> = (0..m).map(|i| i * 3).collect();
        let ops = feature_operators(&InducingSet::Points(select(&x, &idx)), &k, &x).unwrap();
        let t = ops.trace_gap().unwrap();
        let lam = lambda_max_gap(&k, &x, &ops, DEFAULT_POWER_TOL).unwrap();
        prop_assert!(lam <= t);
        let lo = elbo(&ops, &y, noise).unwrap();
        let exact = lml(&x, &y, &k, noise);
        let re = refined_upper_bound(&ops, &y, noise, lam).unwrap();
        let up = upper_bound(&ops, &y, noise, t).unwrap();
        prop_assert!(lo <= exact + 1e-8);
        prop_assert!(exact <= re + 1e-8);
        prop_assert!(re <= up + 1e-8);
    }
}
