use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svgp_core::gp_exact::{log_marginal_likelihood, Dataset, NoiseModel};
use svgp_core::inducing::greedy_det_init;
use svgp_core::kernels::KernelSpec;
use svgp_core::svgp::{elbo, feature_operators, kl_exact, upper_bound, InducingSet};

fn data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| rng.random_range(0.0..4.0));
    let y = DVector::from_fn(n, |i, _| (2.0 * x[(i, 0)]).sin() + rng.random_range(-0.5..0.5));
    Dataset::new(x, y).unwrap()
}

fn kernels() -> impl Strategy<Value = KernelSpec> {
    (0u32..4, 0.3f64..2.0, 0.2f64..1.5).prop_map(|(family, v, l)| match family {
        0 => KernelSpec::squared_exponential(v, l).unwrap(),
        f => KernelSpec::matern(f - 1, v, l).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounds_bracket_marginal_likelihood(
        kernel in kernels(),
        noise in 0.05f64..2.0,
        m in 1usize..12,
        seed in 0u64..1000,
    ) {
        let d = data(40, seed);
        let noise = NoiseModel::new(noise).unwrap();
        let z = d.x.rows(0, m).into_owned();
        let ops = feature_operators(&InducingSet::Points(z), &kernel, &d.x).unwrap();
        let lower = elbo(&ops, &d.y, noise).unwrap();
        let lml = log_marginal_likelihood(&d, &kernel, noise).unwrap();
        let upper = upper_bound(&ops, &d.y, noise, ops.trace_gap().unwrap()).unwrap();
        let kl = kl_exact(&d, &kernel, noise, &ops).unwrap();
        let tol = 1e-8 * lml.abs().max(1.0);
        prop_assert!(lower <= lml + tol);
        prop_assert!(lml <= upper + tol);
        prop_assert!(kl >= -tol);
        prop_assert!((kl - (lml - lower)).abs() <= 1e-6 * lml.abs().max(1.0));
    }

    #[test]
    fn greedy_prefixes_shrink_kl(seed in 0u64..1000, l in 0.4f64..1.5) {
        let d = data(60, seed);
        let kernel = KernelSpec::squared_exponential(1.0, l).unwrap();
        let noise = NoiseModel::new(0.3).unwrap();
        let order = greedy_det_init(&kernel, &d.x, 6).unwrap();
        let mut prev = f64::INFINITY;
        for m in 1..=order.len() {
            let z = d.x.select_rows(&order[..m]);
            let ops = feature_operators(&InducingSet::Points(z), &kernel, &d.x).unwrap();
            let kl = kl_exact(&d, &kernel, noise, &ops).unwrap();
            prop_assert!(kl <= prev + 1e-8, "M={m}: {kl} after {prev}");
            prev = kl;
        }
    }
}

#[test]
fn every_input_as_inducing_point_is_exact() {
    let d = data(30, 7);
    let kernel = KernelSpec::matern(1, 1.0, 0.7).unwrap();
    let noise = NoiseModel::new(0.5).unwrap();
    let ops = feature_operators(&InducingSet::Points(d.x.clone()), &kernel, &d.x).unwrap();
    assert!(kl_exact(&d, &kernel, noise, &ops).unwrap().abs() < 1e-8);
}
