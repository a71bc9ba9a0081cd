//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each operation is a plain function returning a view struct, so the same
//! code runs natively in tests.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use svgp_core::gp_exact::{sample_prior_outputs, Dataset, NoiseModel};
use svgp_core::inducing::{greedy_det_init_with_nugget, kdpp_mcmc_with_nugget, uniform_subset};
use svgp_core::kernels::{nystrom_spectrum, DensitySpec, KernelSpec, SeGaussianSpectrum};
use svgp_core::svgp::{elbo, feature_operators, kl_exact, upper_bound, InducingSet};
use wasm_bindgen::prelude::*;

/// Largest sample the page may request.
pub const MAX_N: usize = 600;
/// Largest number of eigenvalues or inducing points.
pub const MAX_M: usize = 40;

const QUADRATURE_NODES: usize = 128;
const SELECTION_NUGGET: f64 = 1e-6;

pub type DemoResult<T> = std::result::Result<T, String>;

fn check_sizes(n: usize, m: usize) -> DemoResult<()> {
    if !(2..=MAX_N).contains(&n) {
        return Err(format!("N must lie in 2..={MAX_N}"));
    }
    if m == 0 || m > MAX_M || m > n {
        return Err(format!("M must lie in 1..={}", MAX_M.min(n)));
    }
    Ok(())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}

/// Closed-form, quadrature and sample eigenvalues of an SE kernel under
/// N(0, s²) inputs.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct SpectrumView {
    analytic: Vec<f64>,
    quadrature: Vec<f64>,
    sample: Vec<f64>,
}

#[wasm_bindgen]
impl SpectrumView {
    #[wasm_bindgen(getter)]
    pub fn analytic(&self) -> Vec<f64> {
        self.analytic.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn quadrature(&self) -> Vec<f64> {
        self.quadrature.clone()
    }

    /// Eigenvalues of K_ff / N on a random sample.
    #[wasm_bindgen(getter)]
    pub fn sample(&self) -> Vec<f64> {
        self.sample.clone()
    }
}

pub fn spectrum(lengthscale: f64, input_std: f64, count: usize, n: usize, seed: u64) -> DemoResult<SpectrumView> {
    check_sizes(n, count)?;
    let kernel = KernelSpec::squared_exponential(1.0, lengthscale).map_err(err)?;
    let analytic = SeGaussianSpectrum::new(1.0, lengthscale, input_std).map_err(err)?.eigenvalues(count);
    let density = DensitySpec::gaussian_1d(0.0, input_std).map_err(err)?;
    let quadrature = nystrom_spectrum(&kernel, &density, count, QUADRATURE_NODES).map_err(err)?.eigenvalues().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = density.sample(n, &mut rng);
    let gram = kernel.gram_sym(&x).map_err(err)? / n as f64;
    let mut sample: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    sample.sort_by(|a, b| b.total_cmp(a));
    sample.truncate(count);
    Ok(SpectrumView { analytic, quadrature, sample })
}

/// Inputs from a three-cluster mixture with k-DPP, greedy and uniform picks.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct DispersionView {
    inputs: Vec<f64>,
    kdpp: Vec<usize>,
    greedy: Vec<usize>,
    uniform: Vec<usize>,
}

fn nn_distance(x: &[f64], idx: &[usize]) -> f64 {
    if idx.len() < 2 {
        return 0.0;
    }
    let total: f64 = idx
        .iter()
        .map(|&i| {
            idx.iter()
                .filter(|&&j| j != i)
                .map(|&j| (x[i] - x[j]).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / idx.len() as f64
}

#[wasm_bindgen]
impl DispersionView {
    #[wasm_bindgen(getter)]
    pub fn inputs(&self) -> Vec<f64> {
        self.inputs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn kdpp(&self) -> Vec<usize> {
        self.kdpp.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn greedy(&self) -> Vec<usize> {
        self.greedy.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn uniform(&self) -> Vec<usize> {
        self.uniform.clone()
    }

    /// Mean nearest-neighbour distance within each selection, in the order
    /// k-DPP, greedy, uniform.
    pub fn spread(&self) -> Vec<f64> {
        [&self.kdpp, &self.greedy, &self.uniform].iter().map(|s| nn_distance(&self.inputs, s)).collect()
    }
}

pub fn cluster_sample(n: usize, seed: u64) -> Vec<f64> {
    const CENTERS: [f64; 3] = [-2.0, 0.0, 2.5];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 0.3).expect("positive std");
    (0..n).map(|i| CENTERS[i % CENTERS.len()] + spread.sample(&mut rng)).collect()
}

pub fn dispersion(lengthscale: f64, n: usize, m: usize, steps: u64, seed: u64) -> DemoResult<DispersionView> {
    check_sizes(n, m)?;
    let kernel = KernelSpec::squared_exponential(1.0, lengthscale).map_err(err)?;
    let inputs = cluster_sample(n, seed);
    let x = column(&inputs);
    let kdpp = kdpp_mcmc_with_nugget(&kernel, &x, m, steps, seed, SELECTION_NUGGET).map_err(err)?;
    let mut greedy = greedy_det_init_with_nugget(&kernel, &x, m, SELECTION_NUGGET).map_err(err)?;
    greedy.sort_unstable();
    let uniform = uniform_subset(n, m, seed).map_err(err)?;
    Ok(DispersionView { inputs, kdpp, greedy, uniform })
}

/// KL and the a posteriori gap along greedy nested inducing sets.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct SweepView {
    kl: Vec<f64>,
    gap: Vec<f64>,
    trace: Vec<f64>,
}

#[wasm_bindgen]
impl SweepView {
    /// Entry `k` is for M = k + 1.
    #[wasm_bindgen(getter)]
    pub fn kl(&self) -> Vec<f64> {
        self.kl.clone()
    }

    /// Upper bound minus ELBO.
    #[wasm_bindgen(getter)]
    pub fn gap(&self) -> Vec<f64> {
        self.gap.clone()
    }

    /// tr(K_ff − Q_ff).
    #[wasm_bindgen(getter)]
    pub fn trace(&self) -> Vec<f64> {
        self.trace.clone()
    }
}

pub fn sweep(lengthscale: f64, noise: f64, n: usize, m_max: usize, seed: u64) -> DemoResult<SweepView> {
    check_sizes(n, m_max)?;
    let kernel = KernelSpec::squared_exponential(1.0, lengthscale).map_err(err)?;
    let noise = NoiseModel::new(noise).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DensitySpec::gaussian_1d(0.0, 1.0).map_err(err)?.sample(n, &mut rng);
    let y = sample_prior_outputs(&x, &kernel, noise, seed ^ 0x9e37).map_err(err)?;
    let data = Dataset::new(x, y).map_err(err)?;
    let order = greedy_det_init_with_nugget(&kernel, &data.x, m_max, SELECTION_NUGGET).map_err(err)?;
    let mut view = SweepView { kl: Vec::new(), gap: Vec::new(), trace: Vec::new() };
    for m in 1..=m_max {
        let z = data.x.select_rows(&order[..m]);
        let ops = feature_operators(&InducingSet::Points(z), &kernel, &data.x).map_err(err)?;
        let t = ops.trace_gap().map_err(err)?;
        let lower = elbo(&ops, &data.y, noise).map_err(err)?;
        let upper = upper_bound(&ops, &data.y, noise, t).map_err(err)?;
        view.kl.push(kl_exact(&data, &kernel, noise, &ops).map_err(err)?);
        view.gap.push(upper - lower);
        view.trace.push(t);
    }
    Ok(view)
}

fn js<T>(r: DemoResult<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = spectrum)]
pub fn spectrum_js(lengthscale: f64, input_std: f64, count: usize, n: usize, seed: u32) -> Result<SpectrumView, JsError> {
    js(spectrum(lengthscale, input_std, count, n, seed.into()))
}

#[wasm_bindgen(js_name = dispersion)]
pub fn dispersion_js(lengthscale: f64, n: usize, m: usize, steps: u32, seed: u32) -> Result<DispersionView, JsError> {
    js(dispersion(lengthscale, n, m, steps.into(), seed.into()))
}

#[wasm_bindgen(js_name = sweep)]
pub fn sweep_js(lengthscale: f64, noise: f64, n: usize, m_max: usize, seed: u32) -> Result<SweepView, JsError> {
    js(sweep(lengthscale, noise, n, m_max, seed.into()))
}
