//! Exact GP regression with a zero mean function.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chol::LowerFactor;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let data = Self { x, y };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if self.x.nrows() != self.y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.nrows(),
                found: self.y.len(),
            });
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Gaussian observation noise with variance `σ_n²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidHyperparameter(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        Ok(Self { variance })
    }
}

/// `K_ff + σ_n² I`.
pub fn noisy_gram(x: &DMatrix<f64>, kernel: &KernelSpec, noise: NoiseModel) -> Result<DMatrix<f64>> {
    let mut k = kernel.gram_sym(x)?;
    for i in 0..k.nrows() {
        k[(i, i)] += noise.variance;
    }
    Ok(k)
}

/// Log marginal likelihood `log N(y | 0, K_ff + σ_n² I)`.
pub fn log_marginal_likelihood(data: &Dataset, kernel: &KernelSpec, noise: NoiseModel) -> Result<f64> {
    data.validate()?;
    let kn = noisy_gram(&data.x, kernel, noise)?;
    let factor = LowerFactor::factor_default(&kn)?;
    let alpha = factor.solve_lower(&data.y);
    let n = data.len() as f64;
    Ok(-0.5 * alpha.norm_squared() - 0.5 * factor.log_det() - 0.5 * n * LN_2PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl Posterior {
    pub fn variances(&self) -> DVector<f64> {
        self.covariance.diagonal()
    }
}

/// Posterior of the latent function at the rows of `x_star`.
pub fn posterior(
    data: &Dataset,
    kernel: &KernelSpec,
    noise: NoiseModel,
    x_star: &DMatrix<f64>,
) -> Result<Posterior> {
    data.validate()?;
    kernel.check_inputs(x_star)?;
    let kn = noisy_gram(&data.x, kernel, noise)?;
    let factor = LowerFactor::factor_default(&kn)?;
    let k_sf = kernel.gram(x_star, &data.x)?;
    let alpha = factor.solve(&data.y);
    let mean = &k_sf * alpha;
    let v = factor.solve_lower_matrix(&k_sf.transpose());
    let mut covariance = kernel.gram_sym(x_star)? - v.transpose() * v;
    covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(Posterior { mean, covariance })
}

/// One draw of `y ~ N(0, K_ff + σ_n² I)`, fully determined by `seed`.
pub fn sample_prior_outputs(
    x: &DMatrix<f64>,
    kernel: &KernelSpec,
    noise: NoiseModel,
    seed: u64,
) -> Result<DVector<f64>> {
    let kn = noisy_gram(x, kernel, noise)?;
    let factor = LowerFactor::factor_default(&kn)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_with_factor(&factor, &mut rng))
}

/// `L z` with `z` standard normal.
pub fn sample_with_factor<R: rand::Rng + ?Sized>(factor: &LowerFactor, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(factor.dim(), |_, _| StandardNormal.sample(rng));
    factor.l() * z
}
