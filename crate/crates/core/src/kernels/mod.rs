//! Stationary covariance functions, input densities and the spectra of the
//! associated integral operators.

mod density;
mod nystrom;
pub mod quadrature;
mod spectrum;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use density::DensitySpec;
pub use nystrom::{nystrom_spectrum, NystromSpectrum};
pub use spectrum::{
    matern_tail_bound, se_ard_gaussian_spectrum, se_gaussian_eigenvalues, se_gaussian_tail,
    MaternTail, SeGaussianSpectrum, SpectrumTail, Validity, MATERN32_UNIT_INTERVAL_C0,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    /// Matérn with smoothness `order + 1/2`. In more than one dimension this
    /// is the product of one-dimensional Matérn kernels.
    MaternHalfInteger { order: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let spec = Self {
            family,
            variance,
            lengthscales,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, variance, vec![lengthscale])
    }

    pub fn matern(order: u32, variance: f64, lengthscale: f64) -> Result<Self> {
        Self::new(
            KernelFamily::MaternHalfInteger { order },
            variance,
            vec![lengthscale],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(Error::InvalidHyperparameter(format!(
                "variance must be positive, got {}",
                self.variance
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidHyperparameter(
                "at least one lengthscale is required".into(),
            ));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(**l > 0.0) || !l.is_finite())
        {
            return Err(Error::InvalidHyperparameter(format!(
                "lengthscales must be positive, got {l}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `k(x, x)`, identical for every `x`.
    pub fn diag_value(&self) -> f64 {
        self.variance
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: y.len(),
            });
        }
        Ok(self.eval_with(|d| x[d] - y[d]))
    }

    /// Covariance between row `i` of `a` and row `j` of `b`. Dimensions are
    /// assumed checked by the caller.
    #[inline]
    pub fn eval_rows(&self, a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
        self.eval_with(|d| a[(i, d)] - b[(j, d)])
    }

    #[inline]
    fn eval_with(&self, diff: impl Fn(usize) -> f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let mut r2 = 0.0;
                for (d, l) in self.lengthscales.iter().enumerate() {
                    let s = diff(d) / l;
                    r2 += s * s;
                }
                self.variance * (-0.5 * r2).exp()
            }
            KernelFamily::MaternHalfInteger { order } => {
                let mut prod = self.variance;
                for (d, l) in self.lengthscales.iter().enumerate() {
                    prod *= matern_profile(order, diff(d).abs() / l);
                }
                prod
            }
        }
    }

    pub fn check_inputs(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Cross-covariance matrix between the rows of `a` and `b`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(a)?;
        self.check_inputs(b)?;
        Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            self.eval_rows(a, i, b, j)
        }))
    }

    /// Symmetric Gram matrix of the rows of `x`; the upper triangle is
    /// mirrored from the lower one so the result is exactly symmetric.
    pub fn gram_sym(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(x)?;
        let n = x.nrows();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            k[(j, j)] = self.variance;
            for i in j + 1..n {
                let v = self.eval_rows(x, i, x, j);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Principal submatrix of the Gram matrix over `indices`.
    pub fn gram_subset(&self, x: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
        let m = indices.len();
        let mut k = DMatrix::zeros(m, m);
        for (a, &i) in indices.iter().enumerate() {
            k[(a, a)] = self.variance;
            for (b, &j) in indices.iter().enumerate().skip(a + 1) {
                let v = self.eval_rows(x, i, x, j);
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        k
    }
}

/// One-dimensional Matérn `k + 1/2` correlation at scaled distance `r`.
fn matern_profile(order: u32, r: f64) -> f64 {
    let k = order as i64;
    let scale = ((2 * k + 1) as f64).sqrt() * r;
    if k == 0 {
        return (-scale).exp();
    }
    // k!/(2k)! Σ_{i=0}^{k} (k+i)! / (i! (k-i)!) (2 scale)^{k-i}
    let mut poly = 0.0;
    for i in 0..=k {
        let coeff = factorial(k + i) / (factorial(i) * factorial(k - i));
        poly += coeff * (2.0 * scale).powi((k - i) as i32);
    }
    poly * factorial(k) / factorial(2 * k) * (-scale).exp()
}

fn factorial(n: i64) -> f64 {
    (1..=n).map(|i| i as f64).product()
}
