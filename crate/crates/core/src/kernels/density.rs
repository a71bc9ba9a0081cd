use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Density the training inputs are assumed to be drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    /// Independent normal marginals.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    /// Uniform on the box `[lo_d, hi_d]`.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    /// Uniform over the rows of a reference sample.
    Empirical(DMatrix<f64>),
}

impl DensitySpec {
    pub fn gaussian_1d(mean: f64, std: f64) -> Result<Self> {
        let d = Self::Gaussian {
            mean: vec![mean],
            std: vec![std],
        };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform_1d(lo: f64, hi: f64) -> Result<Self> {
        let d = Self::Uniform {
            lo: vec![lo],
            hi: vec![hi],
        };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Uniform { lo, .. } => lo.len(),
            Self::Empirical(sample) => sample.ncols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { mean, std } => {
                if mean.is_empty() || mean.len() != std.len() {
                    return Err(Error::InvalidHyperparameter(
                        "gaussian density needs matching nonempty mean and std".into(),
                    ));
                }
                if std.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::InvalidHyperparameter(
                        "gaussian std must be positive".into(),
                    ));
                }
            }
            Self::Uniform { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidHyperparameter(
                        "uniform density needs matching nonempty bounds".into(),
                    ));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::InvalidHyperparameter(
                        "uniform density needs lo < hi".into(),
                    ));
                }
            }
            Self::Empirical(sample) => {
                if sample.nrows() == 0 || sample.ncols() == 0 {
                    return Err(Error::InvalidHyperparameter(
                        "empirical density needs a nonempty sample".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Draws `n` points as the rows of an `n × D` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let d = self.dim();
        let mut x = DMatrix::zeros(n, d);
        match self {
            Self::Gaussian { mean, std } => {
                for i in 0..n {
                    for k in 0..d {
                        let z: f64 = StandardNormal.sample(rng);
                        x[(i, k)] = mean[k] + std[k] * z;
                    }
                }
            }
            Self::Uniform { lo, hi } => {
                for i in 0..n {
                    for k in 0..d {
                        x[(i, k)] = rng.random_range(lo[k]..hi[k]);
                    }
                }
            }
            Self::Empirical(sample) => {
                for i in 0..n {
                    let r = rng.random_range(0..sample.nrows());
                    for k in 0..d {
                        x[(i, k)] = sample[(r, k)];
                    }
                }
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_parameters() {
        assert!(DensitySpec::gaussian_1d(0.0, 0.0).is_err());
        assert!(DensitySpec::uniform_1d(1.0, 1.0).is_err());
        assert!(DensitySpec::Empirical(DMatrix::zeros(0, 1)).validate().is_err());
    }

    #[test]
    fn samples_have_expected_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = DensitySpec::gaussian_1d(1.0, 2.0).unwrap();
        let x = g.sample(20000, &mut rng);
        let mean = x.mean();
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20000.0;
        assert!((mean - 1.0).abs() < 0.05);
        assert!((var - 4.0).abs() < 0.15);

        let u = DensitySpec::uniform_1d(0.0, 5.0).unwrap();
        let x = u.sample(1000, &mut rng);
        assert!(x.iter().all(|v| (0.0..5.0).contains(v)));
    }
}
