//! Gauss quadrature rules from the Jacobi matrix of the orthogonal
//! polynomials (Golub–Welsch). Only the first component of every
//! eigenvector is tracked, so building an `n`-point rule costs O(n²).

use nalgebra::DMatrix;

use super::DensitySpec;
use crate::error::{Error, Result};

/// Nodes (rows of `nodes`) and weights; the weights sum to one for a
/// probability density.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Drops nodes whose weight is below `rel * max(weight)`.
    pub fn pruned(&self, rel: f64) -> Self {
        let wmax = self.weights.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.weights[i] > rel * wmax)
            .collect();
        let d = self.nodes.ncols();
        let nodes = DMatrix::from_fn(keep.len(), d, |i, k| self.nodes[(keep[i], k)]);
        let weights = keep.iter().map(|&i| self.weights[i]).collect();
        Self { nodes, weights }
    }

    /// Gauss–Hermite for `N(0, 1)` inputs (probabilists' normalization).
    pub fn gauss_hermite_normal(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        // Physicists' Jacobi matrix: zero diagonal, off-diagonal sqrt(k/2).
        let diag = vec![0.0; n];
        let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
        let (x, w) = golub_welsch(diag, off, std::f64::consts::PI.sqrt())?;
        let sqrt2 = std::f64::consts::SQRT_2;
        let pi_sqrt = std::f64::consts::PI.sqrt();
        Ok((
            x.iter().map(|t| t * sqrt2).collect(),
            w.iter().map(|v| v / pi_sqrt).collect(),
        ))
    }

    /// Gauss–Legendre on `[-1, 1]` with weights summing to 2.
    pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let diag = vec![0.0; n];
        let off: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        golub_welsch(diag, off, 2.0)
    }

    /// Quadrature rule for `density` with about `q` nodes. Multivariate
    /// Gaussian and uniform densities use tensor grids with
    /// `round(q^{1/D})` nodes per axis; an empirical density uses every
    /// sample point with equal weight.
    pub fn for_density(density: &DensitySpec, q: usize) -> Result<Self> {
        density.validate()?;
        if q == 0 {
            return Err(Error::InvalidInput("quadrature size must be positive".into()));
        }
        let d = density.dim();
        let per_axis = if d == 1 {
            q
        } else {
            ((q as f64).powf(1.0 / d as f64).round() as usize).max(2)
        };
        let axes: Vec<(Vec<f64>, Vec<f64>)> = match density {
            DensitySpec::Gaussian { mean, std } => {
                let (x, w) = Self::gauss_hermite_normal(per_axis)?;
                (0..d)
                    .map(|k| (x.iter().map(|t| mean[k] + std[k] * t).collect(), w.clone()))
                    .collect()
            }
            DensitySpec::Uniform { lo, hi } => {
                let (x, w) = Self::gauss_legendre(per_axis)?;
                (0..d)
                    .map(|k| {
                        let half = 0.5 * (hi[k] - lo[k]);
                        let mid = 0.5 * (hi[k] + lo[k]);
                        (
                            x.iter().map(|t| mid + half * t).collect(),
                            w.iter().map(|v| 0.5 * v).collect(),
                        )
                    })
                    .collect()
            }
            DensitySpec::Empirical(sample) => {
                let n = sample.nrows();
                return Ok(Self {
                    nodes: sample.clone(),
                    weights: vec![1.0 / n as f64; n],
                });
            }
        };
        Ok(tensor_grid(&axes))
    }
}

fn tensor_grid(axes: &[(Vec<f64>, Vec<f64>)]) -> QuadratureRule {
    let d = axes.len();
    let total: usize = axes.iter().map(|(x, _)| x.len()).product();
    let mut nodes = DMatrix::zeros(total, d);
    let mut weights = vec![1.0; total];
    for idx in 0..total {
        let mut rem = idx;
        for (k, (x, w)) in axes.iter().enumerate() {
            let i = rem % x.len();
            rem /= x.len();
            nodes[(idx, k)] = x[i];
            weights[idx] *= w[i];
        }
    }
    QuadratureRule { nodes, weights }
}

/// Eigenvalues of the symmetric tridiagonal Jacobi matrix and `mu0` times
/// the squared first eigenvector components, sorted by node.
fn golub_welsch(mut d: Vec<f64>, off: Vec<f64>, mu0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    if n == 0 {
        return Err(Error::InvalidInput("quadrature size must be positive".into()));
    }
    let mut e = off;
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    implicit_ql(&mut d, &mut e, &mut z)?;
    let mut pairs: Vec<(f64, f64)> = d
        .into_iter()
        .zip(z)
        .map(|(x, v)| (x, mu0 * v * v))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix
/// (diagonal `d`, subdiagonal `e` with `e[n-1] = 0`). `z` holds one row of
/// the accumulated eigenvector matrix.
fn implicit_ql(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::EigenFailure(
                    "tridiagonal QL did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
