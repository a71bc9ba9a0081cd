use nalgebra::{DMatrix, SymmetricEigen};

use super::quadrature::QuadratureRule;
use super::{DensitySpec, KernelSpec};
use crate::error::{Error, Result};

/// Nodes with weight below this fraction of the largest weight carry no
/// numerically visible mass and are dropped before the eigensolve.
const PRUNE_REL: f64 = 1e-30;
const ORTHONORMALITY_TOL: f64 = 1e-6;
const MERCER_TOL: f64 = 1e-3;

/// Numerical eigenpairs of the integral operator `(K g)(x') = ∫ g(x) k(x, x') p(x) dx`
/// from a quadrature discretization, with Nyström-extended eigenfunctions.
#[derive(Debug, Clone)]
pub struct NystromSpectrum {
    kernel: KernelSpec,
    nodes: DMatrix<f64>,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// `coef[(j, m)] = √w_j u_jm / λ_m`, so `φ_m(x) = Σ_j coef[(j, m)] k(x, x_j)`.
    coef: DMatrix<f64>,
    orthonormality_error: f64,
    nominal_nodes: usize,
}

impl NystromSpectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Max deviation of the weighted Gram of the eigenfunctions from `I`.
    pub fn orthonormality_error(&self) -> f64 {
        self.orthonormality_error
    }

    /// Quadrature nodes actually used after pruning.
    pub fn effective_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn nominal_nodes(&self) -> usize {
        self.nominal_nodes
    }

    /// Numerical trace `Σ_j w_j k(x_j, x_j)`.
    pub fn trace(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.kernel.variance
    }

    /// `φ̂_m(x)` for `m` in `0..len()`.
    pub fn eigenfunction(&self, m: usize, x: &[f64]) -> f64 {
        let xm = DMatrix::from_row_slice(1, x.len(), x);
        (0..self.weights.len())
            .map(|j| self.coef[(j, m)] * self.kernel.eval_rows(&xm, 0, &self.nodes, j))
            .sum()
    }

    /// Matrix of `φ̂_m(x_i)` with one row per row of `x`.
    pub fn eigenfunctions_at(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.kernel.gram(x, &self.nodes)?;
        Ok(k * &self.coef)
    }
}

/// Leading `m` eigenpairs of the kernel integral operator under `density`,
/// from a `q`-node quadrature rule (Gauss–Hermite for Gaussian densities,
/// Gauss–Legendre for uniform ones, the sample itself for empirical ones).
pub fn nystrom_spectrum(
    kernel: &KernelSpec,
    density: &DensitySpec,
    m: usize,
    q: usize,
) -> Result<NystromSpectrum> {
    kernel.validate()?;
    if density.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            found: density.dim(),
        });
    }
    if m == 0 {
        return Err(Error::InvalidInput("need at least one eigenpair".into()));
    }
    let rule = QuadratureRule::for_density(density, q)?;
    let nominal = rule.len();
    if nominal < m {
        return Err(Error::QuadratureTooCoarse { error: f64::INFINITY });
    }
    let rule = rule.pruned(PRUNE_REL);
    let qe = rule.len();
    if qe < m {
        return Err(Error::QuadratureTooCoarse { error: f64::INFINITY });
    }

    let sqrt_w: Vec<f64> = rule.weights.iter().map(|w| w.sqrt()).collect();
    let k_nodes = kernel.gram_sym(&rule.nodes)?;
    let scaled = DMatrix::from_fn(qe, qe, |i, j| sqrt_w[i] * k_nodes[(i, j)] * sqrt_w[j]);
    let eig = SymmetricEigen::new(scaled);
    let mut order: Vec<usize> = (0..qe).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order[..m].iter().map(|&i| eig.eigenvalues[i]).collect();
    if eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::QuadratureTooCoarse { error: f64::INFINITY });
    }
    let coef = DMatrix::from_fn(qe, m, |j, c| {
        sqrt_w[j] * eig.eigenvectors[(j, order[c])] / eigenvalues[c]
    });

    // Eigenfunctions at the nodes through the Nyström extension.
    let phi = &k_nodes * &coef;
    let mut weighted = phi.clone();
    for (j, w) in rule.weights.iter().enumerate() {
        weighted.row_mut(j).scale_mut(*w);
    }
    let gram = phi.transpose() * weighted;
    let orthonormality_error = (gram - DMatrix::identity(m, m)).amax();
    if !(orthonormality_error <= ORTHONORMALITY_TOL) {
        return Err(Error::QuadratureTooCoarse {
            error: orthonormality_error,
        });
    }
    for j in 0..qe {
        let partial: f64 = (0..m).map(|c| eigenvalues[c] * phi[(j, c)].powi(2)).sum();
        if partial > kernel.variance * (1.0 + MERCER_TOL) {
            return Err(Error::QuadratureTooCoarse {
                error: orthonormality_error,
            });
        }
    }

    Ok(NystromSpectrum {
        kernel: kernel.clone(),
        nodes: rule.nodes,
        weights: rule.weights,
        eigenvalues,
        coef,
        orthonormality_error,
        nominal_nodes: nominal,
    })
}

#[cfg(test)]
mod tests {
    use super::super::SeGaussianSpectrum;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn se_gaussian_matches_closed_form() {
        let (l, sigma) = (0.6, 1.0);
        let kernel = KernelSpec::squared_exponential(1.0, l).unwrap();
        let density = DensitySpec::gaussian_1d(0.0, sigma).unwrap();
        let ny = nystrom_spectrum(&kernel, &density, 10, 2048).unwrap();
        let exact = SeGaussianSpectrum::new(1.0, l, sigma).unwrap();
        for m in 0..10 {
            let rel = (ny.eigenvalues()[m] - exact.eigenvalue(m + 1)).abs() / exact.eigenvalue(m + 1);
            assert!(rel < 0.01, "m = {m}: rel {rel}");
        }
        assert!(ny.effective_nodes() < ny.nominal_nodes());
    }

    #[test]
    fn full_spectrum_sums_to_variance() {
        for kernel in [
            KernelSpec::squared_exponential(2.0, 0.3).unwrap(),
            KernelSpec::matern(1, 2.0, 0.3).unwrap(),
        ] {
            let density = DensitySpec::uniform_1d(0.0, 1.0).unwrap();
            let q = 64;
            // Complete spectrum: only the trace identity is checked, so use
            // the raw discretization rather than the validated constructor.
            let rule = QuadratureRule::for_density(&density, q).unwrap();
            let k = kernel.gram_sym(&rule.nodes).unwrap();
            let s = DMatrix::from_fn(q, q, |i, j| {
                rule.weights[i].sqrt() * k[(i, j)] * rule.weights[j].sqrt()
            });
            let total: f64 = SymmetricEigen::new(s).eigenvalues.iter().sum();
            assert!((total - 2.0).abs() < 0.01 * 2.0);
            let ny = nystrom_spectrum(&kernel, &density, 8, q).unwrap();
            assert_relative_eq!(ny.trace(), 2.0, max_relative = 1e-12);
            assert!(ny.eigenvalues().iter().sum::<f64>() <= 2.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn near_constant_kernel_is_rank_one() {
        let kernel = KernelSpec::squared_exponential(1.5, 1e6).unwrap();
        let density = DensitySpec::uniform_1d(0.0, 1.0).unwrap();
        let rule = QuadratureRule::for_density(&density, 32).unwrap();
        let k = kernel.gram_sym(&rule.nodes).unwrap();
        let s = DMatrix::from_fn(32, 32, |i, j| {
            rule.weights[i].sqrt() * k[(i, j)] * rule.weights[j].sqrt()
        });
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert_relative_eq!(ev[0], 1.5, max_relative = 1e-10);
        assert!(ev[1..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn eigenfunctions_are_orthonormal_and_extend() {
        let kernel = KernelSpec::matern(1, 1.0, 0.5).unwrap();
        let density = DensitySpec::uniform_1d(0.0, 1.0).unwrap();
        let ny = nystrom_spectrum(&kernel, &density, 12, 256).unwrap();
        assert!(ny.orthonormality_error() < 1e-6);
        let ev = ny.eigenvalues();
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        // Mercer partial sum stays below k(x, x) off the grid too.
        for &x in &[0.013, 0.5, 0.77] {
            let partial: f64 = (0..ny.len())
                .map(|m| ev[m] * ny.eigenfunction(m, &[x]).powi(2))
                .sum();
            assert!(partial <= 1.0 + 1e-3);
        }
    }

    #[test]
    fn matern32_constant_dominates_numeric_tail() {
        use super::super::{matern_tail_bound, MATERN32_UNIT_INTERVAL_C0};
        let kernel = KernelSpec::matern(1, 1.0, 0.5).unwrap();
        let density = DensitySpec::uniform_1d(0.0, 1.0).unwrap();
        let ny = nystrom_spectrum(&kernel, &density, 50, 512).unwrap();
        let ev = ny.eigenvalues();
        for m in 5..=50 {
            let tail = ny.trace() - ev[..m].iter().sum::<f64>();
            assert!(matern_tail_bound(1, m, MATERN32_UNIT_INTERVAL_C0) >= tail, "M = {m}");
        }
    }

    #[test]
    fn too_many_eigenpairs_is_coarse() {
        let kernel = KernelSpec::squared_exponential(1.0, 2.0).unwrap();
        let density = DensitySpec::uniform_1d(0.0, 1.0).unwrap();
        // A smooth kernel on a small grid: trailing eigenvalues sit at round-off.
        assert!(matches!(
            nystrom_spectrum(&kernel, &density, 30, 32),
            Err(Error::QuadratureTooCoarse { .. })
        ));
    }
}
