//! Inducing-set construction: uniform and greedy subsets, the ε k-DPP
//! Metropolis chain, and spectral features.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chol::{LowerFactor, APPEND_FLOOR};
use crate::error::{Error, Result};
use crate::kernels::{nystrom_spectrum, DensitySpec, KernelFamily, KernelSpec, SeGaussianSpectrum};
use crate::svgp::InducingSet;

/// Steps between refactorizations of the chain's Cholesky factor.
pub const REFACTOR_INTERVAL: u64 = 10_000;
/// Largest number of subsets the enumeration oracle will visit.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;
/// Allowed drift of the incrementally maintained log-determinant.
pub const LOG_DET_DRIFT_TOL: f64 = 1e-6;

fn check_m(n: usize, m: usize) -> Result<()> {
    if m > n {
        return Err(Error::MTooLarge { m, n });
    }
    Ok(())
}

/// `M` indices drawn uniformly without replacement, sorted.
pub fn uniform_subset(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    check_m(n, m)?;
    if m == 0 {
        return Err(Error::InvalidInput("need at least one inducing point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Greedy maximization of `det K_S`, one index at a time, in selection order.
///
/// Each candidate's gain is the squared diagonal `d²` its `append_index`
/// would produce. The gains are kept up to date by pivoted Cholesky so the
/// whole run costs `O(NM²)`.
pub fn greedy_det_init(kernel: &KernelSpec, x: &DMatrix<f64>, m: usize) -> Result<Vec<usize>> {
    greedy_det_init_with_nugget(kernel, x, m, 0.0)
}

fn check_nugget(nugget: f64) -> Result<()> {
    if !(nugget >= 0.0 && nugget.is_finite()) {
        return Err(Error::InvalidInput(format!("nugget must be finite and nonnegative, got {nugget}")));
    }
    Ok(())
}

/// Greedy selection for the kernel `K + nugget·I`.
pub fn greedy_det_init_with_nugget(kernel: &KernelSpec, x: &DMatrix<f64>, m: usize, nugget: f64) -> Result<Vec<usize>> {
    kernel.check_inputs(x)?;
    check_nugget(nugget)?;
    let n = x.nrows();
    check_m(n, m)?;
    let k_self = kernel.variance + nugget;
    let mut gain = vec![k_self; n];
    let mut chosen = vec![false; n];
    // rows[k][j] = k-th column of the pivoted factor at candidate j.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut selected = Vec::with_capacity(m);
    let floor = APPEND_FLOOR * k_self;
    for _ in 0..m {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if chosen[j] || !(gain[j] > floor) {
                continue;
            }
            if best.is_none_or(|b| gain[j] > gain[b]) {
                best = Some(j);
            }
        }
        let Some(p) = best else {
            return Err(Error::DegenerateKernel {
                wanted: m,
                selected: selected.len(),
            });
        };
        chosen[p] = true;
        let dp = gain[p].sqrt();
        let mut col = vec![0.0; n];
        for j in 0..n {
            if chosen[j] {
                continue;
            }
            let mut c = kernel.eval_rows(x, p, x, j);
            for r in &rows {
                c -= r[p] * r[j];
            }
            c /= dp;
            col[j] = c;
            gain[j] -= c * c;
        }
        col[p] = dp;
        rows.push(col);
        selected.push(p);
    }
    Ok(selected)
}

/// `⌈NM² log N + NM log(1/ε)⌉`.
pub fn mixing_steps(n: usize, m: usize, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let (nf, mf) = (n as f64, m as f64);
    let r = nf * mf * mf * nf.ln().max(0.0) + nf * mf * (1.0 / epsilon).ln();
    Ok(r.ceil() as u64)
}

/// Lazy Metropolis chain on `M`-subsets targeting `π(S) ∝ det K_S`.
///
/// A positive nugget targets `det(K_S + nugget·I)` instead, which keeps the
/// chain usable when `M` exceeds the numerical rank of `K_ff`.
#[derive(Debug, Clone)]
pub struct KdppSampler<'a> {
    kernel: &'a KernelSpec,
    x: &'a DMatrix<f64>,
    nugget: f64,
    subset: Vec<usize>,
    outside: Vec<usize>,
    factor: LowerFactor,
    log_det: f64,
    rng: ChaCha8Rng,
    steps: u64,
    accepted: u64,
    max_drift: f64,
}

impl<'a> KdppSampler<'a> {
    /// Starts from `greedy_det_init`. Chains with the same seed and
    /// different `chain_id` draw from independent streams.
    pub fn new(kernel: &'a KernelSpec, x: &'a DMatrix<f64>, m: usize, seed: u64, chain_id: u64) -> Result<Self> {
        Self::with_nugget(kernel, x, m, 0.0, seed, chain_id)
    }

    pub fn with_nugget(
        kernel: &'a KernelSpec,
        x: &'a DMatrix<f64>,
        m: usize,
        nugget: f64,
        seed: u64,
        chain_id: u64,
    ) -> Result<Self> {
        let start = greedy_det_init_with_nugget(kernel, x, m, nugget)?;
        Self::from_subset_with_nugget(kernel, x, start, nugget, seed, chain_id)
    }

    pub fn from_subset(
        kernel: &'a KernelSpec,
        x: &'a DMatrix<f64>,
        subset: Vec<usize>,
        seed: u64,
        chain_id: u64,
    ) -> Result<Self> {
        Self::from_subset_with_nugget(kernel, x, subset, 0.0, seed, chain_id)
    }

    pub fn from_subset_with_nugget(
        kernel: &'a KernelSpec,
        x: &'a DMatrix<f64>,
        subset: Vec<usize>,
        nugget: f64,
        seed: u64,
        chain_id: u64,
    ) -> Result<Self> {
        kernel.check_inputs(x)?;
        check_nugget(nugget)?;
        let n = x.nrows();
        check_m(n, subset.len())?;
        let mut inside = vec![false; n];
        for &i in &subset {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, dim: n });
            }
            if inside[i] {
                return Err(Error::InvalidInput(format!("index {i} appears twice")));
            }
            inside[i] = true;
        }
        let outside = (0..n).filter(|&i| !inside[i]).collect();
        let factor = if subset.is_empty() {
            LowerFactor::identity(0)
        } else {
            LowerFactor::factor(&gram_with_nugget(kernel, x, &subset, nugget), &[0.0])?
        };
        let log_det = factor.log_det();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain_id);
        Ok(Self {
            kernel,
            x,
            nugget,
            subset,
            outside,
            factor,
            log_det,
            rng,
            steps: 0,
            accepted: 0,
            max_drift: 0.0,
        })
    }

    /// Current subset in factor order.
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn sorted_subset(&self) -> Vec<usize> {
        let mut s = self.subset.clone();
        s.sort_unstable();
        s
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Largest log-determinant drift seen at a refactorization.
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    /// Factor and log-determinant of `S \ {subset[pos]} ∪ {j}`, or `None`
    /// when that matrix is numerically singular.
    fn swapped(&self, pos: usize, j: usize) -> Result<Option<(LowerFactor, f64)>> {
        let m = self.subset.len();
        let reduced = if m == 1 {
            LowerFactor::identity(0)
        } else {
            self.factor.remove_index(pos)?
        };
        let k_cross = DVector::from_iterator(
            m - 1,
            self.subset
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != pos)
                .map(|(_, &s)| self.kernel.eval_rows(self.x, s, self.x, j)),
        );
        match reduced.append_index(&k_cross, self.kernel.variance + self.nugget) {
            Ok(f) => {
                let ld = f.log_det();
                Ok(Some((f, ld)))
            }
            Err(Error::NotPositiveDefinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// `½ min{1, det K_T / det K_S}` for the swap of `subset[pos]` with `j`.
    pub fn acceptance(&self, pos: usize, j: usize) -> Result<f64> {
        Ok(match self.swapped(pos, j)? {
            Some((_, ld)) => 0.5 * (ld - self.log_det).exp().min(1.0),
            None => 0.0,
        })
    }

    /// Probability of moving to each neighbouring subset in one step, as
    /// `(sorted subset, probability)`. The holding probability is omitted.
    pub fn transitions(&self) -> Result<Vec<(Vec<usize>, f64)>> {
        let (m, k) = (self.subset.len(), self.outside.len());
        let mut out = Vec::with_capacity(m * k);
        if m == 0 || k == 0 {
            return Ok(out);
        }
        let proposal = 1.0 / (m * k) as f64;
        for pos in 0..m {
            for &j in &self.outside {
                let mut t: Vec<usize> = self.subset.clone();
                t[pos] = j;
                t.sort_unstable();
                out.push((t, proposal * self.acceptance(pos, j)?));
            }
        }
        Ok(out)
    }

    /// One step of the chain. Returns whether the proposal was accepted.
    pub fn step(&mut self) -> Result<bool> {
        let (m, k) = (self.subset.len(), self.outside.len());
        if m == 0 || k == 0 {
            self.steps += 1;
            return Ok(false);
        }
        let pos = self.rng.random_range(0..m);
        let q = self.rng.random_range(0..k);
        let u: f64 = self.rng.random();
        let j = self.outside[q];
        let mut moved = false;
        if let Some((f, ld)) = self.swapped(pos, j)? {
            if u < 0.5 * (ld - self.log_det).exp().min(1.0) {
                let i = self.subset.remove(pos);
                self.subset.push(j);
                self.outside[q] = i;
                self.factor = f;
                self.log_det = ld;
                self.accepted += 1;
                moved = true;
            }
        }
        self.steps += 1;
        if self.steps.is_multiple_of(REFACTOR_INTERVAL) {
            self.refactor()?;
        }
        Ok(moved)
    }

    pub fn run(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<()> {
        let fresh = LowerFactor::factor(&gram_with_nugget(self.kernel, self.x, &self.subset, self.nugget), &[0.0])?;
        let drift = (fresh.log_det() - self.log_det).abs();
        self.max_drift = self.max_drift.max(drift);
        if !(drift <= LOG_DET_DRIFT_TOL) {
            return Err(Error::NumericalInconsistency {
                quantity: "k-DPP log-determinant drift",
                value: drift,
            });
        }
        self.log_det = fresh.log_det();
        self.factor = fresh;
        Ok(())
    }
}

/// Runs `steps` iterations of the chain from the greedy start and returns
/// the final subset, sorted.
pub fn kdpp_mcmc(kernel: &KernelSpec, x: &DMatrix<f64>, m: usize, steps: u64, seed: u64) -> Result<Vec<usize>> {
    kdpp_mcmc_with_nugget(kernel, x, m, steps, seed, 0.0)
}

pub fn kdpp_mcmc_with_nugget(
    kernel: &KernelSpec,
    x: &DMatrix<f64>,
    m: usize,
    steps: u64,
    seed: u64,
    nugget: f64,
) -> Result<Vec<usize>> {
    let mut sampler = KdppSampler::with_nugget(kernel, x, m, nugget, seed, 0)?;
    sampler.run(steps)?;
    Ok(sampler.sorted_subset())
}

fn gram_with_nugget(kernel: &KernelSpec, x: &DMatrix<f64>, subset: &[usize], nugget: f64) -> DMatrix<f64> {
    let mut g = kernel.gram_subset(x, subset);
    for i in 0..subset.len() {
        g[(i, i)] += nugget;
    }
    g
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Every `M`-subset in lexicographic order with probability `∝ det K_S`.
pub fn exact_kdpp_enumeration(kernel: &KernelSpec, x: &DMatrix<f64>, m: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    kernel.check_inputs(x)?;
    let n = x.nrows();
    check_m(n, m)?;
    let count = binomial(n, m);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(Error::EnumerationTooLarge {
            n,
            m,
            limit: ENUMERATION_LIMIT,
        });
    }
    let k = kernel.gram_sym(x)?;
    let mut table = Vec::with_capacity(count as usize);
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let sub = DMatrix::from_fn(m, m, |a, b| k[(idx[a], idx[b])]);
        table.push((idx.clone(), sub.determinant().max(0.0)));
        // Advance to the next combination.
        let Some(p) = (0..m).rev().find(|&p| idx[p] < n - m + p) else {
            break;
        };
        idx[p] += 1;
        for q in p + 1..m {
            idx[q] = idx[q - 1] + 1;
        }
    }
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateKernel { wanted: m, selected: 0 });
    }
    for (_, w) in &mut table {
        *w /= total;
    }
    Ok(table)
}

/// Top `M` eigenpairs of `K_ff`. Eigenvalues at or below the round-off
/// level `N ε_mach λ_max` are dropped, so the returned set may be smaller
/// than `M`.
pub fn eigenvector_features(kernel: &KernelSpec, x: &DMatrix<f64>, m: usize) -> Result<InducingSet> {
    let n = x.nrows();
    check_m(n, m)?;
    let k = kernel.gram_sym(x)?;
    let eig = SymmetricEigen::try_new(k, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    if eig.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cutoff = order.first().map_or(0.0, |&i| eig.eigenvalues[i].max(0.0)) * n as f64 * f64::EPSILON;
    let keep: Vec<usize> = order
        .into_iter()
        .take(m)
        .filter(|&i| eig.eigenvalues[i] > cutoff)
        .collect();
    let eigenvalues = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    Ok(InducingSet::EigenvectorFeatures {
        eigenvalues,
        vectors,
        inputs: x.clone(),
    })
}

/// Leading `M` eigenfunctions of the kernel operator under `density`.
///
/// Eigenvalues come from the closed form for an SE kernel under a
/// one-dimensional Gaussian density and from the quadrature otherwise.
pub fn eigenfunction_features(kernel: &KernelSpec, density: &DensitySpec, m: usize, q: usize) -> Result<InducingSet> {
    let spectrum = nystrom_spectrum(kernel, density, m, q)?;
    let eigenvalues = match (kernel.family, density) {
        (KernelFamily::SquaredExponential, DensitySpec::Gaussian { std, .. }) if std.len() == 1 => {
            SeGaussianSpectrum::new(kernel.variance, kernel.lengthscales[0], std[0])?.eigenvalues(m)
        }
        _ => spectrum.eigenvalues().to_vec(),
    };
    Ok(InducingSet::EigenfunctionFeatures {
        eigenvalues,
        basis: Arc::new(spectrum),
    })
}

/// A selected index set as one CSV line: `run_id,method,seed,i₁ i₂ …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionRecord {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub indices: Vec<usize>,
}

impl SelectionRecord {
    pub const HEADER: &'static str = "run_id,method,seed,indices";

    pub fn new(run_id: &str, method: &str, seed: u64, indices: &[usize]) -> Result<Self> {
        for field in [run_id, method] {
            if field.contains([',', '\n', '\r', '"']) {
                return Err(Error::InvalidInput(format!("field {field:?} is not CSV-safe")));
            }
        }
        let mut indices = indices.to_vec();
        indices.sort_unstable();
        Ok(Self {
            run_id: run_id.into(),
            method: method.into(),
            seed,
            indices,
        })
    }
}

impl fmt::Display for SelectionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},", self.run_id, self.method, self.seed)?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

impl FromStr for SelectionRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("malformed selection line {line:?}"));
        let mut parts = line.trim_end().splitn(4, ',');
        let run_id = parts.next().ok_or_else(bad)?;
        let method = parts.next().ok_or_else(bad)?;
        let seed = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let indices = parts
            .next()
            .ok_or_else(bad)?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<Vec<usize>>>()?;
        Self::new(run_id, method, seed, &indices)
    }
}

#[cfg(test)]
mod tests;
