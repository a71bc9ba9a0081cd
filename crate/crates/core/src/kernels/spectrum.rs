use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::{Error, Result};

/// Matérn-3/2 tail constant for inputs uniform on `[0, 1]` and lengthscale
/// 0.5, calibrated against the Nyström spectrum over `M ∈ [5, 50]`.
pub const MATERN32_UNIT_INTERVAL_C0: f64 = 0.85;

/// Eigen-decay of the SE kernel under a centred Gaussian input density:
/// `λ_m = v √(2a/A) B^{m-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeGaussianSpectrum {
    pub variance: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub big_a: f64,
    pub big_b: f64,
}

impl SeGaussianSpectrum {
    pub fn new(variance: f64, lengthscale: f64, input_std: f64) -> Result<Self> {
        for (name, value) in [
            ("variance", variance),
            ("lengthscale", lengthscale),
            ("input std", input_std),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidHyperparameter(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        let a = 1.0 / (4.0 * input_std * input_std);
        let b = 1.0 / (2.0 * lengthscale * lengthscale);
        let c = (a * a + 2.0 * a * b).sqrt();
        let big_a = a + b + c;
        Ok(Self {
            variance,
            a,
            b,
            c,
            big_a,
            big_b: b / big_a,
        })
    }

    /// Geometric ratio `B = λ_{m+1} / λ_m`.
    pub fn ratio(&self) -> f64 {
        self.big_b
    }

    /// `√(2a/A)`, the leading eigenvalue per unit variance.
    pub fn unit_leading(&self) -> f64 {
        (2.0 * self.a / self.big_a).sqrt()
    }

    /// `λ_m` for `m ≥ 1`.
    pub fn eigenvalue(&self, m: usize) -> f64 {
        assert!(m >= 1, "eigenvalues are indexed from 1");
        self.variance * self.unit_leading() * self.big_b.powi(m as i32 - 1)
    }

    pub fn eigenvalues(&self, count: usize) -> Vec<f64> {
        (1..=count).map(|m| self.eigenvalue(m)).collect()
    }

    /// `Σ_{m>M} λ_m = v √(2a) B^M / ((1 − B) √A)`.
    pub fn tail(&self, m: usize) -> f64 {
        self.variance * (2.0 * self.a).sqrt() / ((1.0 - self.big_b) * self.big_a.sqrt())
            * self.big_b.powi(m as i32)
    }
}

pub fn se_gaussian_eigenvalues(
    variance: f64,
    lengthscale: f64,
    input_std: f64,
    count: usize,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidHyperparameter("count must be at least 1".into()));
    }
    Ok(SeGaussianSpectrum::new(variance, lengthscale, input_std)?.eigenvalues(count))
}

pub fn se_gaussian_tail(variance: f64, lengthscale: f64, input_std: f64, m: usize) -> Result<f64> {
    Ok(SeGaussianSpectrum::new(variance, lengthscale, input_std)?.tail(m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    value: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Leading `cutoff` eigenvalues of the SE-ARD operator under a Gaussian
/// density with independent axes, given `(lengthscale_d, input_std_d)` per
/// axis. Eigenvalues are products of the per-axis spectra; the overall
/// variance is applied once. Multi-indices are explored best-first.
pub fn se_ard_gaussian_spectrum(
    axes: &[(f64, f64)],
    variance: f64,
    cutoff: usize,
) -> Result<Vec<f64>> {
    if axes.is_empty() || cutoff == 0 {
        return Err(Error::InvalidHyperparameter(
            "need at least one axis and a positive cutoff".into(),
        ));
    }
    let per_axis: Vec<SeGaussianSpectrum> = axes
        .iter()
        .map(|&(l, s)| SeGaussianSpectrum::new(variance, l, s))
        .collect::<Result<_>>()?;
    let value_of = |idx: &[usize]| -> f64 {
        variance
            * per_axis
                .iter()
                .zip(idx)
                .map(|(s, &m)| s.unit_leading() * s.ratio().powi(m as i32))
                .product::<f64>()
    };

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut store: Vec<Vec<usize>> = Vec::new();
    let mut heap = BinaryHeap::new();
    let origin = vec![0usize; axes.len()];
    heap.push(Candidate {
        value: value_of(&origin),
        index: 0,
    });
    seen.insert(origin.clone());
    store.push(origin);

    let mut out = Vec::with_capacity(cutoff);
    while out.len() < cutoff {
        let Some(top) = heap.pop() else { break };
        out.push(top.value);
        let base = store[top.index].clone();
        for d in 0..base.len() {
            let mut next = base.clone();
            next[d] += 1;
            if seen.insert(next.clone()) {
                heap.push(Candidate {
                    value: value_of(&next),
                    index: store.len(),
                });
                store.push(next);
            }
        }
    }
    Ok(out)
}

/// `c₀ M^{-2k-1}`: asymptotic tail of the Matérn `k + 1/2` spectrum.
pub fn matern_tail_bound(order: u32, m: usize, c0: f64) -> f64 {
    c0 * (m.max(1) as f64).powi(-(2 * order as i32 + 1))
}

/// Asymptotic tail for Matérn `k + 1/2` kernels on an interval, optionally
/// with the `log(M)^{2(D−1)(k+1)}` factor of the product kernel in `D`
/// dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternTail {
    pub order: u32,
    pub c0: f64,
    pub dim: usize,
    pub with_log: bool,
}

impl MaternTail {
    pub fn tail(&self, m: usize) -> f64 {
        let base = matern_tail_bound(self.order, m, self.c0);
        if self.with_log && self.dim > 1 {
            let m = m.max(2) as f64;
            base * m.ln().powi(2 * (self.dim as i32 - 1) * (self.order as i32 + 1))
        } else {
            base
        }
    }

    /// Decay profile `c₀ (2k+1) m^{-2k-2}`, the derivative of the tail.
    pub fn eigenvalue(&self, m: usize) -> f64 {
        let k = self.order as i32;
        self.c0 * (2 * k + 1) as f64 * (m.max(1) as f64).powi(-(2 * k + 2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Exact,
    AsymptoticBound,
}

/// Evaluator of `λ_m` and `Σ_{m>M} λ_m` for an operator spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumTail {
    SeGaussian(SeGaussianSpectrum),
    Matern(MaternTail),
    /// Finite nonincreasing list, e.g. the eigenvalues of a Gram matrix.
    Tabulated { eigenvalues: Vec<f64>, suffix: Vec<f64> },
}

impl SpectrumTail {
    pub fn tabulated(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        for v in &mut eigenvalues {
            *v = v.max(0.0);
        }
        let mut suffix = vec![0.0; eigenvalues.len() + 1];
        for i in (0..eigenvalues.len()).rev() {
            suffix[i] = suffix[i + 1] + eigenvalues[i];
        }
        Self::Tabulated {
            eigenvalues,
            suffix,
        }
    }

    pub fn validity(&self) -> Validity {
        match self {
            Self::Matern(_) => Validity::AsymptoticBound,
            _ => Validity::Exact,
        }
    }

    /// `λ_m`, indexed from 1.
    pub fn eigenvalue(&self, m: usize) -> f64 {
        match self {
            Self::SeGaussian(s) => s.eigenvalue(m),
            Self::Matern(t) => t.eigenvalue(m),
            Self::Tabulated { eigenvalues, .. } => {
                eigenvalues.get(m.wrapping_sub(1)).copied().unwrap_or(0.0)
            }
        }
    }

    /// `Σ_{m>M} λ_m`.
    pub fn tail(&self, m: usize) -> f64 {
        match self {
            Self::SeGaussian(s) => s.tail(m),
            Self::Matern(t) => t.tail(m),
            Self::Tabulated { suffix, .. } => suffix.get(m).copied().unwrap_or(0.0),
        }
    }
}
