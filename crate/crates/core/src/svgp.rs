//! Sparse variational GP regression: feature operators, the collapsed
//! evidence lower bound, upper bounds on the marginal likelihood, the exact
//! KL gap and the variational predictive.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chol::{default_jitter_schedule, LowerFactor};
use crate::error::{Error, Result};
use crate::gp_exact::{Dataset, NoiseModel, LN_2PI};
use crate::kernels::{KernelSpec, NystromSpectrum};

/// Negative values of `t` or the KL above `-AUDIT · scale` are clamped to
/// zero; anything lower is reported as an inconsistency.
pub const AUDIT: f64 = 1e-8;
pub const DEFAULT_DENSE_LIMIT: usize = 5000;
pub const DEFAULT_POWER_TOL: f64 = 1e-6;
const ORTHONORMAL_TOL: f64 = 1e-8;
const VARIANCE_FLOOR: f64 = -1e-10;
/// Largest negative Schur complement `k(x,x) − ‖v_x‖²`, relative to the
/// kernel variance, accepted before moving to the next jitter level.
const SCHUR_FLOOR: f64 = 1e-10;

/// Orthonormal functions `φ_m` that can be evaluated at arbitrary inputs.
pub trait EigenBasis: fmt::Debug + Send + Sync {
    /// Input dimension.
    fn dim(&self) -> usize;
    /// Number of functions.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// `n × len` matrix of `φ_m(x_i)`.
    fn eval(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl EigenBasis for NystromSpectrum {
    fn dim(&self) -> usize {
        self.kernel().dim()
    }

    fn len(&self) -> usize {
        NystromSpectrum::len(self)
    }

    fn eval(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.eigenfunctions_at(x)
    }
}

#[derive(Debug, Clone)]
pub enum InducingSet {
    /// Inducing inputs, one per row.
    Points(DMatrix<f64>),
    /// Leading eigenpairs of `K_ff` on `inputs`; `vectors` is `N × M`.
    EigenvectorFeatures {
        eigenvalues: Vec<f64>,
        vectors: DMatrix<f64>,
        inputs: DMatrix<f64>,
    },
    /// Operator eigenvalues with their eigenfunctions.
    EigenfunctionFeatures {
        eigenvalues: Vec<f64>,
        basis: Arc<dyn EigenBasis>,
    },
}

impl InducingSet {
    pub fn len(&self) -> usize {
        match self {
            Self::Points(z) => z.nrows(),
            Self::EigenvectorFeatures { eigenvalues, .. }
            | Self::EigenfunctionFeatures { eigenvalues, .. } => eigenvalues.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, kernel: &KernelSpec) -> Result<()> {
        match self {
            Self::Points(z) => {
                if z.nrows() > 0 {
                    kernel.check_inputs(z)?;
                }
                for j in 0..z.nrows() {
                    for i in j + 1..z.nrows() {
                        if z.row(i) == z.row(j) {
                            return Err(Error::DuplicateInducingPoint { first: j, second: i });
                        }
                    }
                }
            }
            Self::EigenvectorFeatures {
                eigenvalues,
                vectors,
                inputs,
            } => {
                kernel.check_inputs(inputs)?;
                check_eigenvalues(eigenvalues)?;
                if vectors.nrows() != inputs.nrows() || vectors.ncols() != eigenvalues.len() {
                    return Err(Error::DimensionMismatch {
                        expected: inputs.nrows(),
                        found: vectors.nrows(),
                    });
                }
                let m = eigenvalues.len();
                let dev = (vectors.transpose() * vectors - DMatrix::identity(m, m)).amax();
                if dev > ORTHONORMAL_TOL {
                    return Err(Error::InvalidInput(format!(
                        "eigenvector columns deviate from orthonormality by {dev:e}"
                    )));
                }
            }
            Self::EigenfunctionFeatures { eigenvalues, basis } => {
                check_eigenvalues(eigenvalues)?;
                if basis.dim() != kernel.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: kernel.dim(),
                        found: basis.dim(),
                    });
                }
                if basis.len() < eigenvalues.len() {
                    return Err(Error::DimensionMismatch {
                        expected: eigenvalues.len(),
                        found: basis.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// `K_uu`.
    pub fn kuu(&self, kernel: &KernelSpec) -> Result<DMatrix<f64>> {
        match self {
            Self::Points(z) if z.nrows() == 0 => Ok(DMatrix::zeros(0, 0)),
            Self::Points(z) => kernel.gram_sym(z),
            Self::EigenvectorFeatures { eigenvalues, .. }
            | Self::EigenfunctionFeatures { eigenvalues, .. } => {
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues)))
            }
        }
    }

    /// `cov(u, f(x))` for the rows of `x`, an `M × n` matrix.
    pub fn cross_cov(&self, kernel: &KernelSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        kernel.check_inputs(x)?;
        match self {
            Self::Points(z) if z.nrows() == 0 => Ok(DMatrix::zeros(0, x.nrows())),
            Self::Points(z) => kernel.gram(z, x),
            Self::EigenvectorFeatures {
                vectors, inputs, ..
            } => {
                // u_m = Σ_i w_im f(x_i)
                let k = kernel.gram(inputs, x)?;
                Ok(vectors.transpose() * k)
            }
            Self::EigenfunctionFeatures { eigenvalues, basis } => {
                let phi = basis.eval(x)?;
                Ok(DMatrix::from_fn(eigenvalues.len(), x.nrows(), |m, i| {
                    eigenvalues[m] * phi[(i, m)]
                }))
            }
        }
    }

    /// Factor of `K_uu` with a fixed diagonal jitter for inducing points.
    fn kuu_factor(&self, kuu: &DMatrix<f64>, jitter: f64) -> Result<LowerFactor> {
        match self {
            Self::Points(z) if z.nrows() == 0 => Ok(LowerFactor::identity(0)),
            Self::Points(_) => LowerFactor::factor(kuu, &[jitter]),
            Self::EigenvectorFeatures { eigenvalues, .. }
            | Self::EigenfunctionFeatures { eigenvalues, .. } => LowerFactor::from_lower(
                DMatrix::from_diagonal(&DVector::from_iterator(
                    eigenvalues.len(),
                    eigenvalues.iter().map(|l| l.sqrt()),
                )),
            ),
        }
    }
}

fn check_eigenvalues(eigenvalues: &[f64]) -> Result<()> {
    if let Some(l) = eigenvalues.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "feature eigenvalues must be positive, got {l}"
        )));
    }
    Ok(())
}

/// `K_uu`, `K_uf` and the whitened cross-covariance `V = L_uu⁻¹ K_uf`,
/// so that `Q_ff = VᵀV`.
#[derive(Debug, Clone)]
pub struct FeatureOperators {
    pub kuu: DMatrix<f64>,
    pub kuf: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub kuu_factor: LowerFactor,
    /// `k(x_i, x_i)`.
    pub kff_diag: DVector<f64>,
}

impl FeatureOperators {
    pub fn m(&self) -> usize {
        self.kuu.nrows()
    }

    pub fn n(&self) -> usize {
        self.kff_diag.len()
    }

    pub fn jitter_used(&self) -> f64 {
        self.kuu_factor.jitter_used()
    }

    /// Dense `Q_ff`; oracle use only.
    pub fn q_ff(&self) -> DMatrix<f64> {
        self.v.transpose() * &self.v
    }

    /// `Tr(K_ff − Q_ff)`, clamped at zero within the audit threshold.
    pub fn trace_gap(&self) -> Result<f64> {
        let t = self.kff_diag.sum() - self.v.norm_squared();
        let scale = self.kff_diag.sum().max(f64::MIN_POSITIVE);
        clamp_audited("t", t, AUDIT * scale)
    }
}

fn clamp_audited(quantity: &'static str, value: f64, threshold: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -threshold {
        Ok(0.0)
    } else {
        Err(Error::NumericalInconsistency { quantity, value })
    }
}

pub fn feature_operators(
    inducing: &InducingSet,
    kernel: &KernelSpec,
    x: &DMatrix<f64>,
) -> Result<FeatureOperators> {
    kernel.validate()?;
    kernel.check_inputs(x)?;
    inducing.validate(kernel)?;
    if let InducingSet::EigenvectorFeatures { inputs, .. } = inducing {
        if inputs.shape() != x.shape() || inputs != x {
            return Err(Error::InvalidInput(
                "eigenvector features belong to a different input set".into(),
            ));
        }
    }
    let kuu = inducing.kuu(kernel)?;
    let kuf = match inducing {
        InducingSet::EigenvectorFeatures {
            eigenvalues,
            vectors,
            ..
        } => DMatrix::from_fn(eigenvalues.len(), x.nrows(), |m, i| {
            eigenvalues[m] * vectors[(i, m)]
        }),
        _ => inducing.cross_cov(kernel, x)?,
    };
    let (kuu_factor, v) = match inducing {
        InducingSet::Points(z) if z.nrows() > 0 => whiten_points(&kuu, &kuf, kernel.diag_value())?,
        InducingSet::Points(_) => (LowerFactor::identity(0), DMatrix::zeros(0, x.nrows())),
        InducingSet::EigenvectorFeatures {
            eigenvalues,
            vectors,
            ..
        } => (
            inducing.kuu_factor(&kuu, 0.0)?,
            DMatrix::from_fn(eigenvalues.len(), x.nrows(), |m, i| {
                eigenvalues[m].sqrt() * vectors[(i, m)]
            }),
        ),
        InducingSet::EigenfunctionFeatures { eigenvalues, .. } => (
            inducing.kuu_factor(&kuu, 0.0)?,
            DMatrix::from_fn(eigenvalues.len(), x.nrows(), |m, i| {
                kuf[(m, i)] / eigenvalues[m].sqrt()
            }),
        ),
    };
    Ok(FeatureOperators {
        kuu,
        kuf,
        v,
        kuu_factor,
        kff_diag: DVector::from_element(x.nrows(), kernel.diag_value()),
    })
}

/// Factors `K_uu` along the default jitter schedule, moving to a larger
/// jitter while round-off makes some `k(x,x) − ‖L⁻¹k_x‖²` clearly negative.
fn whiten_points(kuu: &DMatrix<f64>, kuf: &DMatrix<f64>, variance: f64) -> Result<(LowerFactor, DMatrix<f64>)> {
    let schedule = default_jitter_schedule(kuu);
    let mut start = 0;
    loop {
        let factor = LowerFactor::factor(kuu, &schedule[start..])?;
        let v = factor.solve_lower_matrix(kuf);
        let worst = v
            .column_iter()
            .map(|c| variance - c.norm_squared())
            .fold(f64::INFINITY, f64::min);
        let level = schedule
            .iter()
            .position(|j| *j == factor.jitter_used())
            .unwrap_or(schedule.len() - 1);
        if worst >= -SCHUR_FLOOR * variance || level + 1 >= schedule.len() {
            return Ok((factor, v));
        }
        start = level + 1;
    }
}

/// `Tr(K_ff − Q_ff)`.
pub fn trace_gap(ops: &FeatureOperators) -> Result<f64> {
    ops.trace_gap()
}

/// Quantities of `Q_n = VᵀV + s I` that only need `VVᵀ` and `Vy`, so
/// that every noise shift costs O(M³).
#[derive(Debug, Clone)]
pub struct Woodbury {
    vvt: DMatrix<f64>,
    vy: DVector<f64>,
    yy: f64,
    n: usize,
}

impl Woodbury {
    pub fn new(ops: &FeatureOperators, y: &DVector<f64>) -> Result<Self> {
        if y.len() != ops.n() {
            return Err(Error::DimensionMismatch {
                expected: ops.n(),
                found: y.len(),
            });
        }
        Ok(Self {
            vvt: &ops.v * ops.v.transpose(),
            vy: &ops.v * y,
            yy: y.norm_squared(),
            n: y.len(),
        })
    }

    /// Factor of `I + VVᵀ/s`.
    fn b_factor(&self, s: f64) -> Result<LowerFactor> {
        let m = self.vvt.nrows();
        if m == 0 {
            return Ok(LowerFactor::identity(0));
        }
        let b = DMatrix::identity(m, m) + &self.vvt / s;
        LowerFactor::factor(&b, &[0.0])
    }

    /// `(yᵀ(VᵀV + sI)⁻¹y, log|VᵀV + sI|)`.
    pub fn quad_logdet(&self, s: f64) -> Result<(f64, f64)> {
        let lb = self.b_factor(s)?;
        let c = lb.solve_lower(&self.vy);
        let quad = self.yy / s - c.norm_squared() / (s * s);
        let logdet = self.n as f64 * s.ln() + lb.log_det();
        Ok((quad, logdet))
    }
}

/// Titsias bound `−½yᵀQ_n⁻¹y − ½log|Q_n| − (N/2)log2π − t/(2σ²)`.
pub fn elbo(ops: &FeatureOperators, y: &DVector<f64>, noise: NoiseModel) -> Result<f64> {
    let wb = Woodbury::new(ops, y)?;
    elbo_with(&wb, ops.trace_gap()?, noise)
}

fn elbo_with(wb: &Woodbury, t: f64, noise: NoiseModel) -> Result<f64> {
    let s2 = noise.variance;
    let (quad, logdet) = wb.quad_logdet(s2)?;
    Ok(-0.5 * quad - 0.5 * logdet - 0.5 * wb.n as f64 * LN_2PI - t / (2.0 * s2))
}

/// `−½yᵀ(Q_n + shift·I)⁻¹y − ½log|Q_n| − (N/2)log2π`.
fn shifted_upper(wb: &Woodbury, shift: f64, noise: NoiseModel) -> Result<f64> {
    let s2 = noise.variance;
    let (quad, _) = wb.quad_logdet(s2 + shift)?;
    let (_, logdet) = wb.quad_logdet(s2)?;
    Ok(-0.5 * quad - 0.5 * logdet - 0.5 * wb.n as f64 * LN_2PI)
}

/// Upper bound with the trace gap `t` added to the noise in the quadratic term.
pub fn upper_bound(ops: &FeatureOperators, y: &DVector<f64>, noise: NoiseModel, t: f64) -> Result<f64> {
    shifted_upper(&Woodbury::new(ops, y)?, t, noise)
}

/// Upper bound with `λ̃_max` in place of `t`.
pub fn refined_upper_bound(
    ops: &FeatureOperators,
    y: &DVector<f64>,
    noise: NoiseModel,
    lambda_max: f64,
) -> Result<f64> {
    shifted_upper(&Woodbury::new(ops, y)?, lambda_max, noise)
}

/// Optimal `q(u) = N(μ, Σ)` with its ELBO.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSolution {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub elbo: f64,
    /// Diagonal jitter that was added to `K_uu`.
    pub jitter: f64,
}

/// Closed-form optimum: `Σ = L B⁻¹ Lᵀ`, `μ = σ⁻² L B⁻¹ V y` with
/// `K_uu = LLᵀ` and `B = I + VVᵀ/σ²`.
pub fn optimal_q(ops: &FeatureOperators, y: &DVector<f64>, noise: NoiseModel) -> Result<VariationalSolution> {
    let wb = Woodbury::new(ops, y)?;
    let s2 = noise.variance;
    let lb = wb.b_factor(s2)?;
    let l = ops.kuu_factor.l();
    // L L_B⁻ᵀ, so that Σ = G Gᵀ is symmetric by construction.
    let g = lb.solve_lower_matrix(&l.transpose()).transpose();
    let sigma = &g * g.transpose();
    let mu = l * lb.solve(&wb.vy) / s2;
    Ok(VariationalSolution {
        mu,
        sigma,
        elbo: elbo_with(&wb, ops.trace_gap()?, noise)?,
        jitter: ops.jitter_used(),
    })
}

/// Uncollapsed bound `Σ_i E_q[log N(y_i | f_i, σ²)] − KL(q(u) ‖ p(u))` at
/// arbitrary `(μ, Σ)`.
pub fn hensman_elbo(
    ops: &FeatureOperators,
    y: &DVector<f64>,
    noise: NoiseModel,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    let m = ops.m();
    if mu.len() != m || sigma.shape() != (m, m) || y.len() != ops.n() {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: mu.len(),
        });
    }
    let s2 = noise.variance;
    // A = K_uu⁻¹ K_uf = L⁻ᵀ V
    let a = ops.kuu_factor.solve_upper_matrix(&ops.v);
    let mean = a.transpose() * mu;
    let sa = sigma * &a;
    let mut expected = 0.0;
    for i in 0..ops.n() {
        let var = ops.kff_diag[i] - ops.v.column(i).norm_squared() + a.column(i).dot(&sa.column(i));
        expected += -0.5 * (LN_2PI + s2.ln()) - ((y[i] - mean[i]).powi(2) + var) / (2.0 * s2);
    }
    let kl = gaussian_kl(mu, sigma, &DVector::zeros(m), &ops.kuu)?;
    Ok(expected - kl)
}

/// `KL(N(m1, S1) ‖ N(m2, S2))`.
pub fn gaussian_kl(m1: &DVector<f64>, s1: &DMatrix<f64>, m2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let k = m1.len();
    if m2.len() != k || s1.shape() != (k, k) || s2.shape() != (k, k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: m2.len(),
        });
    }
    if k == 0 {
        return Ok(0.0);
    }
    let f1 = LowerFactor::factor_default(s1)?;
    let f2 = LowerFactor::factor_default(s2)?;
    // tr(S2⁻¹S1) = ‖L2⁻¹ L1‖²_F
    let trace = f2.solve_lower_matrix(f1.l()).norm_squared();
    let maha = f2.solve_lower(&(m2 - m1)).norm_squared();
    let kl = 0.5 * (trace + maha - k as f64 + f2.log_det() - f1.log_det());
    Ok(kl.max(0.0))
}

/// Dense `K̃ = K_ff − Q_ff`; oracle and desk-scale use.
pub fn gap_matrix(kernel: &KernelSpec, x: &DMatrix<f64>, ops: &FeatureOperators) -> Result<DMatrix<f64>> {
    let mut k = kernel.gram_sym(x)?;
    if ops.m() > 0 {
        let vt = ops.v.transpose();
        k.gemm(-1.0, &vt, &ops.v, 1.0);
    }
    symmetrize(&mut k);
    Ok(k)
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Largest eigenvalue of `K_ff − Q_ff` by power iteration.
pub fn lambda_max_gap(kernel: &KernelSpec, x: &DMatrix<f64>, ops: &FeatureOperators, tol: f64) -> Result<f64> {
    let gap = gap_matrix(kernel, x, ops)?;
    let t = ops.trace_gap()?;
    let lambda = lambda_max_of(&gap, tol)?;
    // The largest eigenvalue never exceeds the trace of a PSD matrix.
    Ok(if lambda > t && lambda <= t * (1.0 + tol) + f64::MIN_POSITIVE { t } else { lambda })
}

/// Largest eigenvalue of a symmetric PSD matrix, to relative tolerance
/// `tol`, from a fixed pseudo-random start. Stops once the residual
/// `‖Ax − ρx‖` falls below `tol · ρ`. A nearly degenerate top of the
/// spectrum can stall the iteration, in which case the answer comes from a
/// dense symmetric eigensolve.
pub fn lambda_max_of(a: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z.abs() + 0.1
    });
    x /= x.norm();
    let max_iter = (10 * n).max(200);
    let mut ax = DVector::zeros(n);
    for _ in 0..max_iter {
        ax.gemv(1.0, a, &x, 0.0);
        let rho = x.dot(&ax);
        let norm = ax.norm();
        // Numerically zero operator: nothing left to resolve.
        if norm <= 1e-14 * scale {
            return Ok(rho.max(0.0));
        }
        let resid = (&ax - &x * rho).norm();
        if resid <= tol * rho.abs() {
            return Ok(rho.max(0.0));
        }
        x.copy_from(&ax);
        x /= norm;
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0).ok_or(Error::NoConvergence {
        iterations: max_iter,
    })?;
    Ok(eig.eigenvalues.max().max(0.0))
}

/// Exact `KL(q ‖ p̂) = L − ELBO` for fixed `(X, Z)` and any `y`, computed
/// without subtracting the two bounds. With `W = Q_n^{-1/2}` and
/// `A = W K̃ W`,
/// `2·KL = (t/σ² − tr A) + (tr A − log|I + A|) + zᵀ(I + A)⁻¹A z`, `z = Wy`.
#[derive(Debug, Clone)]
pub struct DenseKl {
    sigma: f64,
    /// `W = (I + P diag(h) Pᵀ)/σ`.
    p: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    factor: LowerFactor,
    constant: f64,
}

impl DenseKl {
    pub fn new(
        kernel: &KernelSpec,
        x: &DMatrix<f64>,
        noise: NoiseModel,
        ops: &FeatureOperators,
        dense_limit: usize,
    ) -> Result<Self> {
        let n = x.nrows();
        if n > dense_limit {
            return Err(Error::DenseLimitExceeded { n, limit: dense_limit });
        }
        let gap = gap_matrix(kernel, x, ops)?;
        Self::from_gap(gap, noise, ops)
    }

    /// Consumes a precomputed `K̃`.
    pub fn from_gap(gap: DMatrix<f64>, noise: NoiseModel, ops: &FeatureOperators) -> Result<Self> {
        let n = gap.nrows();
        let m = ops.m();
        let s2 = noise.variance;
        let sigma = s2.sqrt();
        let u = &ops.v / sigma;
        let (r, s_sq) = if m > 0 {
            let eig = SymmetricEigen::new(&u * u.transpose());
            let s: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
            (eig.eigenvectors, DVector::from_vec(s))
        } else {
            (DMatrix::zeros(0, 0), DVector::zeros(0))
        };
        // h(x) = ((1+x)^{-1/2} − 1)/x in a cancellation-free form.
        let h = s_sq.map(|x| {
            let q = (1.0 + x).sqrt();
            -1.0 / (q * (1.0 + q))
        });
        let p = u.transpose() * &r;
        let kp = &gap * &p;
        let smat = p.transpose() * &kp;
        // σ²A = K̃ + F Pᵀ + P Fᵀ with F = (K̃P + ½ P D S) D.
        let mut f = &kp + (&p * DMatrix::from_diagonal(&h) * &smat) * 0.5;
        for (c, hc) in h.iter().enumerate() {
            f.column_mut(c).scale_mut(*hc);
        }
        let mut a = gap;
        if m > 0 {
            let pt = p.transpose();
            let ft = f.transpose();
            a.gemm(1.0, &f, &pt, 1.0);
            a.gemm(1.0, &p, &ft, 1.0);
        }
        a /= s2;
        symmetrize(&mut a);

        // t/σ² − tr A = σ⁻² Σ_k S_kk / (1 + s_k²)
        let term1: f64 = (0..m).map(|k| smat[(k, k)] / (1.0 + s_sq[k])).sum::<f64>() / s2;
        let trace_a = a.trace();
        let mut ipa = a.clone();
        for i in 0..n {
            ipa[(i, i)] += 1.0;
        }
        let factor = LowerFactor::factor(&ipa, &[0.0])?;
        let logdet: f64 = 2.0 * factor.l().diagonal().iter().map(|d| (d - 1.0).ln_1p()).sum::<f64>();
        let constant = 0.5 * (term1 + trace_a - logdet);
        Ok(Self {
            sigma,
            p,
            h,
            a,
            factor,
            constant,
        })
    }

    /// Part of the KL that does not depend on `y`.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn kl(&self, y: &DVector<f64>) -> Result<f64> {
        if y.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.a.nrows(),
                found: y.len(),
            });
        }
        let pty = self.p.transpose() * y;
        let z = (y + &self.p * pty.component_mul(&self.h)) / self.sigma;
        let s = self.factor.solve(&z);
        let az = &self.a * &z;
        let kl = self.constant + 0.5 * s.dot(&az);
        clamp_audited("kl", kl, AUDIT * self.constant.abs().max(1.0))
    }
}

/// Exact KL gap between the collapsed bound and the log marginal likelihood.
pub fn kl_exact(data: &Dataset, kernel: &KernelSpec, noise: NoiseModel, ops: &FeatureOperators) -> Result<f64> {
    kl_exact_with_limit(data, kernel, noise, ops, DEFAULT_DENSE_LIMIT)
}

pub fn kl_exact_with_limit(
    data: &Dataset,
    kernel: &KernelSpec,
    noise: NoiseModel,
    ops: &FeatureOperators,
    dense_limit: usize,
) -> Result<f64> {
    data.validate()?;
    DenseKl::new(kernel, &data.x, noise, ops, dense_limit)?.kl(&data.y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
}

/// Variational predictive `k_{·u}K_uu⁻¹μ`,
/// `k_{··} + k_{·u}K_uu⁻¹(Σ − K_uu)K_uu⁻¹k_{u·}` at the rows of `x_star`.
pub fn predict(
    sol: &VariationalSolution,
    inducing: &InducingSet,
    kernel: &KernelSpec,
    x_star: &DMatrix<f64>,
) -> Result<Prediction> {
    inducing.validate(kernel)?;
    let kuu = inducing.kuu(kernel)?;
    let factor = inducing.kuu_factor(&kuu, sol.jitter)?;
    let m = kuu.nrows();
    if sol.mu.len() != m || sol.sigma.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: sol.mu.len(),
        });
    }
    let kus = inducing.cross_cov(kernel, x_star)?;
    let a = factor.solve_lower_matrix(&kus);
    let b = factor.solve_upper_matrix(&a);
    let mean = b.transpose() * &sol.mu;
    let sb = &sol.sigma * &b;
    let mut variance = DVector::zeros(x_star.nrows());
    for i in 0..x_star.nrows() {
        let v = kernel.diag_value() - a.column(i).norm_squared() + b.column(i).dot(&sb.column(i));
        if v < VARIANCE_FLOOR * kernel.diag_value() {
            return Err(Error::NegativeVariance(v));
        }
        variance[i] = v.max(0.0);
    }
    Ok(Prediction { mean, variance })
}

#[cfg(test)]
mod tests;
