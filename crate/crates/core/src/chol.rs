//! Dense Cholesky factors with the O(M²) edit operations needed by the
//! k-DPP exchange chain: rank-one update, deletion of an index and
//! appending a new index.
//!
//! Large factorizations use a blocked right-looking variant so that the
//! trailing updates go through matrix-matrix products.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative jitter levels tried by [`LowerFactor::factor_default`], scaled by
/// the mean of the diagonal.
pub const DEFAULT_JITTER_LEVELS: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Residual variances below `APPEND_FLOOR * k_self` reject an append.
pub const APPEND_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;
const BLOCK: usize = 64;

/// Lower-triangular `L` with `L Lᵀ = A + jitter_used · I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    l: DMatrix<f64>,
    jitter_used: f64,
}

impl LowerFactor {
    /// Factors `a`, trying each absolute jitter level in order.
    pub fn factor(a: &DMatrix<f64>, jitter_schedule: &[f64]) -> Result<Self> {
        check_square_symmetric(a)?;
        let zero = [0.0];
        let schedule = if jitter_schedule.is_empty() {
            &zero[..]
        } else {
            jitter_schedule
        };
        for &jitter in schedule {
            let mut work = a.clone();
            if jitter > 0.0 {
                for i in 0..work.nrows() {
                    work[(i, i)] += jitter;
                }
            }
            if cholesky_in_place(&mut work) {
                return Ok(Self {
                    l: work,
                    jitter_used: jitter,
                });
            }
        }
        Err(Error::NotFactorizable {
            max_jitter: schedule.iter().cloned().fold(0.0, f64::max),
        })
    }

    /// Factors `a` with [`DEFAULT_JITTER_LEVELS`] scaled by `mean(diag(a))`.
    pub fn factor_default(a: &DMatrix<f64>) -> Result<Self> {
        Self::factor(a, &default_jitter_schedule(a))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            l: DMatrix::identity(n, n),
            jitter_used: 0.0,
        }
    }

    /// Wraps a matrix assumed to be lower triangular with positive diagonal.
    pub fn from_lower(l: DMatrix<f64>) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::DimensionMismatch {
                expected: l.nrows(),
                found: l.ncols(),
            });
        }
        if (0..l.nrows()).any(|i| !(l[(i, i)] > 0.0)) {
            return Err(Error::InvalidInput(
                "factor diagonal must be strictly positive".into(),
            ));
        }
        Ok(Self {
            l: l.lower_triangle(),
            jitter_used: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.l
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    /// `log det(L Lᵀ) = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Factor of `L Lᵀ + v vᵀ`.
    pub fn rank_one_update(&self, v: &DVector<f64>) -> Result<Self> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        let mut out = self.clone();
        let mut work = v.clone();
        update_trailing(&mut out.l, 0, work.as_mut_slice());
        Ok(out)
    }

    /// Factor of the source matrix with row and column `index` deleted.
    ///
    /// The leading block is kept, the trailing block absorbs the deleted
    /// column through a rank-one update.
    pub fn remove_index(&self, index: usize) -> Result<Self> {
        let n = self.dim();
        if index >= n {
            return Err(Error::IndexOutOfRange { index, dim: n });
        }
        if n < 2 {
            return Err(Error::InvalidInput(
                "cannot remove an index from a 1x1 factor".into(),
            ));
        }
        let l = &self.l;
        let mut out = DMatrix::zeros(n - 1, n - 1);
        for j in 0..n - 1 {
            let sj = if j < index { j } else { j + 1 };
            for i in j..n - 1 {
                let si = if i < index { i } else { i + 1 };
                out[(i, j)] = l[(si, sj)];
            }
        }
        if index < n - 1 {
            let mut spike: Vec<f64> = (index + 1..n).map(|i| l[(i, index)]).collect();
            update_trailing_from(&mut out, index, &mut spike);
        }
        Ok(Self {
            l: out,
            jitter_used: self.jitter_used,
        })
    }

    /// Factor extended by one index with cross-covariances `k_cross` and
    /// variance `k_self`: new last row `(cᵀ, d)` with `c = L⁻¹ k_cross`,
    /// `d² = k_self − cᵀc`.
    pub fn append_index(&self, k_cross: &DVector<f64>, k_self: f64) -> Result<Self> {
        let n = self.dim();
        if k_cross.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: k_cross.len(),
            });
        }
        if !(k_self > 0.0) {
            return Err(Error::NotPositiveDefinite {
                residual: k_self,
                floor: 0.0,
            });
        }
        let c = self.solve_lower(k_cross);
        let residual = k_self - c.norm_squared();
        let floor = APPEND_FLOOR * k_self;
        if !(residual > floor) {
            return Err(Error::NotPositiveDefinite { residual, floor });
        }
        let mut l = self.l.clone().resize(n + 1, n + 1, 0.0);
        for j in 0..n {
            l[(n, j)] = c[j];
        }
        l[(n, n)] = residual.sqrt();
        Ok(Self {
            l,
            jitter_used: self.jitter_used,
        })
    }

    /// `L⁻¹ b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_substitute(&self.l, x.as_mut_slice());
        x
    }

    /// `L⁻ᵀ b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        backward_substitute_transposed(&self.l, x.as_mut_slice());
        x
    }

    /// `(L Lᵀ)⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        forward_substitute(&self.l, x.as_mut_slice());
        backward_substitute_transposed(&self.l, x.as_mut_slice());
        x
    }

    /// `L⁻¹ B`, column by column.
    pub fn solve_lower_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            forward_substitute(&self.l, col.as_mut_slice());
        }
        x
    }

    /// `L⁻ᵀ B`.
    pub fn solve_upper_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            backward_substitute_transposed(&self.l, col.as_mut_slice());
        }
        x
    }

    /// `(L Lᵀ)⁻¹ B`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            forward_substitute(&self.l, col.as_mut_slice());
            backward_substitute_transposed(&self.l, col.as_mut_slice());
        }
        x
    }
}

pub fn default_jitter_schedule(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows().max(1) as f64;
    let mean_diag = (a.diagonal().sum() / n).abs();
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    DEFAULT_JITTER_LEVELS.iter().map(|j| j * scale).collect()
}

fn check_square_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let max_abs = a.amax();
    let tolerance = SYMMETRY_TOL * max_abs;
    let n = a.nrows();
    let mut deviation: f64 = 0.0;
    for j in 0..n {
        for i in j + 1..n {
            deviation = deviation.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if deviation > tolerance {
        return Err(Error::AsymmetricInput {
            deviation,
            tolerance,
        });
    }
    Ok(())
}

/// In-place lower Cholesky; reads only the lower triangle, zeroes the upper.
/// Returns false when a pivot is not strictly positive.
pub(crate) fn cholesky_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    let mut k = 0;
    while k < n {
        let b = BLOCK.min(n - k);
        if !factor_diagonal_block(a, k, b) {
            return false;
        }
        let rest = n - k - b;
        if rest > 0 {
            // Panel: X Lkkᵀ = A21, solved column by column.
            for j in 0..b {
                for p in 0..j {
                    let f = a[(k + j, k + p)];
                    if f != 0.0 {
                        for i in k + b..n {
                            let v = a[(i, k + p)];
                            a[(i, k + j)] -= f * v;
                        }
                    }
                }
                let d = a[(k + j, k + j)];
                for i in k + b..n {
                    a[(i, k + j)] /= d;
                }
            }
            let panel = a.view((k + b, k), (rest, b)).clone_owned();
            let mut jb = 0;
            while jb < rest {
                let w = BLOCK.min(rest - jb);
                let rows = panel.rows(jb, rest - jb);
                let cols_t = panel.rows(jb, w).transpose();
                let mut target = a.view_mut((k + b + jb, k + b + jb), (rest - jb, w));
                target.gemm(-1.0, &rows, &cols_t, 1.0);
                jb += w;
            }
        }
        k += b;
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    true
}

fn factor_diagonal_block(a: &mut DMatrix<f64>, k: usize, b: usize) -> bool {
    for j in k..k + b {
        let mut d = a[(j, j)];
        for p in k..j {
            d -= a[(j, p)] * a[(j, p)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..k + b {
            let mut s = a[(i, j)];
            for p in k..j {
                s -= a[(i, p)] * a[(j, p)];
            }
            a[(i, j)] = s / d;
        }
    }
    true
}

/// Rank-one update of the whole factor, `x` is consumed.
fn update_trailing(l: &mut DMatrix<f64>, start: usize, x: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(x.len(), n - start);
    for k in start..n {
        let xk = x[k - start];
        if xk == 0.0 {
            continue;
        }
        let lkk = l[(k, k)];
        let r = lkk.hypot(xk);
        let c = r / lkk;
        let s = xk / lkk;
        l[(k, k)] = r;
        for i in k + 1..n {
            let lik = (l[(i, k)] + s * x[i - start]) / c;
            x[i - start] = c * x[i - start] - s * lik;
            l[(i, k)] = lik;
        }
    }
}

/// Rank-one update of the trailing block starting at `start`.
fn update_trailing_from(l: &mut DMatrix<f64>, start: usize, x: &mut [f64]) {
    update_trailing(l, start, x)
}

fn forward_substitute(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    // Column-oriented: contiguous access into column-major storage.
    for j in 0..n {
        let xj = x[j] / l[(j, j)];
        x[j] = xj;
        if xj != 0.0 {
            let col = l.column(j);
            let col = col.as_slice();
            for i in j + 1..n {
                x[i] -= col[i] * xj;
            }
        }
    }
}

fn backward_substitute_transposed(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = l.nrows();
    for j in (0..n).rev() {
        let col = l.column(j);
        let col = col.as_slice();
        let mut s = x[j];
        for i in j + 1..n {
            s -= col[i] * x[i];
        }
        x[j] = s / col[j];
    }
}
