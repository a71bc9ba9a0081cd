//! Every computed quantity for one `(X, y, inducing set)` instance.

use crate::bounds::{lemma1, lemma2_interval, prop1_pointwise, thm1, thm2, thm3, thm4, AprioriInputs, Prop1};
use crate::error::Result;
use crate::gp_exact::{log_marginal_likelihood, Dataset, NoiseModel};
use crate::kernels::KernelSpec;
use crate::svgp::{
    elbo, gap_matrix, lambda_max_of, refined_upper_bound, upper_bound, DenseKl, FeatureOperators,
    DEFAULT_DENSE_LIMIT, DEFAULT_POWER_TOL,
};

/// Absolute slack, scaled by `max(1, |elbo|)`, allowed in invariant checks.
pub const INVARIANT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub dense_limit: usize,
    pub power_tol: f64,
    /// Also evaluate the log marginal likelihood by dense Cholesky.
    pub log_marginal: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            dense_limit: DEFAULT_DENSE_LIMIT,
            power_tol: DEFAULT_POWER_TOL,
            log_marginal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub t: f64,
    pub lambda_max_tilde: f64,
    pub elbo: f64,
    pub upper: f64,
    pub upper_refined: f64,
    pub log_marginal: Option<f64>,
    pub kl_exact: Option<f64>,
    pub norm_y_sq: f64,
    pub jitter_used: f64,
    pub lemma1: f64,
    pub lemma1_loose: f64,
    pub lemma2_lo: f64,
    pub lemma2_hi: f64,
    pub thm1: Option<f64>,
    pub thm2: Option<f64>,
    pub thm3: Option<f64>,
    pub thm4: Option<f64>,
    /// `√ε` with `ε = 2·KL`: pointwise mean deviation in units of the
    /// exact posterior standard deviation.
    pub prop1_mean: Option<f64>,
    /// `√(3ε)`: the weaker mean bound and the half-width of the variance
    /// ratio interval.
    pub prop1_var: Option<f64>,
}

impl BoundReport {
    /// Bounds, `t`, `λ̃_max` and, when `N` is within the dense limit, the
    /// exact KL.
    pub fn compute(
        data: &Dataset,
        kernel: &KernelSpec,
        noise: NoiseModel,
        ops: &FeatureOperators,
        options: &ReportOptions,
    ) -> Result<Self> {
        data.validate()?;
        let y = &data.y;
        let s2 = noise.variance;
        let t = ops.trace_gap()?;
        let norm_y_sq = y.norm_squared();
        let lo = elbo(ops, y, noise)?;
        let up = upper_bound(ops, y, noise, t)?;
        let n = data.len();
        let (lambda, kl) = if n <= options.dense_limit {
            let gap = gap_matrix(kernel, &data.x, ops)?;
            let mut lambda = lambda_max_of(&gap, options.power_tol)?;
            // Near machine precision both sides are rounding noise; t is
            // always a valid stand-in for λ̃_max.
            let slack = t * options.power_tol + INVARIANT_TOL * kernel.variance;
            if lambda > t && lambda <= t + slack {
                lambda = t;
            }
            let kl = DenseKl::from_gap(gap, noise, ops)?.kl(y)?;
            (lambda, Some(kl))
        } else {
            // Without the dense gap only the trivial λ̃_max = t is available.
            (t, None)
        };
        let refined = refined_upper_bound(ops, y, noise, lambda)?;
        let l1 = lemma1(t, lambda, norm_y_sq, s2)?;
        let (l2_lo, l2_hi) = lemma2_interval(t, s2);
        let log_marginal = if options.log_marginal {
            Some(log_marginal_likelihood(data, kernel, noise)?)
        } else {
            None
        };
        let mut report = Self {
            n,
            m: ops.m(),
            t,
            lambda_max_tilde: lambda,
            elbo: lo,
            upper: up,
            upper_refined: refined,
            log_marginal,
            kl_exact: kl,
            norm_y_sq,
            jitter_used: ops.jitter_used(),
            lemma1: l1.tight,
            lemma1_loose: l1.loose,
            lemma2_lo: l2_lo,
            lemma2_hi: l2_hi,
            ..Default::default()
        };
        let kl_for_prop1 = kl.unwrap_or(l1.tight);
        if let Prop1::Applicable { epsilon, .. } = prop1_pointwise(1.0, kl_for_prop1)? {
            report.prop1_mean = Some(epsilon.sqrt());
            report.prop1_var = Some((3.0 * epsilon).sqrt());
        }
        Ok(report)
    }

    /// Fills the a priori theorem slots.
    pub fn with_apriori(mut self, inputs: &AprioriInputs) -> Result<Self> {
        self.thm1 = Some(thm1(inputs)?);
        self.thm2 = Some(thm2(inputs)?);
        self.thm3 = Some(thm3(inputs)?);
        self.thm4 = Some(thm4(inputs)?);
        Ok(self)
    }

    /// Names of the invariants this report breaks.
    pub fn violations(&self) -> Vec<&'static str> {
        let tol = INVARIANT_TOL * self.elbo.abs().max(1.0);
        let mut out = Vec::new();
        if !(self.t >= 0.0) {
            out.push("t_negative");
        }
        if !(self.lambda_max_tilde >= 0.0 && self.lambda_max_tilde <= self.t * (1.0 + 1e-8) + f64::MIN_POSITIVE) {
            out.push("lambda_max_outside_0_t");
        }
        if !(self.elbo <= self.upper_refined + tol) {
            out.push("elbo_above_refined");
        }
        if !(self.upper_refined <= self.upper + tol) {
            out.push("refined_above_upper");
        }
        if let Some(l) = self.log_marginal {
            if !(self.elbo <= l + tol) {
                out.push("elbo_above_log_marginal");
            }
            if !(l <= self.upper_refined + tol) {
                out.push("log_marginal_above_refined");
            }
        }
        if let Some(kl) = self.kl_exact {
            if !(kl >= 0.0) {
                out.push("kl_negative");
            }
            if !(kl <= self.lemma1 + tol) {
                out.push("kl_above_lemma1");
            }
            if !(self.lemma1 <= self.lemma1_loose * (1.0 + 1e-12) + tol) {
                out.push("lemma1_above_loose");
            }
        }
        out
    }
}
