//! A posteriori and a priori bounds on `KL(Q ‖ P̂)` and the inducing-count
//! schedules they imply.

use crate::error::{Error, Result};
use crate::kernels::{SeGaussianSpectrum, SpectrumTail};

/// Tight and loose forms of the a posteriori KL bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1 {
    pub tight: f64,
    pub loose: f64,
}

/// `tight = (t + λ̃‖y‖²/(σ² + λ̃)) / 2σ²`, `loose = t(1 + ‖y‖²/(σ² + t)) / 2σ²`.
pub fn lemma1(t: f64, lambda_max: f64, norm_y_sq: f64, noise_variance: f64) -> Result<Lemma1> {
    if lambda_max > t * (1.0 + 1e-8) + f64::MIN_POSITIVE || lambda_max < 0.0 {
        return Err(Error::OrderingViolation {
            lambda_max,
            trace: t,
        });
    }
    let s2 = noise_variance;
    let tight = (t + lambda_max * norm_y_sq / (s2 + lambda_max)) / (2.0 * s2);
    let loose = t / (2.0 * s2) * (1.0 + norm_y_sq / (s2 + t));
    Ok(Lemma1 { tight, loose })
}

/// Interval `[t/2σ², t/σ²]` for the KL averaged over prior draws of `y`.
pub fn lemma2_interval(t: f64, noise_variance: f64) -> (f64, f64) {
    let lo = t / (2.0 * noise_variance);
    (lo, 2.0 * lo)
}

/// Inputs shared by the a priori theorems. `tail_sum` is `Σ_{m>M} λ_m` of
/// the integral operator, so that `C = N · tail_sum`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriInputs {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub variance: f64,
    pub noise_variance: f64,
    pub norm_y_sq: f64,
    pub tail_sum: f64,
}

impl AprioriInputs {
    /// Fills `tail_sum` from a spectrum at the given `m`.
    pub fn with_spectrum(mut self, spectrum: &SpectrumTail) -> Self {
        self.tail_sum = spectrum.tail(self.m);
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfidence(self.delta));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::InvalidHyperparameter("noise variance must be positive".into()));
        }
        Ok(())
    }

    fn c(&self) -> f64 {
        self.n as f64 * self.tail_sum
    }

    fn output_factor(&self) -> f64 {
        1.0 + self.norm_y_sq / self.noise_variance
    }

    fn kdpp_numerator(&self) -> f64 {
        self.c() * (self.m as f64 + 1.0) + 2.0 * self.n as f64 * self.variance * self.epsilon
    }
}

/// Eigenfunction features, arbitrary `y`: `C/(2σ²δ) · (1 + ‖y‖²/σ²)`.
pub fn thm1(p: &AprioriInputs) -> Result<f64> {
    p.check()?;
    Ok(p.c() / (2.0 * p.noise_variance * p.delta) * p.output_factor())
}

/// Eigenfunction features, `y` from the prior: `C/(δσ²)`.
pub fn thm2(p: &AprioriInputs) -> Result<f64> {
    p.check()?;
    Ok(p.c() / (p.delta * p.noise_variance))
}

/// ε k-DPP inducing points, arbitrary `y`:
/// `(C(M+1) + 2Nvε)/(2σ²δ) · (1 + ‖y‖²/σ²)`.
pub fn thm3(p: &AprioriInputs) -> Result<f64> {
    p.check()?;
    Ok(p.kdpp_numerator() / (2.0 * p.noise_variance * p.delta) * p.output_factor())
}

/// ε k-DPP inducing points, `y` from the prior: `(C(M+1) + 2Nvε)/(δσ²)`.
pub fn thm4(p: &AprioriInputs) -> Result<f64> {
    p.check()?;
    Ok(p.kdpp_numerator() / (p.delta * p.noise_variance))
}

/// Bound on `E[t]` for an ε k-DPP selection:
/// `(M+1) Σ_{m>M} λ_m(K_ff) + 2Nvε`.
pub fn nystrom_trace_bound(matrix_eig_tail: f64, m: usize, n: usize, variance: f64, epsilon: f64) -> f64 {
    (m as f64 + 1.0) * matrix_eig_tail + 2.0 * n as f64 * variance * epsilon
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub gamma: f64,
    /// Decay exponent for the multi-dimensional schedule.
    pub gamma_prime: f64,
    pub delta: f64,
    /// Bound on `‖y‖²/N`.
    pub r: f64,
    /// Slack in the Matérn exponents.
    pub epsilon_prime: f64,
    pub variance: f64,
    pub noise_variance: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            gamma_prime: 4.0,
            delta: 0.1,
            r: 2.0,
            epsilon_prime: 0.1,
            variance: 1.0,
            noise_variance: 1.0,
        }
    }
}

impl ScheduleParams {
    fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfidence(self.delta));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("R", self.r),
            ("variance", self.variance),
            ("noise variance", self.noise_variance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidHyperparameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Schedule for a one-dimensional SE kernel with Gaussian inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeSchedule {
    pub m: usize,
    /// `M` before rounding up.
    pub m_real: f64,
    /// Prescribed `ε = δσ²/(vN^{γ+2})` for the k-DPP sampler.
    pub epsilon: f64,
    /// `D̃ = v√(2a)/(2√A σ² δ (1−B))`.
    pub d_tilde: f64,
    /// Guaranteed bound `N^{−γ}(2R/σ² + 2/N)`.
    pub kl_bound: f64,
}

/// `M = ⌈((3+γ) log N + log D̃) / log(1/B)⌉`.
pub fn m_schedule_se_1d(n: usize, params: &ScheduleParams, spectrum: &SeGaussianSpectrum) -> Result<SeSchedule> {
    params.check()?;
    let b = spectrum.ratio();
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidHyperparameter(format!("geometric ratio must lie in (0, 1), got {b}")));
    }
    let nf = n as f64;
    let s2 = params.noise_variance;
    let d_tilde = params.variance * (2.0 * spectrum.a).sqrt()
        / (2.0 * spectrum.big_a.sqrt() * s2 * params.delta * (1.0 - b));
    let m_real = ((3.0 + params.gamma) * nf.ln() + d_tilde.ln()) / (1.0 / b).ln();
    Ok(SeSchedule {
        m: ceil_count(m_real),
        m_real,
        epsilon: params.delta * s2 / (params.variance * nf.powf(params.gamma + 2.0)),
        d_tilde,
        kl_bound: nf.powf(-params.gamma) * (2.0 * params.r / s2 + 2.0 / nf),
    })
}

fn ceil_count(x: f64) -> usize {
    if x.is_finite() && x > 0.0 {
        x.ceil() as usize
    } else {
        0
    }
}

/// Schedule for an isotropic SE kernel with Gaussian inputs in `D` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeDdSchedule {
    /// `M = ⌈(log(N^{γ'} (2a/A)^{D/2} D² / α) / α)^D⌉` with `α = −log B`.
    pub m: usize,
    pub m_real: f64,
    /// Features used for inference, `M + D − 1`.
    pub features: usize,
}

/// The exponent is chosen so that `(2a/A)^{D/2} α⁻¹ D² e^{−αM^{1/D}} = N^{−γ'}`.
pub fn m_schedule_se_dd(
    n: usize,
    dim: usize,
    params: &ScheduleParams,
    spectrum: &SeGaussianSpectrum,
) -> Result<SeDdSchedule> {
    params.check()?;
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(params.gamma_prime > 0.0) {
        return Err(Error::InvalidHyperparameter("gamma' must be positive".into()));
    }
    let b = spectrum.ratio();
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidHyperparameter(format!("geometric ratio must lie in (0, 1), got {b}")));
    }
    let d = dim as f64;
    let alpha = -b.ln();
    let lead = 2.0 * spectrum.a / spectrum.big_a;
    let log_arg = params.gamma_prime * (n as f64).ln() + 0.5 * d * lead.ln() + 2.0 * d.ln() - alpha.ln();
    let m_real = (log_arg.max(0.0) / alpha).powi(dim as i32);
    let m = ceil_count(m_real).max(1);
    Ok(SeDdSchedule {
        m,
        m_real,
        features: m + dim - 1,
    })
}

/// `(2a/A)^{D/2} ∫_M^∞ B^{s^{1/D}} ds
///  = (2a/A)^{D/2} α^{−D} D! e^{−y} Σ_{k<D} y^k/k!`, `y = αM^{1/D}`.
pub fn se_dd_tail_integral(m: f64, dim: usize, spectrum: &SeGaussianSpectrum) -> f64 {
    let d = dim as i32;
    let alpha = -spectrum.ratio().ln();
    let lead = 2.0 * spectrum.a / spectrum.big_a;
    let y = alpha * m.powf(1.0 / dim as f64);
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 0..dim {
        if k > 0 {
            term *= y / k as f64;
        }
        sum += term;
    }
    let d_fact: f64 = (1..=dim).map(|i| i as f64).product();
    lead.powf(dim as f64 / 2.0) * alpha.powi(-d) * d_fact * (-y).exp() * sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternMode {
    /// Inducing points with the arbitrary-`y` theorem: `N^{1/k + ε'}`.
    Aposteriori,
    /// Inducing points with `y` from the prior: `N^{1/(2k) + ε'}`.
    Average,
    /// Eigenfunction features: `N^{1/(2k+1) + ε'}`.
    Eigenfunction,
}

pub fn matern_exponent(order: u32, epsilon_prime: f64, mode: MaternMode) -> f64 {
    let k = order as f64;
    let base = match mode {
        MaternMode::Aposteriori => 1.0 / k,
        MaternMode::Average => 1.0 / (2.0 * k),
        MaternMode::Eigenfunction => 1.0 / (2.0 * k + 1.0),
    };
    base + epsilon_prime
}

/// `M = ⌈N^{exponent}⌉`, capped at `N`.
pub fn m_schedule_matern(n: usize, order: u32, epsilon_prime: f64, mode: MaternMode) -> Result<usize> {
    if !(epsilon_prime >= 0.0) {
        return Err(Error::InvalidHyperparameter("epsilon' must be nonnegative".into()));
    }
    let exponent = matern_exponent(order, epsilon_prime, mode);
    if order == 0 && mode != MaternMode::Eigenfunction || exponent >= 1.0 {
        return Err(Error::OrderTooSmall { order, exponent });
    }
    // Round before taking the ceiling so exact powers are not bumped up by round-off.
    let raw = (n as f64).powf(exponent);
    let m = (raw * (1.0 - 1e-12)).ceil() as usize;
    Ok(m.clamp(1, n.max(1)))
}

/// Pointwise consequences of a small KL between one-dimensional Gaussians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prop1 {
    Applicable {
        /// `ε = 2·KL`.
        epsilon: f64,
        /// `σ₂√ε`.
        mean_dev: f64,
        /// `σ₂√(3ε)`.
        mean_dev_weak: f64,
        /// Open interval for `σ₁²/σ₂²`: `(1 − √(3ε), 1 + √(3ε))`.
        ratio_lo: f64,
        ratio_hi: f64,
    },
    /// `2·KL > 1/5`: no bound is claimed.
    NotApplicable { epsilon: f64 },
}

pub fn prop1_pointwise(sigma2_sq: f64, kl: f64) -> Result<Prop1> {
    if !(kl >= 0.0) {
        return Err(Error::InvalidInput(format!("KL must be nonnegative, got {kl}")));
    }
    if !(sigma2_sq > 0.0) {
        return Err(Error::InvalidInput("reference variance must be positive".into()));
    }
    let epsilon = 2.0 * kl;
    if epsilon > 0.2 {
        return Ok(Prop1::NotApplicable { epsilon });
    }
    let s2 = sigma2_sq.sqrt();
    let r = (3.0 * epsilon).sqrt();
    Ok(Prop1::Applicable {
        epsilon,
        mean_dev: s2 * epsilon.sqrt(),
        mean_dev_weak: s2 * r,
        ratio_lo: 1.0 - r,
        ratio_hi: 1.0 + r,
    })
}
