//! Experiments: synthetic data, inducing selection and bound
//! evaluation per `(seed, N, M, method)`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use svgp_core::bounds::{m_schedule_se_1d, AprioriInputs, ScheduleParams};
use svgp_core::chol::LowerFactor;
use svgp_core::gp_exact::{noisy_gram, sample_prior_outputs, sample_with_factor, Dataset, NoiseModel};
use svgp_core::inducing::{
    eigenfunction_features, eigenvector_features, greedy_det_init_with_nugget, kdpp_mcmc_with_nugget, mixing_steps, uniform_subset,
};
use svgp_core::kernels::{DensitySpec, KernelFamily, KernelSpec, SeGaussianSpectrum, SpectrumTail};
use svgp_core::report::{BoundReport, ReportOptions};
use svgp_core::svgp::{feature_operators, DenseKl, InducingSet, DEFAULT_DENSE_LIMIT};

use crate::config::{ChainSteps, ExperimentConfig, InputDist, Kind, MRule, Method, CHAIN_STEP_CAP};
use crate::rows::{to_csv, DispersionRow, ResultRow, TimingRow};
use crate::svg::{LineChart, Series, StripChart};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub dense_limit: usize,
    pub seed_offset: u64,
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            dense_limit: DEFAULT_DENSE_LIMIT,
            seed_offset: 0,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    Results(Vec<ResultRow>),
    Dispersion(Vec<DispersionRow>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub name: String,
    pub output: String,
    pub rows: Rows,
    pub timings: Vec<TimingRow>,
    pub svg: String,
    pub notes: Vec<String>,
}

impl ExperimentOutput {
    pub fn results(&self) -> &[ResultRow] {
        match &self.rows {
            Rows::Results(r) => r,
            Rows::Dispersion(_) => &[],
        }
    }

    pub fn dispersion(&self) -> &[DispersionRow] {
        match &self.rows {
            Rows::Dispersion(r) => r,
            Rows::Results(_) => &[],
        }
    }

    /// Rows that break a deterministic invariant.
    pub fn violations(&self) -> usize {
        self.results().iter().filter(|r| !r.violation.is_empty()).count()
    }

    pub fn csv(&self) -> Result<String> {
        match &self.rows {
            Rows::Results(r) => to_csv(r, ResultRow::HEADER),
            Rows::Dispersion(r) => to_csv(r, DispersionRow::HEADER),
        }
    }

    pub fn timings_csv(&self) -> Result<String> {
        to_csv(&self.timings, TimingRow::HEADER)
    }
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    match cfg.kind {
        Kind::FixedM => run_fixed_m(cfg, opts),
        Kind::MSweep => run_m_sweep(cfg, opts),
        Kind::LogSchedule => run_log_schedule(cfg, opts),
        Kind::Dispersion => run_dispersion_demo(cfg, opts),
    }
}

/// SplitMix64 finalizer over `(seed, n, tag)`.
pub fn derive_seed(seed: u64, n: usize, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((n as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(tag.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_X: u64 = 1;
const TAG_Y: u64 = 2;
const TAG_SELECT: u64 = 3;
const TAG_MC: u64 = 4;

pub fn sample_inputs(dist: &InputDist, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, n, TAG_X));
    match dist {
        InputDist::Density(d) => d.sample(n, &mut rng),
        InputDist::Clusters { centers, std } => DMatrix::from_fn(n, 1, |_, _| {
            let c = centers[rng.random_range(0..centers.len())];
            let z: f64 = StandardNormal.sample(&mut rng);
            c + std * z
        }),
    }
}

/// Inputs from the configured density and outputs from the GP prior.
pub fn make_dataset(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Dataset> {
    let x = sample_inputs(&cfg.inputs, n, seed);
    let y = sample_prior_outputs(&x, &cfg.kernel, NoiseModel::new(cfg.noise)?, derive_seed(seed, n, TAG_Y))?;
    Ok(Dataset::new(x, y)?)
}

/// Closed-form operator spectrum, available for an SE kernel under a
/// one-dimensional Gaussian density.
pub fn se_spectrum(cfg: &ExperimentConfig) -> Option<SeGaussianSpectrum> {
    match (&cfg.kernel.family, &cfg.inputs) {
        (KernelFamily::SquaredExponential, InputDist::Density(DensitySpec::Gaussian { std, .. })) if std.len() == 1 => {
            SeGaussianSpectrum::new(cfg.kernel.variance, cfg.kernel.lengthscales[0], std[0]).ok()
        }
        _ => None,
    }
}

pub fn schedule_params(cfg: &ExperimentConfig) -> ScheduleParams {
    ScheduleParams {
        gamma: cfg.gamma,
        delta: cfg.delta,
        variance: cfg.kernel.variance,
        noise_variance: cfg.noise,
        ..Default::default()
    }
}

/// `C = (3 + γ)/log(1/B)`.
pub fn log_slope(cfg: &ExperimentConfig) -> Result<f64> {
    let spec = se_spectrum(cfg).ok_or_else(|| anyhow!("log:auto needs an SE kernel and a 1-D Gaussian density"))?;
    Ok((3.0 + cfg.gamma) / (1.0 / spec.ratio()).ln())
}

pub fn m_values(cfg: &ExperimentConfig, n: usize) -> Result<Vec<usize>> {
    let nf = n as f64;
    let raw = match &cfg.m_rule {
        MRule::List(v) => v.clone(),
        MRule::Log { c, c0 } => vec![(c * nf.ln() + c0).ceil().max(0.0) as usize],
        MRule::LogAuto => vec![(log_slope(cfg)? * nf.ln()).ceil() as usize],
        MRule::ScheduleSe => {
            let spec = se_spectrum(cfg).ok_or_else(|| anyhow!("schedule-se needs an SE kernel and a 1-D Gaussian density"))?;
            vec![m_schedule_se_1d(n, &schedule_params(cfg), &spec)?.m]
        }
        MRule::Power(a) => vec![nf.powf(*a).ceil() as usize],
    };
    Ok(raw.into_iter().map(|m| m.min(n)).collect())
}

pub fn epsilon_for(cfg: &ExperimentConfig, n: usize) -> f64 {
    cfg.epsilon.unwrap_or_else(|| (n as f64).powi(-3))
}

pub fn chain_steps_for(cfg: &ExperimentConfig, n: usize, m: usize) -> Result<u64> {
    Ok(match cfg.chain_steps {
        ChainSteps::Fixed(r) => r,
        ChainSteps::NM => (n * m) as u64,
        ChainSteps::Mixing => {
            let r = mixing_steps(n, m, epsilon_for(cfg, n))?;
            if r > CHAIN_STEP_CAP {
                log::warn!("{}: mixing budget {r} for N={n}, M={m} capped at {CHAIN_STEP_CAP}", cfg.name);
            }
            r.min(CHAIN_STEP_CAP)
        }
    })
}

pub struct Selection {
    pub set: InducingSet,
    pub indices: Option<Vec<usize>>,
    pub chain_steps: u64,
}

pub fn select(cfg: &ExperimentConfig, method: Method, kernel: &KernelSpec, x: &DMatrix<f64>, m: usize, seed: u64) -> Result<Selection> {
    let n = x.nrows();
    let points = |idx: Vec<usize>, steps| Selection {
        set: InducingSet::Points(x.select_rows(&idx)),
        indices: Some(idx),
        chain_steps: steps,
    };
    if m == n && !matches!(method, Method::Eigvec | Method::Eigfunc) {
        return Ok(points((0..n).collect(), 0));
    }
    Ok(match method {
        Method::PointsKdpp => {
            let steps = chain_steps_for(cfg, n, m)?;
            let nugget = cfg.selection_nugget * kernel.variance;
            points(kdpp_mcmc_with_nugget(kernel, x, m, steps, derive_seed(seed, n, TAG_SELECT), nugget)?, steps)
        }
        Method::PointsUniform => points(uniform_subset(n, m, derive_seed(seed, n, TAG_SELECT))?, 0),
        Method::PointsGreedy => points(greedy_det_init_with_nugget(kernel, x, m, cfg.selection_nugget * kernel.variance)?, 0),
        Method::Eigvec => Selection {
            set: eigenvector_features(kernel, x, m)?,
            indices: None,
            chain_steps: 0,
        },
        Method::Eigfunc => {
            let InputDist::Density(d) = &cfg.inputs else {
                bail!("eigfunc needs a density, not clusters");
            };
            Selection {
                set: eigenfunction_features(kernel, d, m, cfg.quadrature)?,
                indices: None,
                chain_steps: 0,
            }
        }
    })
}

/// Evaluates every bound for one instance and, when requested, the Monte
/// Carlo mean KL over fresh prior outputs at the same inputs.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    cfg: &ExperimentConfig,
    data: &Dataset,
    m: usize,
    selection: &Selection,
    seed: u64,
    method: Method,
    selection_s: f64,
    opts: &RunOptions,
) -> Result<(ResultRow, TimingRow)> {
    let n = data.len();
    let noise = NoiseModel::new(cfg.noise)?;
    let t0 = Instant::now();
    let ops = feature_operators(&selection.set, &cfg.kernel, &data.x)?;
    let solve_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let report_opts = ReportOptions {
        dense_limit: opts.dense_limit,
        log_marginal: cfg.log_marginal,
        ..Default::default()
    };
    let mut report = BoundReport::compute(data, &cfg.kernel, noise, &ops, &report_opts)?;
    let epsilon = epsilon_for(cfg, n);
    if let Some(spec) = se_spectrum(cfg) {
        let inputs = AprioriInputs {
            n,
            m: ops.m(),
            delta: cfg.delta,
            epsilon,
            variance: cfg.kernel.variance,
            noise_variance: cfg.noise,
            norm_y_sq: report.norm_y_sq,
            tail_sum: 0.0,
        }
        .with_spectrum(&SpectrumTail::SeGaussian(spec));
        report = report.with_apriori(&inputs)?;
    }
    let (mc_mean, mc_se) = if cfg.replicates > 0 && n <= opts.dense_limit {
        let dense = DenseKl::new(&cfg.kernel, &data.x, noise, &ops, opts.dense_limit)?;
        let factor = LowerFactor::factor_default(&noisy_gram(&data.x, &cfg.kernel, noise)?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, n, TAG_MC));
        let draws: Vec<f64> = (0..cfg.replicates)
            .map(|_| dense.kl(&sample_with_factor(&factor, &mut rng)))
            .collect::<svgp_core::Result<_>>()?;
        let (mean, se) = mean_se(&draws);
        (Some(mean), Some(se))
    } else {
        (None, None)
    };
    let bounds_s = t1.elapsed().as_secs_f64();
    let row = ResultRow {
        experiment: cfg.name.clone(),
        seed,
        n,
        m,
        features: ops.m(),
        method: method.to_string(),
        t: report.t,
        lambda_max_tilde: report.lambda_max_tilde,
        elbo: report.elbo,
        upper: report.upper,
        upper_refined: report.upper_refined,
        log_marginal: report.log_marginal,
        kl_exact: report.kl_exact,
        norm_y_sq: report.norm_y_sq,
        jitter_used: report.jitter_used,
        lemma1: report.lemma1,
        lemma1_loose: report.lemma1_loose,
        lemma2_lo: report.lemma2_lo,
        lemma2_hi: report.lemma2_hi,
        thm1: report.thm1,
        thm2: report.thm2,
        thm3: report.thm3,
        thm4: report.thm4,
        prop1_mean: report.prop1_mean,
        prop1_var: report.prop1_var,
        epsilon,
        chain_steps: selection.chain_steps,
        mc_draws: if mc_mean.is_some() { cfg.replicates } else { 0 },
        mc_kl_mean: mc_mean,
        mc_kl_se: mc_se,
        violation: report.violations().join(";"),
    };
    let timing = TimingRow {
        experiment: cfg.name.clone(),
        seed,
        n,
        m,
        method: method.to_string(),
        selection_s,
        solve_s,
        bounds_s,
    };
    Ok((row, timing))
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(mut xs: Vec<f64>) -> Option<f64> {
    xs.retain(|x| x.is_finite());
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    Some(if k % 2 == 1 { xs[k / 2] } else { 0.5 * (xs[k / 2 - 1] + xs[k / 2]) })
}

/// Runs `f` over `items` on up to `threads` workers, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).unwrap_or_else(|| Err(anyhow!("worker did not finish"))))
        .collect()
}

fn seeds(cfg: &ExperimentConfig, opts: &RunOptions) -> Vec<u64> {
    cfg.seeds.iter().map(|s| s.wrapping_add(opts.seed_offset)).collect()
}

fn check_dense(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<()> {
    if let Some(&n) = cfg.n_grid.iter().find(|&&n| n > opts.dense_limit) {
        bail!(svgp_core::Error::DenseLimitExceeded { n, limit: opts.dense_limit });
    }
    Ok(())
}

/// One task per `(seed, N, method)`, each evaluating every `M` the rule gives.
fn run_grid(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Vec<ResultRow>, Vec<TimingRow>)> {
    check_dense(cfg, opts)?;
    let mut tasks = Vec::new();
    for seed in seeds(cfg, opts) {
        for &n in &cfg.n_grid {
            for &method in &cfg.methods {
                tasks.push((seed, n, method));
            }
        }
    }
    let out = par_map(&tasks, opts.threads, |&(seed, n, method)| {
        let data = make_dataset(cfg, n, seed)?;
        let mut rows = Vec::new();
        let ms = m_values(cfg, n)?;
        // One eigendecomposition serves every M.
        let mut shared = None;
        if method == Method::Eigvec && ms.len() > 1 {
            let t0 = Instant::now();
            let top = *ms.iter().max().unwrap_or(&1);
            shared = Some((select(cfg, method, &cfg.kernel, &data.x, top, seed)?, t0.elapsed().as_secs_f64()));
        }
        for m in ms {
            let t0 = Instant::now();
            let (selection, sel_s) = match &shared {
                Some((full, s)) => {
                    let set = truncate_features(&full.set, m).ok_or_else(|| anyhow!("expected eigenvector features"))?;
                    (Selection { set, indices: None, chain_steps: 0 }, *s)
                }
                None => {
                    let sel = select(cfg, method, &cfg.kernel, &data.x, m, seed)?;
                    (sel, t0.elapsed().as_secs_f64())
                }
            };
            rows.push(
                evaluate(cfg, &data, m, &selection, seed, method, sel_s, opts)
                    .with_context(|| format!("{}: seed {seed}, N={n}, M={m}, {method}", cfg.name))?,
            );
        }
        Ok(rows)
    })?;
    let (mut rows, mut timings): (Vec<_>, Vec<_>) = out.into_iter().flatten().unzip();
    rows.sort_by_key(|r: &ResultRow| r.sort_key());
    timings.sort_by(|a: &TimingRow, b: &TimingRow| {
        (&a.experiment, a.seed, a.n, a.m, &a.method).cmp(&(&b.experiment, b.seed, b.n, b.m, &b.method))
    });
    Ok((rows, timings))
}

/// Median of `f` over rows grouped by `key`, in increasing key order.
pub fn medians_by<K: Copy + PartialOrd>(rows: &[&ResultRow], key: impl Fn(&ResultRow) -> K, f: impl Fn(&ResultRow) -> Option<f64>) -> Vec<(K, f64)> {
    let mut keys: Vec<K> = Vec::new();
    for r in rows {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    keys.into_iter()
        .filter_map(|k| {
            let vals: Vec<f64> = rows.iter().filter(|r| key(r) == k).filter_map(|r| f(r)).collect();
            median(vals).map(|v| (k, v))
        })
        .collect()
}

fn by_method(rows: &[ResultRow], method: Method) -> Vec<&ResultRow> {
    rows.iter().filter(|r| r.method == method.as_str()).collect()
}

fn as_points(v: Vec<(usize, f64)>) -> Vec<(f64, f64)> {
    v.into_iter().map(|(k, y)| (k as f64, y)).collect()
}

/// KL, `t/2σ²` and `t/σ²` as `N` grows with `M` fixed.
pub fn run_fixed_m(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let (rows, timings) = run_grid(cfg, opts)?;
    let mut series = Vec::new();
    for &method in &cfg.methods {
        let rs = by_method(&rows, method);
        series.push(Series::new(format!("KL {method}"), as_points(medians_by(&rs, |r| r.n, |r| r.kl_exact))));
        if rs.iter().any(|r| r.mc_kl_mean.is_some()) {
            series.push(Series::new(format!("mean KL {method}"), as_points(medians_by(&rs, |r| r.n, |r| r.mc_kl_mean))));
        }
        series.push(Series::new(format!("t/2s2 {method}"), as_points(medians_by(&rs, |r| r.n, |r| Some(r.lemma2_lo)))).dashed());
        series.push(Series::new(format!("t/s2 {method}"), as_points(medians_by(&rs, |r| r.n, |r| Some(r.lemma2_hi)))).dashed());
    }
    let chart = LineChart {
        title: format!("{}: fixed M, growing N", cfg.name),
        x_label: "N".into(),
        y_label: "median over seeds".into(),
        log_x: true,
        log_y: true,
        series,
    };
    Ok(finish(cfg, rows, timings, chart.render(), Vec::new()))
}

/// KL and the a priori bounds as `M` grows on fixed data.
pub fn run_m_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let (rows, timings) = run_grid(cfg, opts)?;
    let mut series = Vec::new();
    let mut notes = Vec::new();
    for (k, &method) in cfg.methods.iter().enumerate() {
        let rs = by_method(&rows, method);
        series.push(Series::new(format!("KL {method}"), as_points(medians_by(&rs, |r| r.m, |r| r.kl_exact))));
        if k == 0 {
            series.push(Series::new("upper - elbo", as_points(medians_by(&rs, |r| r.m, |r| Some(r.upper - r.elbo)))).dashed());
            series.push(Series::new("thm3", as_points(medians_by(&rs, |r| r.m, |r| r.thm3))).dashed());
            series.push(Series::new("thm4", as_points(medians_by(&rs, |r| r.m, |r| r.thm4))).dashed());
        }
        let ms: Vec<usize> = medians_by(&rs, |r| r.m, |_| Some(0.0)).into_iter().map(|p| p.0).collect();
        for m in ms {
            let at: Vec<&&ResultRow> = rs.iter().filter(|r| r.m == m).collect();
            let ordered = at
                .iter()
                .filter(|r| match (r.kl_exact, r.thm3) {
                    (Some(kl), Some(b)) => kl <= r.upper - r.elbo + 1e-8 && r.upper - r.elbo <= b,
                    _ => false,
                })
                .count();
            let below_thm4 = at
                .iter()
                .filter(|r| matches!((r.kl_exact, r.thm4), (Some(kl), Some(b)) if kl <= b))
                .count();
            notes.push(format!(
                "{method} M={m}: kl <= upper-elbo <= thm3 in {ordered}/{n} seeds, kl <= thm4 in {below_thm4}/{n} (target fraction {:.2})",
                1.0 - cfg.delta,
                n = at.len(),
            ));
        }
        if method.nested() {
            let (mut breaks, mut jittered) = (0, 0);
            for seed in seeds(cfg, opts) {
                for &n in &cfg.n_grid {
                    let mut path: Vec<&&ResultRow> = rs.iter().filter(|r| r.seed == seed && r.n == n).collect();
                    path.sort_by_key(|r| r.m);
                    for w in path.windows(2) {
                        if let (Some(a), Some(b)) = (w[0].kl_exact, w[1].kl_exact) {
                            if b > a + 1e-8 {
                                if w[0].jitter_used > 0.0 || w[1].jitter_used > 0.0 {
                                    jittered += 1;
                                } else {
                                    breaks += 1;
                                }
                            }
                        }
                    }
                }
            }
            notes.push(format!(
                "{method}: {breaks} increases of KL along nested sets ({jittered} more where Kuu needed jitter)"
            ));
        }
    }
    let chart = LineChart {
        title: format!("{}: growing M at N = {:?}", cfg.name, cfg.n_grid),
        x_label: "M".into(),
        y_label: "median over seeds".into(),
        log_x: false,
        log_y: true,
        series,
    };
    Ok(finish(cfg, rows, timings, chart.render(), notes))
}

/// KL as `N` grows with `M` from a logarithmic rule.
pub fn run_log_schedule(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let (rows, timings) = run_grid(cfg, opts)?;
    let mut series = Vec::new();
    for &method in &cfg.methods {
        let rs = by_method(&rows, method);
        series.push(Series::new(format!("KL {method}"), as_points(medians_by(&rs, |r| r.n, |r| r.kl_exact))));
        series.push(Series::new(format!("thm4 {method}"), as_points(medians_by(&rs, |r| r.n, |r| r.thm4))).dashed());
    }
    let mut notes = Vec::new();
    if matches!(cfg.m_rule, MRule::LogAuto) {
        notes.push(format!("C = {:.6}", log_slope(cfg)?));
    }
    for &n in &cfg.n_grid {
        notes.push(format!("N={n}: M={:?}", m_values(cfg, n)?));
    }
    let chart = LineChart {
        title: format!("{}: M = C log N", cfg.name),
        x_label: "N".into(),
        y_label: "median over seeds".into(),
        log_x: true,
        log_y: true,
        series,
    };
    Ok(finish(cfg, rows, timings, chart.render(), notes))
}

fn finish(cfg: &ExperimentConfig, rows: Vec<ResultRow>, timings: Vec<TimingRow>, svg: String, notes: Vec<String>) -> ExperimentOutput {
    ExperimentOutput {
        name: cfg.name.clone(),
        output: cfg.output.clone(),
        rows: Rows::Results(rows),
        timings,
        svg,
        notes,
    }
}

/// Mean distance from each selected point to its nearest selected neighbour.
pub fn mean_nn_distance(x: &DMatrix<f64>, idx: &[usize]) -> f64 {
    if idx.len() < 2 {
        return 0.0;
    }
    let dist = |a: usize, b: usize| (x.row(a) - x.row(b)).norm();
    let total: f64 = idx
        .iter()
        .map(|&i| idx.iter().filter(|&&j| j != i).map(|&j| dist(i, j)).fold(f64::INFINITY, f64::min))
        .sum();
    total / idx.len() as f64
}

fn has_duplicate_locations(x: &DMatrix<f64>, idx: &[usize]) -> bool {
    idx.iter()
        .enumerate()
        .any(|(a, &i)| idx[a + 1..].iter().any(|&j| x.row(i) == x.row(j)))
}

/// k-DPP selections at several lengthscales against uniform selection.
pub fn run_dispersion_demo(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let n = cfg.n_grid[0];
    let m = *m_values(cfg, n)?.first().ok_or_else(|| anyhow!("no M value"))?;
    let mut variants: Vec<(Method, Option<f64>)> = Vec::new();
    for &method in &cfg.methods {
        match method {
            Method::PointsKdpp | Method::PointsGreedy => {
                variants.extend(cfg.kdpp_lengthscales.iter().map(|&l| (method, Some(l))));
            }
            Method::PointsUniform => variants.push((method, None)),
            Method::Eigvec | Method::Eigfunc => bail!("dispersion compares point selections only"),
        }
    }
    let seed_list = seeds(cfg, opts);
    let out = par_map(&seed_list, opts.threads, |&seed| {
        let x = sample_inputs(&cfg.inputs, n, seed);
        let mut rows = Vec::new();
        let mut timings = Vec::new();
        for &(method, ell) in &variants {
            let kernel = match ell {
                Some(l) => KernelSpec::new(cfg.kernel.family, cfg.kernel.variance, vec![l])?,
                None => cfg.kernel.clone(),
            };
            let t0 = Instant::now();
            let sel = select(cfg, method, &kernel, &x, m, seed)?;
            let idx = sel.indices.unwrap_or_default();
            let label = match ell {
                Some(l) => format!("{method} l={l}"),
                None => method.to_string(),
            };
            timings.push(TimingRow {
                experiment: cfg.name.clone(),
                seed,
                n,
                m,
                method: label.clone(),
                selection_s: t0.elapsed().as_secs_f64(),
                solve_s: 0.0,
                bounds_s: 0.0,
            });
            rows.push(DispersionRow {
                experiment: cfg.name.clone(),
                seed,
                n,
                m,
                method: label,
                lengthscale: ell,
                mean_nn_distance: mean_nn_distance(&x, &idx),
                duplicate_locations: has_duplicate_locations(&x, &idx),
                indices: idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
            });
        }
        Ok((x, rows, timings))
    })?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut first: Option<(DMatrix<f64>, Vec<DispersionRow>)> = None;
    for (x, r, t) in out {
        if first.is_none() {
            first = Some((x, r.clone()));
        }
        rows.extend(r);
        timings.extend(t);
    }
    let mut notes = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for r in &rows {
        if !labels.contains(&r.method) {
            labels.push(r.method.clone());
        }
    }
    for label in &labels {
        let d: Vec<f64> = rows.iter().filter(|r| &r.method == label).map(|r| r.mean_nn_distance).collect();
        let (mean, se) = mean_se(&d);
        notes.push(format!("{label}: mean nearest-neighbour distance {mean:.4} (se {se:.4})"));
    }
    let svg = match first {
        Some((x, r)) => StripChart {
            title: format!("{}: selected points, seed {}", cfg.name, r.first().map_or(0, |r| r.seed)),
            sample: x.column(0).iter().copied().collect(),
            rows: r
                .iter()
                .map(|row| {
                    let pts = row
                        .indices
                        .split_whitespace()
                        .filter_map(|s| s.parse::<usize>().ok())
                        .map(|i| x[(i, 0)])
                        .collect();
                    (row.method.clone(), pts)
                })
                .collect(),
        }
        .render(),
        None => String::new(),
    };
    Ok(ExperimentOutput {
        name: cfg.name.clone(),
        output: cfg.output.clone(),
        rows: Rows::Dispersion(rows),
        timings,
        svg,
        notes,
    })
}

/// Selection of eigenvector features truncated to the leading `m`.
pub fn truncate_features(set: &InducingSet, m: usize) -> Option<InducingSet> {
    match set {
        InducingSet::EigenvectorFeatures { eigenvalues, vectors, inputs } => {
            let m = m.min(eigenvalues.len());
            Some(InducingSet::EigenvectorFeatures {
                eigenvalues: eigenvalues[..m].to_vec(),
                vectors: vectors.columns(0, m).into_owned(),
                inputs: inputs.clone(),
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn cfg(text: &str) -> ExperimentConfig {
        Config::parse(text).unwrap().experiments.remove(0)
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 100, TAG_X), derive_seed(0, 100, TAG_Y));
        assert_ne!(derive_seed(0, 100, TAG_X), derive_seed(1, 100, TAG_X));
        assert_ne!(derive_seed(0, 100, TAG_X), derive_seed(0, 101, TAG_X));
    }

    #[test]
    fn m_rules() {
        let c = cfg("[experiment a]\nkind = log-schedule\nlengthscale = 0.6\nn = 1000\nm = log:auto\n");
        let b = se_spectrum(&c).unwrap().ratio();
        assert_eq!(m_values(&c, 1000).unwrap(), vec![(4.0 / (1.0 / b).ln() * 1000f64.ln()).ceil() as usize]);
        let c = cfg("[experiment a]\nkind = fixed-m\nn = 10\nm = 5, 50\n");
        assert_eq!(m_values(&c, 10).unwrap(), vec![5, 10]);
        let c = cfg("[experiment a]\nkind = fixed-m\nn = 10\nm = log:2,1\n");
        assert_eq!(m_values(&c, 100).unwrap(), vec![(2.0 * 100f64.ln() + 1.0).ceil() as usize]);
        let c = cfg("[experiment a]\nkind = fixed-m\ndensity = uniform\nn = 10\nm = log:auto\n");
        assert!(m_values(&c, 100).is_err());
    }

    #[test]
    fn statistics() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![f64::NAN]), None);
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        let out = par_map(&items, 4, |&i| Ok(i * i)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * i).collect::<Vec<_>>());
        assert!(par_map(&items, 3, |&i| if i == 7 { Err(anyhow!("boom")) } else { Ok(i) }).is_err());
    }

    #[test]
    fn nearest_neighbour_distance() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 3.0, 3.0]);
        assert_eq!(mean_nn_distance(&x, &[0, 1, 2]), (1.0 + 1.0 + 2.0) / 3.0);
        assert!(has_duplicate_locations(&x, &[2, 3]));
        assert!(!has_duplicate_locations(&x, &[0, 3]));
    }

    #[test]
    fn small_fixed_m_run() {
        let c = cfg("[experiment a]\nkind = fixed-m\ndensity = uniform\ndensity_hi = 5\nn = 30, 60\nm = 5, 60\nseeds = 0..2\nreplicates = 20\nlog_marginal = true\n");
        let out = run(&c, &RunOptions::default()).unwrap();
        assert_eq!(out.results().len(), 8);
        assert_eq!(out.violations(), 0);
        for r in out.results() {
            if r.m == r.n {
                assert!(r.kl_exact.unwrap() <= 1e-8);
            }
            assert!(r.mc_kl_mean.is_some());
        }
        assert!(out.svg.contains("</svg>"));
    }

    #[test]
    fn dense_limit_is_enforced() {
        let c = cfg("[experiment a]\nkind = fixed-m\nn = 30\nm = 5\n");
        let opts = RunOptions {
            dense_limit: 20,
            ..Default::default()
        };
        let err = run(&c, &opts).unwrap_err();
        assert!(matches!(err.downcast_ref::<svgp_core::Error>(), Some(svgp_core::Error::DenseLimitExceeded { .. })));
    }

    #[test]
    fn truncation_keeps_leading_features() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 * 0.1);
        let k = KernelSpec::matern(0, 1.0, 0.5).unwrap();
        let full = eigenvector_features(&k, &x, 10).unwrap();
        let direct = eigenvector_features(&k, &x, 4).unwrap();
        let cut = truncate_features(&full, 4).unwrap();
        assert_eq!(cut.len(), 4);
        if let (InducingSet::EigenvectorFeatures { eigenvalues: a, .. }, InducingSet::EigenvectorFeatures { eigenvalues: b, .. }) = (&cut, &direct) {
            assert_eq!(a, b);
        }
    }
}
