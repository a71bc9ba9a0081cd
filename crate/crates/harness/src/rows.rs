//! Output records and their CSV form.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// One `(experiment, seed, N, M, method)` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub n: usize,
    /// Requested size.
    pub m: usize,
    /// Inducing variables actually used; eigenvector features may drop
    /// round-off directions.
    pub features: usize,
    pub method: String,
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
    pub prop1_mean: Option<f64>,
    pub prop1_var: Option<f64>,
    pub epsilon: f64,
    pub chain_steps: u64,
    pub mc_draws: usize,
    pub mc_kl_mean: Option<f64>,
    pub mc_kl_se: Option<f64>,
    /// `;`-separated names of broken invariants, empty when none.
    pub violation: String,
}

impl ResultRow {
    pub const HEADER: &'static [&'static str] = &[
        "experiment",
        "seed",
        "n",
        "m",
        "features",
        "method",
        "t",
        "lambda_max_tilde",
        "elbo",
        "upper",
        "upper_refined",
        "log_marginal",
        "kl_exact",
        "norm_y_sq",
        "jitter_used",
        "lemma1",
        "lemma1_loose",
        "lemma2_lo",
        "lemma2_hi",
        "thm1",
        "thm2",
        "thm3",
        "thm4",
        "prop1_mean",
        "prop1_var",
        "epsilon",
        "chain_steps",
        "mc_draws",
        "mc_kl_mean",
        "mc_kl_se",
        "violation",
    ];

    pub fn sort_key(&self) -> (String, u64, usize, usize, String) {
        (self.experiment.clone(), self.seed, self.n, self.m, self.method.clone())
    }
}

/// Wall time per phase, kept apart from the deterministic results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub experiment: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub method: String,
    pub selection_s: f64,
    pub solve_s: f64,
    pub bounds_s: f64,
}

impl TimingRow {
    pub const HEADER: &'static [&'static str] =
        &["experiment", "seed", "n", "m", "method", "selection_s", "solve_s", "bounds_s"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub experiment: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub method: String,
    /// Kernel lengthscale driving the selection, empty for uniform.
    pub lengthscale: Option<f64>,
    pub mean_nn_distance: f64,
    pub duplicate_locations: bool,
    /// Space-separated sorted indices.
    pub indices: String,
}

impl DispersionRow {
    pub const HEADER: &'static [&'static str] = &[
        "experiment",
        "seed",
        "n",
        "m",
        "method",
        "lengthscale",
        "mean_nn_distance",
        "duplicate_locations",
        "indices",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub id: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckRow {
    pub const HEADER: &'static [&'static str] = &["id", "name", "pass", "detail"];
}

/// CSV text with `header` first, even when `rows` is empty.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes)?)
}

pub fn from_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(rows, header)?).with_context(|| format!("writing {}", path.display()))
}
