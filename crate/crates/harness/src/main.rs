use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use svgp_harness::config::{Config, Kind, DEFAULT_CONFIG};
use svgp_harness::experiments::{run, RunOptions};
use svgp_harness::oracle;
use svgp_harness::rows::{write_csv, CheckRow};
use svgp_core::svgp::DEFAULT_DENSE_LIMIT;

/// Experiment runner and oracle suite for sparse variational GP bounds.
#[derive(Parser, Debug)]
#[command(name = "svgp-harness", version)]
struct Cli {
    /// Experiment file; the built-in settings are used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Added to every configured seed.
    #[arg(long, global = true, value_name = "INT", default_value_t = 0)]
    seed_offset: u64,
    #[arg(long, global = true, value_name = "PATH", default_value = "results")]
    out_dir: PathBuf,
    /// Largest N for dense O(N³) work.
    #[arg(long, global = true, value_name = "INT")]
    dense_limit: Option<usize>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// KL and Lemma 2 interval with M fixed as N grows.
    FixedM,
    /// KL and a priori bounds as M grows on fixed data.
    MSweep,
    /// KL with M = C log N as N grows.
    LogSchedule,
    /// k-DPP against uniform selection on clustered inputs.
    Dispersion,
    /// Oracle checks of the exact identities, bounds and samplers.
    OracleSuite {
        /// Skip the slow Theorem 4 probability check.
        #[arg(long)]
        quick: bool,
    },
}

enum Outcome {
    Clean,
    Violation,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(p) => Config::load(p),
        None => Config::parse(DEFAULT_CONFIG),
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let kind = match &cli.command {
        Command::FixedM => Kind::FixedM,
        Command::MSweep => Kind::MSweep,
        Command::LogSchedule => Kind::LogSchedule,
        Command::Dispersion => Kind::Dispersion,
        Command::OracleSuite { quick } => return oracle_suite(cli, *quick),
    };
    let config = load(cli)?;
    let experiments = config.of_kind(kind);
    if experiments.is_empty() {
        anyhow::bail!("configuration has no {} experiment", kind.as_str());
    }
    let mut opts = RunOptions {
        dense_limit: cli.dense_limit.or(config.dense_limit).unwrap_or(DEFAULT_DENSE_LIMIT),
        seed_offset: cli.seed_offset,
        ..Default::default()
    };
    if let Some(t) = cli.threads {
        opts.threads = t;
    }
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let mut violations = 0;
    for cfg in experiments {
        log::info!("running {}", cfg.name);
        let out = run(cfg, &opts)?;
        let base = cli.out_dir.join(&out.output);
        write(&with_ext(&base, "csv"), &out.csv()?)?;
        write(&with_ext(&base, "svg"), &out.svg)?;
        write(&with_ext(&base, "timings.csv"), &out.timings_csv()?)?;
        for note in &out.notes {
            eprintln!("{}: {note}", out.name);
        }
        let v = out.violations();
        println!("{}: {} rows, {v} violations -> {}", out.name, out.results().len().max(out.dispersion().len()), with_ext(&base, "csv").display());
        violations += v;
    }
    Ok(if violations == 0 { Outcome::Clean } else { Outcome::Violation })
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn oracle_suite(cli: &Cli, quick: bool) -> Result<Outcome> {
    let rows = oracle::suite(!quick)?;
    print_checks(&rows);
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    write_csv(&rows, CheckRow::HEADER, &cli.out_dir.join("oracle_suite.csv"))?;
    Ok(if rows.iter().all(|r| r.pass) { Outcome::Clean } else { Outcome::Violation })
}

fn print_checks(rows: &[CheckRow]) {
    for r in rows {
        println!("{} criterion {:>2}: {} ({})", if r.pass { "PASS" } else { "FAIL" }, r.id, r.name, r.detail);
    }
}
