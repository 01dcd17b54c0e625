use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use priorbound::bounds::{block_unweighted, entrywise_unweighted, m_hat};
use priorbound::harness::{
    mc_check, nominal_model, nominal_weights, run_phase_grid, run_weight_comparison, DictionaryKind, ExperimentConfig, GridResult,
    ModelConfig, WeightMode,
};
use priorbound::models::dct_dictionary;

#[derive(Parser)]
#[command(name = "priorbound", version, about = "Measurement bounds and recovery experiments with prior support information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print bound tables (m_hat, width, raw_m)
    Bounds(Common),
    /// Print the optimal weights of the configured partition as CSV
    Weights(Common),
    /// Run a unit-weight phase-transition grid over s_grid x m_grid
    PhaseGrid(Common),
    /// Compare unit and optimal weights over m_grid
    Compare(Common),
    /// Check the closed-form expected distances against Monte Carlo
    McCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        settings: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    weights: Option<WeightArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Unit,
    Optimal,
    PerTrial,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        let mut cfg = ExperimentConfig::from_toml(&text).with_context(|| format!("in config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(w) = self.weights {
            cfg.weights = match w {
                WeightArg::Unit => WeightMode::Unit,
                WeightArg::Optimal => WeightMode::Optimal,
                WeightArg::PerTrial => WeightMode::PerTrial,
            };
        }
        cfg.validate()?;
        if let Some(threads) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .context("configuring the worker pool")?;
        }
        Ok(cfg)
    }

    fn out_path(&self, cfg: &ExperimentConfig) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from))
    }
}

/// Writes `text` to the output file if one is set, otherwise to stdout.
fn emit(path: Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn bounds(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let n_amb = cfg.model.ambient();
    let mut out = String::from("label,s,m_hat,measurements,width,raw_m\n");
    if !cfg.s_grid.is_empty() {
        for &s in &cfg.s_grid {
            let r = match cfg.model {
                ModelConfig::Entrywise { n, p, dictionary } => {
                    let kappa = match dictionary {
                        DictionaryKind::Dct => dct_dictionary(p, n)?.kappa,
                        DictionaryKind::Identity => 1.0,
                    };
                    entrywise_unweighted(s, p, kappa)?
                }
                ModelConfig::Block { q, k } => block_unweighted(s, q, k)?,
                ModelConfig::Tv { .. } => bail!("s_grid bound tables are available for the entrywise and block models"),
            };
            out += &format!("unit,{s},{},{},{},{}\n", r.m_hat, r.measurements(), r.sandwich_width, r.raw_m(cfg.eta, n_amb)?);
        }
    }
    if cfg.partition.is_some() {
        let model = nominal_model(&cfg)?;
        let s = model.support_size();
        let omega = nominal_weights(&cfg)?;
        for (label, w) in [("unit", None), ("optimal", Some(omega.as_slice()))] {
            let r = m_hat(&model, w)?;
            out += &format!("{label},{s},{},{},{},{}\n", r.m_hat, r.measurements(), r.sandwich_width, r.raw_m(cfg.eta, n_amb)?);
        }
    }
    if cfg.s_grid.is_empty() && cfg.partition.is_none() {
        bail!("config needs `s_grid` or a [partition] section for a bound table");
    }
    emit(common.out_path(&cfg), &out)
}

fn weights(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let part = cfg.nominal_partition()?;
    let omega = nominal_weights(&cfg)?;
    let mut out = String::from("partition,alpha,omega\n");
    for (i, (a, w)) in part.alpha.iter().zip(&omega).enumerate() {
        out += &format!("{},{a},{w}\n", i + 1);
    }
    emit(common.out_path(&cfg), &out)
}

fn summarize(grid: &GridResult) {
    let mut err = io::stderr();
    for c in &grid.cells {
        let _ = writeln!(
            err,
            "{:<12} s={:<4} m={:<5} {:>4}/{:<4} p={:.3} m_hat={:.1} stalled={} fallback={} {:.2}s",
            c.family, c.s, c.m, c.successes, c.trials, c.prob, c.m_hat, c.nonconverged, c.weight_fallbacks, c.seconds
        );
    }
}

fn grid(common: &Common, compare: bool) -> Result<()> {
    let cfg = common.load()?;
    let result = if compare { run_weight_comparison(&cfg)? } else { run_phase_grid(&cfg)? };
    summarize(&result);
    emit(common.out_path(&cfg), &result.to_csv_string()?)
}

fn check(common: &Common, settings: usize, samples: usize) -> Result<bool> {
    let cfg = common.load()?;
    let rows = mc_check(&cfg, settings, samples)?;
    let mut out = String::from("family,setting,t,weights,psi,mc_mean,std_error,z_score,pass\n");
    for r in &rows {
        out += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.family, r.setting, r.t, r.weights, r.psi, r.mc_mean, r.std_error, r.z_score, r.pass
        );
    }
    emit(common.out_path(&cfg), &out)?;
    Ok(rows.iter().all(|r| r.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bounds(c) => bounds(c).map(|_| true),
        Command::Weights(c) => weights(c).map(|_| true),
        Command::PhaseGrid(c) => grid(c, false).map(|_| true),
        Command::Compare(c) => grid(c, true).map(|_| true),
        Command::McCheck { common, samples, settings } => check(common, *settings, *samples),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: Monte Carlo check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
