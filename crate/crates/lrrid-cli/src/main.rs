//! Command-line harness around the `lrrid` library.
//!
//! Subcommands:
//! - `run`: all trials of one configured protocol; writes `trials.csv`,
//!   `results.csv`/`results.txt`, per-trial solver traces and classifier
//!   models into the output directory.
//! - `sweep`: a grid over occlusion/noise levels (or Extended Yale B
//!   dimensions) for one or more methods; writes the combined table and
//!   per-method accuracy curves.
//! - `dump`: re-runs one trial and writes decomposition images (original,
//!   matched atom, reconstruction, error) for the first test columns.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lrrid::experiment::{
    self, dump_decomposition, emit_table, plot_noise_curve, with_level, write_trial_reports,
    ExperimentConfig, Method, Protocol, RunOutcome, SummaryRow, TableFormat,
};

#[derive(Parser)]
#[command(name = "lrrid", version, about = "Low-rank + sparse representation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lrrid,
    Lrrs,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Lrrid => Method::Lrrid,
            MethodArg::Lrrs => Method::Lrrs,
        }
    }
}

#[derive(Args)]
struct CommonOpts {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of the configured protocol.
    Run(CommonOpts),
    /// Run a grid of occlusion/noise levels (Extended Yale B: dimensions).
    Sweep {
        #[command(flatten)]
        opts: CommonOpts,
        /// Comma-separated level grid, e.g. 0,0.1,0.2,0.3,0.4,0.5.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        /// Methods to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![MethodArg::Lrrid], value_enum)]
        methods: Vec<MethodArg>,
    },
    /// Re-run one trial and dump decomposition images for test columns.
    Dump {
        #[command(flatten)]
        opts: CommonOpts,
        /// How many test columns to dump.
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Trial index to reproduce.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
}

impl std::fmt::Display for MethodArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodArg::Lrrid => "lrrid",
            MethodArg::Lrrs => "lrrs",
        })
    }
}

fn load_config(opts: &CommonOpts) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&opts.config)
        .with_context(|| format!("cannot read config {}", opts.config.display()))?;
    let mut config: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("bad config {}", opts.config.display()))?;
    if let Some(seed) = opts.seed {
        config.base_seed = seed;
    }
    if let Some(trials) = opts.trials {
        config.trials = trials;
    }
    if let Some(out) = &opts.out {
        config.output_dir = out.clone();
    }
    if let Some(method) = opts.method {
        config.method = method.into();
    }
    Ok(config)
}

/// Human-readable label for the protocol's swept axis.
fn level_label(protocol: &Protocol) -> String {
    match protocol {
        Protocol::OrlOcclusion { level, .. } | Protocol::ArUniformNoise { level } => {
            level.to_string()
        }
        Protocol::EyalebDim { dim, .. } => dim.to_string(),
        Protocol::ArScenario { scenario } => format!("{scenario:?}").to_lowercase(),
        Protocol::Synthetic { .. } => "synthetic".to_string(),
    }
}

fn print_outcome(config: &ExperimentConfig, outcome: &RunOutcome) {
    for r in &outcome.reports {
        println!(
            "trial {:2}  seed {:>4}  accuracy {:6.2}%  iters {:4}  converged {}  {:.2}s",
            r.trial,
            r.seed,
            r.accuracy * 100.0,
            r.iterations,
            r.converged,
            r.wall_time_s
        );
    }
    for (trial, err) in &outcome.summary.failures {
        eprintln!("WARNING: trial {trial} failed numerically and was excluded: {err}");
    }
    println!(
        "{} {}: mean accuracy {:.2}% (std {:.2}%, {} trials)",
        config.method.name(),
        level_label(&config.protocol),
        outcome.summary.mean_accuracy * 100.0,
        outcome.summary.std_accuracy * 100.0,
        outcome.summary.trials_used
    );
}

fn write_run_outputs(config: &ExperimentConfig, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(&config.output_dir)?;
    let mut trials = Vec::new();
    write_trial_reports(&outcome.reports, &mut trials)?;
    fs::write(config.output_dir.join("trials.csv"), trials)?;

    let rows = vec![SummaryRow {
        level: level_label(&config.protocol),
        method: config.method.name().to_string(),
        mean_accuracy: outcome.summary.mean_accuracy,
    }];
    let mut csv = Vec::new();
    emit_table(&rows, TableFormat::Csv, &mut csv)?;
    fs::write(config.output_dir.join("results.csv"), csv)?;
    let mut txt = Vec::new();
    emit_table(&rows, TableFormat::AlignedText, &mut txt)?;
    fs::write(config.output_dir.join("results.txt"), txt)?;
    Ok(())
}

fn cmd_run(opts: &CommonOpts) -> Result<()> {
    let config = load_config(opts)?;
    let outcome = experiment::run_experiment(&config)?;
    write_run_outputs(&config, &outcome)?;
    print_outcome(&config, &outcome);
    println!("reports written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_sweep(opts: &CommonOpts, levels: &[f64], methods: &[MethodArg]) -> Result<()> {
    let base = load_config(opts)?;
    let sweep_dir = base.output_dir.clone();
    let mut rows = Vec::new();
    let mut curves: Vec<(Method, Vec<(f64, f64)>)> =
        methods.iter().map(|&m| (m.into(), Vec::new())).collect();

    for &method_arg in methods {
        let method: Method = method_arg.into();
        for &level in levels {
            let mut config = base.clone();
            config.method = method;
            config.protocol = with_level(&base.protocol, level)?;
            config.output_dir = sweep_dir.join(format!("{}_level{}", method.name(), level));
            let outcome = experiment::run_experiment(&config)?;
            write_run_outputs(&config, &outcome)?;
            print_outcome(&config, &outcome);
            rows.push(SummaryRow {
                level: level_label(&config.protocol),
                method: method.name().to_string(),
                mean_accuracy: outcome.summary.mean_accuracy,
            });
            curves
                .iter_mut()
                .find(|(m, _)| *m == method)
                .unwrap()
                .1
                .push((level, outcome.summary.mean_accuracy));
        }
    }

    fs::create_dir_all(&sweep_dir)?;
    let mut csv = Vec::new();
    emit_table(&rows, TableFormat::Csv, &mut csv)?;
    fs::write(sweep_dir.join("results.csv"), csv)?;
    let mut txt = Vec::new();
    emit_table(&rows, TableFormat::AlignedText, &mut txt)?;
    fs::write(sweep_dir.join("results.txt"), &txt)?;
    std::io::stdout().write_all(&txt)?;

    if levels.len() >= 2 {
        for (method, points) in &curves {
            let mut buf = Vec::new();
            plot_noise_curve(points, &mut buf)?;
            fs::write(sweep_dir.join(format!("curve_{}.csv", method.name())), buf)?;
        }
    }
    println!("sweep outputs written to {}", sweep_dir.display());
    Ok(())
}

fn cmd_dump(opts: &CommonOpts, count: usize, trial: usize) -> Result<()> {
    let config = load_config(opts)?;
    let data = experiment::build_trial_data(&config, trial)?;
    let result = experiment::solve_trial_data(&config, &data)?;
    let out_dir = config.output_dir.join(format!("decomposition_trial{trial}"));
    let files = dump_decomposition(&result, &data.y, data.image_dims, count, &out_dir)?;
    println!(
        "trial {trial}: converged {} after {} iterations; wrote {} images to {}",
        result.converged,
        result.iters_used,
        files.len(),
        out_dir.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(opts) => cmd_run(opts),
        Command::Sweep {
            opts,
            levels,
            methods,
        } => cmd_sweep(opts, levels, methods),
        Command::Dump { opts, count, trial } => cmd_dump(opts, *count, *trial),
    }
}
