use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epiforecast::harness::{
    emit_fanchart, emit_report, fit_models, load_inputs, load_report, run_experiment,
    EvaluationReport, ExperimentConfig,
};
use epiforecast::Result;

#[derive(Parser)]
#[command(
    name = "epiforecast",
    version,
    about = "Fit, forecast and evaluate surveillance count models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured models on the training window.
    Fit(RunArgs),
    /// Produce forecasts and write their fan-chart quantiles.
    Forecast(RunArgs),
    /// Forecast, score and compare all models; write the full report.
    Evaluate(RunArgs),
    /// Rewrite the tables of an existing report.json.
    Report {
        /// Path to report.json.
        report: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Contact matrix CSV, overriding the config.
    #[arg(long)]
    contacts: Option<PathBuf>,
}

/// Whether some models failed while others produced output.
struct Partial(bool);

fn setup(args: &RunArgs) -> Result<ExperimentConfig> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| epiforecast::Error::Config(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn print_summary(report: &EvaluationReport) {
    for m in &report.models {
        let scores: Vec<String> = m
            .scores
            .iter()
            .map(|s| format!("{}={:.4}", s.name, s.mean))
            .collect();
        println!("{:<20} {}", m.name, scores.join(" "));
        for r in &m.multivariate {
            println!(
                "{:<20}   {} {} mdss={:.4} logds={:.4}",
                "",
                r.origin,
                r.target.name(),
                r.mdss,
                r.logds
            );
        }
    }
    for f in &report.failures {
        eprintln!("failed: {}: {}", f.model, f.message);
    }
}

fn written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<Partial> {
    match cli.command {
        Command::Fit(args) => {
            let cfg = setup(&args)?;
            let (data, contacts) = load_inputs(&cfg, args.contacts.as_deref())?;
            let report = fit_models(&cfg, &data, contacts.as_ref())?;
            for f in &report.fits {
                println!(
                    "{:<20} params={:<3} loglik={:.2} aic={:.2}",
                    f.model, f.n_params, f.loglik, f.aic
                );
            }
            for f in &report.failures {
                eprintln!("failed: {}: {}", f.model, f.message);
            }
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("fits.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            written(&[path]);
            Ok(Partial(!report.failures.is_empty()))
        }
        Command::Forecast(args) => {
            let cfg = setup(&args)?;
            let (data, contacts) = load_inputs(&cfg, args.contacts.as_deref())?;
            let report = run_experiment(&cfg, &data, contacts.as_ref())?;
            written(&[emit_fanchart(&report, &cfg.output_dir)?]);
            Ok(Partial(!report.failures.is_empty()))
        }
        Command::Evaluate(args) => {
            let cfg = setup(&args)?;
            let (data, contacts) = load_inputs(&cfg, args.contacts.as_deref())?;
            let report = run_experiment(&cfg, &data, contacts.as_ref())?;
            print_summary(&report);
            written(&emit_report(&report, &cfg.output_dir)?);
            Ok(Partial(!report.failures.is_empty()))
        }
        Command::Report { report, out_dir } => {
            let loaded = load_report(&report)?;
            let dir = out_dir
                .or_else(|| report.parent().map(Path::to_path_buf))
                .unwrap_or_default();
            print_summary(&loaded);
            written(&emit_report(&loaded, dir)?);
            Ok(Partial(!loaded.failures.is_empty()))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Partial(false)) => ExitCode::SUCCESS,
        Ok(Partial(true)) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
