use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hscale::error::{Error, Result};
use hscale::harness::report::{
    concentration_csv, concentration_summary, distance_csv, effective_dimension_csv, gnuplot_stub, rate_csv,
    rate_summary, write_file, write_json,
};
use hscale::harness::study::{
    distance_sweep, effective_dimension_sweep, log_grid, run_audit, run_concentration_study, run_rate_study,
};
use hscale::harness::{Config, Experiment};
use hscale::rkhs::{Basis, KernelModel};
use hscale::smoothness::fixed_radius;

#[derive(Parser)]
#[command(name = "hscale", version, about = "Tikhonov regularization in Hilbert scales: rate and concentration studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to plan.output_path, then `report`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo convergence-rate study over the plan's sample sizes.
    RateStudy {
        #[command(flatten)]
        common: Common,
        /// Also write a gnuplot script for the CSV.
        #[arg(long)]
        gnuplot_stub: bool,
    },
    /// Empirical quantiles of the perturbation terms against their bounds.
    Concentration {
        #[command(flatten)]
        common: Common,
        /// Comma-separated confidence levels; defaults to plan.eta.
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
    },
    /// Effective dimension N(λ) on a logarithmic grid.
    EffectiveDim {
        /// Kernel spectrum, `poly:b` for t_j = j^(-1/b).
        #[arg(long, default_value = "poly:0.5")]
        spectrum: String,
        /// `lo:hi:count`, log-spaced.
        #[arg(long, default_value = "1e-4:1:20")]
        lambda_grid: String,
        #[arg(long, default_value_t = 512)]
        dim: usize,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Distance functions of the synthetic truth on a grid of radii.
    DistanceFn {
        #[command(flatten)]
        common: Common,
        /// `lo:hi:count`; defaults to four decades below the fixed radius.
        #[arg(long)]
        r_grid: Option<String>,
    },
    /// Stability, Bernstein and decay-model audits.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Config(format!("grid must be lo:hi:count, got `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    log_grid(lo, hi, count)
}

fn parse_spectrum(text: &str, dim: usize) -> Result<KernelModel> {
    match text.split_once(':') {
        Some(("poly", b)) => {
            let b: f64 = b.parse().map_err(|_| Error::Config(format!("bad spectrum exponent `{b}`")))?;
            KernelModel::power_decay(Basis::Cosine, dim, b)
        }
        _ => Err(Error::Config(format!("spectrum must be poly:b, got `{text}`"))),
    }
}

fn load(common: &Common) -> Result<(Experiment, PathBuf)> {
    let config = Config::load(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| config.plan.output_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("report"));
    Ok((Experiment::from_config(config)?, out))
}

/// Returns whether the verdict passed.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::RateStudy { common, gnuplot_stub: stub } => {
            let (exp, out) = load(&common)?;
            let report = run_rate_study(&exp)?;
            write_file(&out, "rate_study.csv", &rate_csv(&report)?)?;
            write_json(&out, "rate_study.json", &rate_summary(&report))?;
            if stub {
                write_file(&out, "rate_study.gp", gnuplot_stub("rate_study.csv").as_bytes())?;
            }
            println!(
                "{}: fitted slope {:.4}, theoretical {:.4}",
                report.verdict(),
                report.fit.map_or(f64::NAN, |f| f.slope),
                report.theoretical_slope
            );
            Ok(report.passes())
        }
        Command::Concentration { common, eta } => {
            let (exp, out) = load(&common)?;
            let etas = if eta.is_empty() { vec![exp.config.plan.eta] } else { eta };
            let report = run_concentration_study(&exp, &etas)?;
            write_file(&out, "concentration.csv", &concentration_csv(&report)?)?;
            write_json(&out, "concentration.json", &concentration_summary(&report))?;
            println!("{}", if report.passes() { "pass" } else { "fail" });
            Ok(report.passes())
        }
        Command::EffectiveDim { spectrum, lambda_grid, dim, out } => {
            let kernel = parse_spectrum(&spectrum, dim)?;
            let rows = effective_dimension_sweep(&kernel, &parse_grid(&lambda_grid)?);
            write_file(&out, "effective_dim.csv", &effective_dimension_csv(&rows)?)?;
            Ok(rows.iter().all(|r| r.n_lambda <= r.bound_kappa2_over_lambda))
        }
        Command::DistanceFn { common, r_grid } => {
            let (exp, out) = load(&common)?;
            let radii = match r_grid {
                Some(text) => parse_grid(&text)?,
                None => {
                    let r_bar = fixed_radius(exp.source.q, &exp.truth, &exp.source.f_bar, &exp.scale)?;
                    log_grid(r_bar * 1e-4, r_bar, 41)?
                }
            };
            let rows = distance_sweep(&exp, &radii)?;
            let holds = rows.iter().all(|r| r.holds);
            write_file(&out, "distance_fn.csv", &distance_csv(&rows)?)?;
            write_json(
                &out,
                "distance_fn.json",
                &json!({ "verdict": if holds { "pass" } else { "fail" }, "config_hash": exp.config.hash() }),
            )?;
            Ok(holds)
        }
        Command::Audit { common, draws } => {
            let (exp, out) = load(&common)?;
            let report = run_audit(&exp, draws)?;
            let mut value = serde_json::to_value(&report).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            value["verdict"] = json!(if report.passes() { "pass" } else { "fail" });
            write_json(&out, "audit.json", &value)?;
            Ok(report.passes())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
