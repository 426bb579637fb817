//! Command-line front end: simulate datasets, invert them, report, and run
//! the numerical oracles.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use cortifield::field::heat_series;
use cortifield::harness::io::{read_dataset, read_results, write_dataset, write_results};
use cortifield::harness::oracle::{
    compare_at_peak, fd_heat_oracle, relative_l2, simulate_spectrum, SpectrumOracleSettings,
};
use cortifield::harness::{invert_dataset, report};
use cortifield::{
    build_basis, linearize, simulate, transfer_spectrum, BoundaryDrive, CmcParams, DomainSpec, Error,
    ErrorClass, FilterSettings, SimConfig,
};

#[derive(Parser)]
#[command(name = "cortifield", version, about = "Estimate a diffusing excitability field from windowed spectra")]
struct Cli {
    /// Seed for every random draw (overrides the seed in a simulation config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Predict the next prior covariance as Q + R instead of D Q Dᵀ + R.
    #[arg(long, global = true)]
    paper_literal_prediction: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sequential inversion over a dataset.
    Invert {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a results bundle and write CSV/SVG maps.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Independent numerical checks.
    #[command(subcommand)]
    Oracle(Oracle),
}

#[derive(Subcommand)]
enum Oracle {
    /// Series heat solution against Crank–Nicolson.
    Heat(HeatCase),
    /// Analytic spectrum against a time-domain simulation.
    Spectrum(SpectrumCase),
}

#[derive(Clone, Copy, ValueEnum)]
enum HeatKind {
    /// φ₀ = sin t, φ₁ = 0, f = 0.
    Boundary,
    /// Zero boundaries, f = sin(πx/L).
    SingleMode,
    /// Constant 1 everywhere.
    Constant,
}

#[derive(Args)]
struct HeatCase {
    #[arg(long, value_enum, default_value = "boundary")]
    case: HeatKind,
    #[arg(long, default_value_t = 1.0)]
    length: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 64)]
    modes: usize,
    #[arg(long, default_value_t = 1.0 / 512.0)]
    dx: f64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    #[arg(long, default_value_t = 2.0)]
    t: f64,
}

#[derive(Args)]
struct SpectrumCase {
    /// Excitability log-gain of the column.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    /// Simulated seconds.
    #[arg(long, default_value_t = 2000.0)]
    duration: f64,
    /// Welch segment length in seconds.
    #[arg(long, default_value_t = 2.0)]
    segment: f64,
}

fn read_json(path: &Path) -> cortifield::Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value, path: &Path) -> cortifield::Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> cortifield::Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let mut v = read_json(&config)?;
            if let (Some(seed), Some(obj)) = (cli.seed, v.as_object_mut()) {
                obj.insert("seed".into(), seed.into());
            }
            let cfg: SimConfig = from_value(v, &config)?;
            let ds = simulate(&cfg)?;
            write_dataset(&ds, &out)?;
            println!(
                "wrote {} windows x {} channels to {} (fingerprint {})",
                ds.windows.len(),
                ds.manifest.channel_ids.len(),
                out.display(),
                ds.fingerprint()?
            );
        }
        Command::Invert { data, config, out } => {
            let mut settings: FilterSettings = from_value(read_json(&config)?, &config)?;
            settings.paper_literal_prediction |= cli.paper_literal_prediction;
            if cli.seed.is_some() {
                log::info!("inversion is deterministic; --seed has no effect");
            }
            let ds = read_dataset(&data)?;
            let (traj, bundle) = invert_dataset(&ds, &settings)?;
            write_results(&bundle, &out)?;
            let unconverged = traj.entries.iter().filter(|e| !e.report.converged).count();
            println!(
                "inverted {} windows: total explained variance {:.6}, {} not converged",
                traj.len(),
                bundle.total_explained_variance,
                unconverged
            );
        }
        Command::Report { results, data, out } => {
            let bundle = read_results(&results)?;
            let ds = read_dataset(&data)?;
            let summary = report::report(&bundle, &ds, &out)?;
            println!("total explained variance {:.6}", summary.total_explained_variance);
            if let Some(r) = summary.recovery {
                println!(
                    "field pearson {:.4}, hotspot agreement {:.1}%, g7 pearson {:.4}",
                    r.pearson,
                    100.0 * r.hotspot_agreement,
                    r.g7_pearson
                );
            }
        }
        Command::Oracle(Oracle::Heat(case)) => heat_oracle(&case)?,
        Command::Oracle(Oracle::Spectrum(case)) => spectrum_oracle(&case, cli.seed.unwrap_or(1))?,
    }
    Ok(())
}

fn heat_oracle(case: &HeatCase) -> cortifield::Result<()> {
    let domain = DomainSpec::interval(case.length, case.alpha);
    let length = case.length;
    let drive = match case.case {
        HeatKind::Boundary => BoundaryDrive {
            phi0: Box::new(f64::sin),
            phi1: Box::new(|_| 0.0),
            f0: Box::new(|_| 0.0),
        },
        HeatKind::SingleMode => BoundaryDrive {
            phi0: Box::new(|_| 0.0),
            phi1: Box::new(|_| 0.0),
            f0: Box::new(move |x| (std::f64::consts::PI * x / length).sin()),
        },
        HeatKind::Constant => BoundaryDrive {
            phi0: Box::new(|_| 1.0),
            phi1: Box::new(|_| 1.0),
            f0: Box::new(|_| 1.0),
        },
    };
    let basis = build_basis(domain, case.modes)?;
    let fd = fd_heat_oracle(&domain, &drive, case.dx, case.dt, case.t)?;
    let series = heat_series(&domain, &drive, &basis, case.t)?;
    let u: Vec<f64> = fd.x.iter().map(|&x| series.eval(x)).collect();
    let max_abs = u.iter().zip(&fd.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "t = {}: relative L2 {:.3e}, max abs {:.3e} on {} grid points",
        case.t,
        relative_l2(&u, &fd.u),
        max_abs,
        fd.x.len()
    );
    Ok(())
}

fn spectrum_oracle(case: &SpectrumCase, seed: u64) -> cortifield::Result<()> {
    let params = CmcParams::default();
    let sys = linearize(&params, case.theta)?;
    let settings = SpectrumOracleSettings {
        dt: case.dt,
        duration: case.duration,
        segment: case.segment,
        seed,
        ..SpectrumOracleSettings::default()
    };
    let welch = simulate_spectrum(&sys, &params, &settings)?;
    let freqs: Vec<f64> = welch.freqs_hz.iter().copied().filter(|f| (1.0..=60.0).contains(f)).collect();
    let analytic = transfer_spectrum(&sys, &params, &freqs)?;
    let cmp = compare_at_peak(&freqs, &analytic.power, &welch);
    println!(
        "peak {} Hz: analytic {:.6e}, simulated {:.6e}, relative error {:.3}% ({} segments)",
        cmp.peak_freq_hz,
        cmp.analytic,
        cmp.simulated,
        100.0 * cmp.relative_error,
        welch.segments
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::Format => 4,
            })
        }
    }
}
