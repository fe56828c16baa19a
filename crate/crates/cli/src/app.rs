//! Command-line surface: argument parsing, config loading, subcommand
//! dispatch, output routing, and exit-code policy (2 for usage and
//! configuration problems, 1 for failed checks or runtime errors).

use crate::config::{self, Config};
use crate::experiments;
use crate::io;
use crate::report::{CheckResult, Report};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lakesim_core::calculus::{stream_velocity, weighted_div_residual};
use lakesim_core::dynamics::run_path;
use lakesim_core::noise::validate_basis;
use lakesim_core::solver::{solve_stream, EllipticOperator};
use lakesim_core::SobolevIndex;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "lakesim",
    about = "Pseudo-spectral simulator and verification harness for stochastically \
             transported vorticity over variable depth on the periodic unit square",
    after_help = config::KEY_HELP
)]
pub struct Cli {
    /// Configuration file (key = value lines); defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override the Brownian seed from the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Write outputs into this directory instead of stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory and emit per-step diagnostics.
    Run,
    /// Run the invariant suite and report every check.
    Invariants,
    /// Viscous-cascade convergence study: level gap table and trend.
    Cascade,
    /// Continuity-in-initial-conditions statistic over Monte Carlo paths.
    Continuity {
        /// Perturbation size (defaults to the configured epsilon).
        #[arg(long, value_name = "EPS")]
        epsilon: Option<f64>,
    },
    /// Validate the configured noise basis and print its report.
    ValidateNoise,
    /// Solve the stream equation for the initial vorticity once.
    SolveStream,
}

/// Runs the parsed command line to an exit code, printing errors to
/// stderr. Configuration problems exit 2; check failures and runtime
/// errors exit 1.
pub fn execute(cli: &Cli) -> ExitCode {
    let config = match load_config(cli) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli, &config) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            config::parse_config(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.display().to_string();
    }
    Ok(config)
}

fn dispatch(cli: &Cli, config: &Config) -> Result<ExitCode> {
    match &cli.command {
        Command::Run => run_command(config),
        Command::Invariants => {
            report_command(config, "invariants.csv", experiments::invariant_suite(config)?)
        }
        Command::Cascade => cascade_command(config),
        Command::Continuity { epsilon } => {
            continuity_command(config, epsilon.unwrap_or(config.epsilon))
        }
        Command::ValidateNoise => validate_noise_command(config),
        Command::SolveStream => solve_stream_command(config),
    }
}

/// Prints to stdout, or writes `file_name` under the configured output
/// directory when one is set.
fn emit(config: &Config, file_name: &str, content: &str) -> Result<()> {
    if config.out_dir.is_empty() {
        print!("{content}");
    } else {
        let dir = Path::new(&config.out_dir);
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        std::fs::write(dir.join(file_name), content)
            .with_context(|| format!("writing {}", dir.join(file_name).display()))?;
    }
    Ok(())
}

fn run_command(config: &Config) -> Result<ExitCode> {
    let model = config.build_model()?;
    let bath = config.build_bathymetry()?;
    let omega0 = config.build_initial(&bath)?;
    let path = config.build_path(model.basis().count())?;
    let record = run_path(&model, &config.run_config(), &path, &omega0)?;
    emit(config, "diagnostics.csv", &io::diagnostics_csv(&record.rows))?;
    if !config.out_dir.is_empty() {
        // Everything needed to replay this trajectory bit for bit: the
        // raw (pre-ingestion) initial vorticity, the Brownian table, and
        // the end state to compare against.
        let dir = Path::new(&config.out_dir);
        io::write_snapshot(&dir.join("initial.snap"), 0.0, &[omega0])?;
        io::write_snapshot(
            &dir.join("final.snap"),
            record.end_state.t(),
            std::slice::from_ref(record.end_state.omega()),
        )?;
        path.save(&dir.join("noise.path"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn report_command(config: &Config, file_name: &str, report: Report) -> Result<ExitCode> {
    emit(config, file_name, &report.to_csv())?;
    if report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed checks: {}", report.failed_names().join(", "));
        Ok(ExitCode::from(1))
    }
}

fn cascade_command(config: &Config) -> Result<ExitCode> {
    let outcome = experiments::experiment_viscous_convergence(config)?;
    let mut csv = io::gaps_csv(&outcome.gaps);
    let _ = writeln!(csv, "# worst consecutive ratio = {}", outcome.worst_ratio);
    emit(config, "cascade.csv", &csv)?;
    if outcome.trend_ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "cascade trend violated: worst consecutive gap ratio {} > 1.1",
            outcome.worst_ratio
        );
        Ok(ExitCode::from(1))
    }
}

fn continuity_command(config: &Config, epsilon: f64) -> Result<ExitCode> {
    let outcome = experiments::experiment_ic_continuity(config, epsilon)?;
    let mut report = Report::default();
    if outcome.degenerate {
        report.push(CheckResult::upper(
            "identical-paths-gap",
            outcome.max_difference,
            1e-12,
        ));
    } else {
        report.push(CheckResult::upper(
            "continuity-statistic",
            outcome.mean,
            outcome.bound,
        ));
    }
    let mut csv = report.to_csv();
    if !outcome.degenerate {
        let _ = writeln!(csv, "# standard error = {}", outcome.std_error);
        let _ = writeln!(csv, "# damping constant = {}", outcome.constant_used);
        for (scale, mean) in &outcome.sensitivity {
            let _ = writeln!(csv, "# damping x {scale}: mean = {mean}");
        }
    }
    emit(config, "continuity.csv", &csv)?;
    if report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "continuity statistic {} exceeds bound {}",
            outcome.mean, outcome.bound
        );
        Ok(ExitCode::from(1))
    }
}

fn validate_noise_command(config: &Config) -> Result<ExitCode> {
    let bath = config.build_bathymetry()?;
    let basis = config.build_basis(&bath)?;
    match validate_basis(&basis, SobolevIndex::new(config.sobolev_k)?) {
        Ok(report) => {
            let text = format!(
                "fields,{}\nmax_divergence_residual,{}\nfirst_order_constant,{}\n\
                 second_order_constant,{}\nsup_norm_sum,{}\n",
                basis.count(),
                report.max_divergence_residual,
                report.first_order_constant,
                report.second_order_constant,
                report.sup_norm_sum,
            );
            emit(config, "noise.csv", &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Err(err) => {
            eprintln!("noise basis validation failed: {err}");
            Ok(ExitCode::from(1))
        }
    }
}

fn solve_stream_command(config: &Config) -> Result<ExitCode> {
    let bath = config.build_bathymetry()?;
    let omega0 = config.build_initial(&bath)?;
    let op = EllipticOperator::new(bath.clone());
    let (psi, report) = solve_stream(&op, &omega0, config.solver_tolerance)?;
    let u = stream_velocity(&psi, &bath);
    let text = format!(
        "iterations,{}\nfinal_relative_residual,{}\nconverged,{}\ndivergence_residual,{}\n",
        report.iterations,
        report.final_relative_residual,
        report.converged,
        weighted_div_residual(&u, &bath),
    );
    emit(config, "stream.csv", &text)?;
    if !config.out_dir.is_empty() {
        let dir = Path::new(&config.out_dir);
        let (u1, u2) = u.into_components();
        io::write_snapshot(&dir.join("stream.snap"), 0.0, &[psi, u1, u2])?;
    }
    Ok(if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
