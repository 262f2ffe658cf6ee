//! Command-line conic fitting: fit point files, run configured Monte Carlo
//! experiments, verify the installation.

mod config;
mod experiment;
mod points;
mod report;
mod selftest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use conicfit::pipeline::{
    fit_with_reweight_opts, generic_fit_with, FitOptions, GenericFit, Weighting,
};
use conicfit::typed::{project_to_parabola, type_constrained_mean, TypeTarget};
use conicfit::{ConicClass, Error as FitError};

use config::ExperimentConfig;
use report::FitReport;

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
    fn from_fit(err: FitError) -> Self {
        let code = match err {
            FitError::Underdetermined { .. } | FitError::NoData | FitError::NonFinite(_) => {
                EXIT_INPUT
            }
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TypeArg {
    Ellipse,
    Hyperbola,
    Parabola,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
enum FormatArg {
    #[default]
    Json,
    Csv,
}

#[derive(Parser)]
#[command(
    name = "conicfit",
    version,
    about = "Unbiased conic fitting with confidence bands, type-specific estimation and error propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a conic to a CSV point file (x,y per row, optional header).
    Fit {
        /// Point file path.
        file: PathBuf,
        /// Skip the reweighting pass (plain unweighted fit).
        #[arg(long)]
        no_reweight: bool,
        /// Weight by gradients at the measured points (biased baseline).
        #[arg(long)]
        sampson: bool,
        /// Skip the curvature-bias correction.
        #[arg(long)]
        no_curvature_correction: bool,
        /// Add a type-specific fit of the requested class.
        #[arg(long = "type", value_enum)]
        type_target: Option<TypeArg>,
        /// Output format.
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment described by a JSON config.
    Experiment {
        /// Config file path.
        config: PathBuf,
    },
    /// Run the built-in verification checks.
    Selftest {
        #[arg(long, hide = true)]
        no_curvature_correction: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Fit {
            file,
            no_reweight,
            sampson,
            no_curvature_correction,
            type_target,
            format,
            output,
        } => {
            if no_reweight && sampson {
                return Err(CliError::config(
                    "--no-reweight and --sampson are mutually exclusive",
                ));
            }
            let text = std::fs::read_to_string(&file)
                .map_err(|e| CliError::input(format!("{}: {e}", file.display())))?;
            let points = points::parse_points(&text).map_err(|e| CliError::input(e.to_string()))?;

            let options = FitOptions {
                curvature_correction: !no_curvature_correction,
            };
            let mut warnings = Vec::new();
            let fit: GenericFit = if sampson {
                let prelim = generic_fit_with(&points, Weighting::Unweighted, options)
                    .map_err(CliError::from_fit)?;
                let w = conicfit::conic::sampson_weights(&points, &prelim.g0)
                    .map_err(CliError::from_fit)?;
                generic_fit_with(&points, Weighting::Sampson(w), options)
                    .map_err(CliError::from_fit)?
            } else if no_reweight {
                generic_fit_with(&points, Weighting::Unweighted, options)
                    .map_err(CliError::from_fit)?
            } else {
                let result =
                    fit_with_reweight_opts(&points, options).map_err(CliError::from_fit)?;
                if result.used_fallback {
                    warnings.push(
                        "preliminary fit had no projection frame; kept the unweighted fit".into(),
                    );
                }
                result.final_fit
            };

            let mut report = FitReport::from_fit(&fit, warnings);
            if let Some(target) = type_target {
                let pf = project_to_parabola(&fit).map_err(CliError::from_fit)?;
                report = match target {
                    TypeArg::Parabola => report.with_parabolic(&pf),
                    TypeArg::Ellipse => {
                        let post = type_constrained_mean(&fit, &pf, TypeTarget::Ellipse)
                            .map_err(CliError::from_fit)?;
                        report.with_truncated(&pf, &post)
                    }
                    TypeArg::Hyperbola => {
                        let post = type_constrained_mean(&fit, &pf, TypeTarget::Hyperbola)
                            .map_err(CliError::from_fit)?;
                        report.with_truncated(&pf, &post)
                    }
                };
            }
            match fit.classify() {
                ConicClass::Ellipse | ConicClass::Hyperbola => {
                    match conicfit::center_with_errors(&fit) {
                        Ok(est) => report = report.with_center(&est),
                        Err(e) => report.warnings.push(format!("center not propagated: {e}")),
                    }
                }
                _ => {}
            }

            let rendered = match format {
                FormatArg::Json => report.to_json(),
                FormatArg::Csv => report.to_csv(),
            };
            match output {
                Some(path) => std::fs::write(&path, rendered)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
                None => println!("{rendered}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::config(format!("{}: {e}", config.display())))?;
            let parsed = ExperimentConfig::parse(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", config.display())))?;
            let ensemble = experiment::run(&parsed).map_err(|e| CliError {
                code: if e.config {
                    EXIT_CONFIG
                } else {
                    EXIT_NUMERICAL
                },
                message: e.message,
            })?;
            println!(
                "experiment complete: {} trials, {} failed",
                ensemble.summary.n_trials, ensemble.summary.n_failed
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest {
            no_curvature_correction,
        } => {
            if selftest::run(!no_curvature_correction) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(EXIT_INPUT))
            }
        }
    }
}
