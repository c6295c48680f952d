use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dcgrid::report::{self, AnalyzeOptions};
use dcgrid::scenario::parse_scenario;
use dcgrid::sim::{run, ScenarioSpec};
use dcgrid::{Error, Result};

/// Analysis and simulation of DC microgrids under compromised
/// voltage/current secondary control.
#[derive(Parser)]
#[command(name = "dcgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form steady-state report.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long = "gamma-v")]
        gamma_v: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Run the scenario timeline; writes trace.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dcgrid-out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Largest theta meeting an admissible voltage deviation.
    DesignTheta {
        #[command(flatten)]
        common: Common,
        #[arg(long = "gamma-v")]
        gamma_v: Option<f64>,
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Admissible omega interval at a given theta (critical mode).
    OmegaRange {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long)]
        omega: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or one of the bundled names case1, case2, case3.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn emit<T: Serialize + std::fmt::Display>(value: &T, format: Format) -> Result<()> {
    match format {
        Format::Text => print!("{value}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?),
    }
    Ok(())
}

fn gamma(spec: &ScenarioSpec, flag: Option<f64>) -> Result<f64> {
    flag.or(spec.gamma_v)
        .ok_or_else(|| Error::invalid("gamma_v", "pass --gamma-v or set analysis.gamma_v in the scenario"))
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Analyze { common, gamma_v, theta, omega } => {
            let spec = parse_scenario(&common.scenario)?;
            let opts = AnalyzeOptions {
                gamma_v: gamma_v.or(spec.gamma_v),
                theta,
                omega,
            };
            let r = report::analyze(&spec.name, &spec.model, spec.controller.mode, spec.controller.omega, &opts)?;
            emit(&r, common.format)?;
        }
        Command::Simulate { common, out, dt } => {
            let mut spec = parse_scenario(&common.scenario)?;
            if let Some(dt) = dt {
                spec.dt = dt;
            }
            let trace = run(&spec)?;
            fs::create_dir_all(&out)?;
            trace.write_csv(BufWriter::new(fs::File::create(out.join("trace.csv"))?))?;
            let summary = trace.summary_json()?;
            fs::write(out.join("summary.json"), &summary)?;
            match common.format {
                Format::Json => println!("{summary}"),
                Format::Text => {
                    for p in &trace.phases {
                        println!(
                            "phase {} [{:.3}, {:.3}] s  theta {}  omega {}  settled {}  MVDR {:.6}  critical MVDR {:.6}  MCDR {:.6}{}",
                            p.index,
                            p.start,
                            p.end,
                            p.theta,
                            p.omega,
                            p.settled,
                            p.report.mvdr,
                            p.critical_mvdr,
                            p.report.mcdr,
                            p.ordinary_mcdr.map(|m| format!("  ordinary MCDR {m:.2e}")).unwrap_or_default()
                        );
                    }
                    println!("wrote {}", out.display());
                }
            }
            if !trace.all_settled() {
                eprintln!("error: at least one phase did not settle");
                return Ok(false);
            }
        }
        Command::DesignTheta { common, gamma_v, omega } => {
            let spec = parse_scenario(&common.scenario)?;
            let g = gamma(&spec, gamma_v)?;
            let r = report::design_theta(&spec.model, spec.controller.mode, omega.unwrap_or(spec.controller.omega), g)?;
            emit(&r, common.format)?;
        }
        Command::OmegaRange { common, theta, omega } => {
            let spec = parse_scenario(&common.scenario)?;
            let r = report::omega_range(&spec.model, spec.controller.mode, omega.unwrap_or(spec.controller.omega), theta)?;
            emit(&r, common.format)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
