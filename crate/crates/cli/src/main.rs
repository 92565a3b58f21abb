use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kahler_core::flow::{discretize, run_flow, FlowParams};
use kahler_core::runner::{self, Format, RunConfig};
use kahler_core::{FdSettings, ImmersionChart, KalError};

#[derive(Parser)]
#[command(name = "kal", version, about = "Kähler-angle verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List checks, immersions and targets.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Run identity checks on catalog examples.
    Verify {
        /// Glob over check ids.
        #[arg(long)]
        checks: String,
        /// Immersion id; repeat for several.
        #[arg(long = "example", required = true)]
        examples: Vec<String>,
        #[arg(long, default_value_t = 5)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tolerance override for every selected check.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        fd_step: f64,
        #[arg(long, default_value_t = 4)]
        fd_order: u8,
        /// Nodes per axis for domain integrals.
        #[arg(long, default_value_t = 32)]
        grid: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Kähler angles at one point.
    Angles {
        #[arg(long)]
        example: String,
        /// Comma-separated domain coordinates.
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Discrete volume flow on a periodic example.
    Flow {
        #[arg(long, default_value = "torus-graph")]
        example: String,
        #[arg(long)]
        eps: Option<f64>,
        /// lagrangian, tilted or holomorphic.
        #[arg(long)]
        winding: Option<String>,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        /// Explicit step size; default 0.1 · (shortest edge)².
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: String,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    List,
}

enum Failure {
    Config(String),
    Checks,
}

impl From<KalError> for Failure {
    fn from(e: KalError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn with_param(id: &str, key: &str, value: &str) -> String {
    let sep = if id.contains('?') { '&' } else { '?' };
    format!("{id}{sep}{key}={value}")
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Catalog { action: CatalogAction::List } => emit(&runner::catalog_listing(), None),
        Command::Verify { checks, examples, points, seed, tol, fd_step, fd_order, grid, out, format } => {
            let format: Format = format.parse()?;
            let config = RunConfig { checks, examples, points, seed, tolerance: tol, fd: FdSettings::new(fd_step, fd_order)?, grid };
            runner::validate(&config)?;
            let report = runner::run_catalog(&config)?;
            emit(&runner::render_report(&report, format)?, out.as_ref())?;
            if out.is_some() {
                let s = report.summary;
                eprintln!("pass {}  fail {}  skipped {}", s.pass, s.fail, s.skipped);
            }
            if report.exit_code() != 0 {
                return Err(Failure::Checks);
            }
            Ok(())
        }
        Command::Angles { example, at } => {
            let chart = ImmersionChart::from_id(&example)?;
            let p = at
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::Config(format!("bad coordinate '{s}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            if p.len() != chart.domain_dim() {
                return Err(Failure::Config(format!("expected {} coordinates, got {}", chart.domain_dim(), p.len())));
            }
            emit(&runner::angles_json(&chart, &p)?, None)
        }
        Command::Flow { example, eps, winding, grid, steps, step_size, out, format } => {
            let format: Format = format.parse()?;
            let mut id = example;
            if let Some(e) = eps {
                id = with_param(&id, "eps", &e.to_string());
            }
            if let Some(w) = winding {
                id = with_param(&id, "winding", &w);
            }
            let chart = ImmersionChart::from_id(&id)?;
            let d = discretize(&chart, [grid, grid])?;
            let params = FlowParams { step_size, max_steps: steps, ..FlowParams::default() };
            let (trace, _) = match run_flow(d, params) {
                Ok(t) => t,
                Err(e @ KalError::FlowDiverged(_)) => {
                    eprintln!("{e}");
                    return Err(Failure::Checks);
                }
                Err(e) => return Err(e.into()),
            };
            let text = match format {
                Format::Csv => runner::flow_csv(&trace)?,
                _ => runner::flow_json(&id, &trace),
            };
            emit(&text, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("KAL_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => runner::configure_threads(n),
            _ => {
                eprintln!("error: KAL_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
