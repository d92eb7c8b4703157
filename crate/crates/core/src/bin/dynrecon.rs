use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use dynrecon::checks::run_checks;
use dynrecon::config::{EmbeddingKind, ExperimentConfig, Overrides};
use dynrecon::experiment::{run_forecast, run_lyapunov, run_markov, write_forecast, write_lyapunov, write_markov};
use dynrecon::output::OutputDir;
use dynrecon::systems::SystemKind;
use dynrecon::Error;

#[derive(Parser)]
#[command(name = "dynrecon", version, about = "Reconstruct, forecast and analyse dynamical systems from time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: results/<command>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    system: Option<SystemArg>,
    #[arg(long, global = true, value_enum)]
    embedding: Option<EmbeddingArg>,
    /// Suppress the summary on stdout
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Direct and iterative forecast error curves
    Forecast,
    /// Lyapunov spectrum of the system (and of a fitted model)
    Lyapunov,
    /// Ulam transition matrix and stationary distribution
    Markov,
    /// Invariant suite
    Checks,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Forecast => "forecast",
            Command::Lyapunov => "lyapunov",
            Command::Markov => "markov",
            Command::Checks => "checks",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Torus,
    L63,
    L63rot,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingArg {
    Delay,
    Reservoir,
}

enum Failure {
    Run(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(Error::from)?),
        None => None,
    };
    let overrides = Overrides {
        system: cli.system.map(|s| match s {
            SystemArg::Torus => SystemKind::TorusRotation,
            SystemArg::L63 => SystemKind::Lorenz63,
            SystemArg::L63rot => SystemKind::L63Rot,
        }),
        embedding: cli.embedding.map(|e| match e {
            EmbeddingArg::Delay => EmbeddingKind::Delay,
            EmbeddingArg::Reservoir => EmbeddingKind::Reservoir,
        }),
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let config = ExperimentConfig::load(text.as_deref(), &overrides)?;
    let name = cli.command.name();
    let root = config.out.clone().unwrap_or_else(|| PathBuf::from("results").join(name));
    let mut out = OutputDir::create(root)?;
    let mut lines = Vec::new();
    let mut failed = false;
    match cli.command {
        Command::Forecast => {
            let r = run_forecast(&config)?;
            write_forecast(&r, &mut out)?;
            let s = &r.summary;
            lines.push(format!("delta {:.3e}, derivative norm {:.3}", s.delta, s.derivative_norm));
            lines.push(format!(
                "direct: max {:.3e}, last {:.4}, plateau {:.4}",
                s.direct_max, s.direct_last, s.plateau_direct
            ));
            lines.push(format!("iterative plateau {:.4}, diverged {}", s.plateau_iter, s.diverged));
            if let Some(g) = &s.growth {
                lines.push(format!(
                    "growth {:.5} per step over {:?} ({:.4} per time unit)",
                    g.slope,
                    g.window,
                    g.slope / config.system.dt
                ));
            }
            lines.push(format!("bound violations: {}", s.bound_violations.len()));
        }
        Command::Lyapunov => {
            let r = run_lyapunov(&config)?;
            write_lyapunov(&r, &mut out)?;
            lines.push(format!("exponents per time unit: {:?}", r.estimate.per_time));
            if let Some(g) = &r.stability {
                lines.push(format!("model exponents: {:?}", g.model.per_time));
                lines.push(format!("gap {:.4}, containment {:.4}", g.gap, g.containment));
            }
        }
        Command::Markov => {
            let r = run_markov(&config)?;
            write_markov(&r, &mut out)?;
            let s = &r.summary;
            lines.push(format!("{} of {} cells occupied, column defect {:.1e}", s.occupied, s.cells, s.column_defect));
            lines.push(format!(
                "stationary residual {:.1e}, TV to occupation {:.4}, TV to uniform {:.4}",
                s.stationary_residual, s.tv_occupation, s.tv_uniform
            ));
            if !s.zero_columns.is_empty() {
                lines.push(format!("zero columns: {:?}", s.zero_columns));
            }
        }
        Command::Checks => {
            let r = run_checks(&config)?;
            out.write_json("checks.json", &r)?;
            lines.extend(r.lines());
            failed = !r.passed();
        }
    }
    out.finish(name, &config, started.elapsed().as_secs_f64())?;
    if !cli.quiet {
        for l in lines {
            println!("{l}");
        }
    }
    if failed {
        Err(Failure::Checks)
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(3),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
