use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pba::commands;
use pba::config::{ExperimentConfig, SolverChoice};
use pba::{CliError, Outcome};
use pba_core::gradcheck::GradcheckConfig;

/// Photometric bundle adjustment experiments on synthetic scenes.
///
/// Exit codes: 0 success, 1 gradient check failure, 2 unusable
/// configuration or infeasible scene, 3 a solver diverged.
#[derive(Debug, Parser)]
#[command(name = "pba", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene: one PGM per frame plus scene.json.
    Generate(Common),
    /// Perturb the ground truth and run the solvers from it.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Scene directory written by `generate` (default: the output
        /// directory).
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, value_enum)]
        solver: Option<SolverChoice>,
        /// Standard deviation of the noise added to every parameter.
        #[arg(long)]
        sigma: Option<f64>,
        /// Convergence threshold on the largest anchor update, px.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compare analytic Jacobians with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = GradcheckConfig::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = GradcheckConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = GradcheckConfig::default().tolerance)]
        tolerance: f64,
        #[arg(long, default_value_t = GradcheckConfig::default().step)]
        step: f64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene seed for `generate`, noise seed for `solve`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sequential evaluation and zero timings, for byte-identical outputs.
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        config.deterministic |= self.deterministic;
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Generate(common) => {
            let mut config = common.load()?;
            if let Some(seed) = common.seed {
                config.scene.seed = seed;
            }
            commands::generate(&config, &mut stdout)
        }
        Command::Solve {
            common,
            scene,
            solver,
            sigma,
            threshold,
        } => {
            let mut config = common.load()?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if scene.is_some() {
                config.dataset = scene;
            }
            if let Some(solver) = solver {
                config.solver = solver;
            }
            if let Some(sigma) = sigma {
                config.sigma = sigma;
            }
            if let Some(threshold) = threshold {
                config.threshold_px = threshold;
            }
            commands::solve(&config, &mut stdout)
        }
        Command::Gradcheck {
            samples,
            seed,
            tolerance,
            step,
        } => {
            let config = GradcheckConfig {
                samples,
                seed,
                tolerance,
                step,
            };
            Ok(commands::gradcheck(&config, &mut stdout))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
