use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dlra_experiments::error::{config_error, EXIT_OK};
use dlra_experiments::{execute, ExperimentConfig, ExperimentError, ExperimentKind};

/// Low-rank parabolic solver experiments.
///
/// Exit codes: 0 success, 1 internal error, 2 configuration error,
/// 3 integration breakdown, 4 suite violation.
#[derive(Parser, Debug)]
#[command(name = "dlra", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one problem and write its trajectory.
    Solve(Common),
    /// Mesh-refinement study against a fine-mesh reference.
    Converge(Common),
    /// Perturbation study of the initial state or the source.
    Stability(Common),
    /// Seeded geometry suites; runs with defaults when no config is given.
    Curvature(Common),
    /// Static diagnostics of a problem and its initial point.
    Diagnose(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "DLRA_THREADS")]
    threads: Option<usize>,
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &Common) {
        match self {
            Command::Solve(c) => (ExperimentKind::Solve, c),
            Command::Converge(c) => (ExperimentKind::Convergence, c),
            Command::Stability(c) => (ExperimentKind::Stability, c),
            Command::Curvature(c) => (ExperimentKind::Curvature, c),
            Command::Diagnose(c) => (ExperimentKind::Diagnostics, c),
        }
    }
}

fn load(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if kind == ExperimentKind::Curvature => ExperimentConfig::new(kind),
        None => return Err(config_error("--config is required")),
    };
    if cfg.kind != kind {
        return Err(config_error(format!(
            "config describes a {:?} experiment, not {kind:?}",
            cfg.kind
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), ExperimentError> {
    let (kind, args) = cli.command.parts();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(config_error("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(format!("thread pool: {e}")))?;
    }
    let cfg = load(kind, args)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("dlra-out"));
    let start = Instant::now();
    let result = execute(&cfg, &dir);
    eprintln!("elapsed {:.3} s", start.elapsed().as_secs_f64());
    for path in result? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
