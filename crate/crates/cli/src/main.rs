//! `qcd`: runs the change-detection experiments and writes CSV/JSON
//! artifacts plus a run manifest into the output directory.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands::Outputs;
use crate::config::Config;
use crate::error::CliError;
use crate::manifest::RunManifest;

#[derive(Parser)]
#[command(name = "qcd", version, about = "Quickest change detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Use the sample sizes of the published experiments.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Large-kappa threshold and cost approximations over the kappa grid.
    Approx,
    /// Monte-Carlo CUSUM threshold sweep, optima and shifted curves.
    Sweep,
    /// Actor-critic training of the logistic threshold policy.
    TrainAc,
    /// Gradient statistics and integrated objective over a threshold grid.
    ProfileAc,
    /// Q-learning, policy extraction and the Jacobian diagnostic.
    TrainQ,
    /// Cost of the learned threshold against CUSUM* and the Shiryaev test.
    EvalPolicy,
    /// Batch-means covariance over independent Q-learning replicas.
    Diagnose,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Approx => "approx",
            Self::Sweep => "sweep",
            Self::TrainAc => "train-ac",
            Self::ProfileAc => "profile-ac",
            Self::TrainQ => "train-q",
            Self::EvalPolicy => "eval-policy",
            Self::Diagnose => "diagnose",
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Config::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    if cli.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(CliError::Config)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<RunManifest, CliError> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;

    let start = Instant::now();
    let mut out = Outputs::new(&cli.out);
    match cli.command {
        Command::Approx => commands::approx(&cfg, &mut out),
        Command::Sweep => commands::sweep(&cfg, &mut out),
        Command::TrainAc => commands::train_actor_critic(&cfg, &mut out),
        Command::ProfileAc => commands::profile_actor_critic(&cfg, &mut out),
        Command::TrainQ => commands::train_q(&cfg, &mut out),
        Command::EvalPolicy => commands::eval_policy(&cfg, &mut out),
        Command::Diagnose => commands::diagnose(&cfg, &mut out),
    }?;
    let manifest = RunManifest::new(cli.command.name(), &cfg, cli.paper_scale, out, start.elapsed());
    manifest.write(&cli.out)?;
    Ok(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(m) => {
            println!(
                "{}: wrote {} files to {} in {:.1}s",
                m.subcommand,
                m.outputs.len(),
                cli.out.display(),
                m.wall_clock_secs
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qcd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
