use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tudm_cli::config::REGISTRY;
use tudm_cli::{commands, ConfigSources, Outcome, CliError};

#[derive(Parser, Debug)]
#[command(name = "tudm", version, about = "Time-unconditional diffusion toy experiments")]
#[command(after_long_help = registry_help())]
struct Cli {
    /// Flat `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump a schedule and audit adjacent shells; exit 2 on mixing
    ScheduleAnalyze,
    /// Monte-Carlo and algebraic checks of the shell geometry
    VerifyProps,
    /// Train a time-unconditional noise predictor
    Train,
    /// Generate samples from a checkpoint
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Use raw model outputs in the orthogonal sampler
        #[arg(long)]
        no_project_eps: bool,
    },
    /// Evaluate generated samples against a clean reference
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Train and evaluate the orthogonal variant over time spacings
    SweepDelta {
        /// Use raw model outputs in the orthogonal sampler
        #[arg(long)]
        no_project_eps: bool,
    },
}

fn registry_help() -> String {
    let mut s = String::from("Configuration keys (default in brackets):\n");
    for (k, v, d) in REGISTRY {
        s.push_str(&format!("  {k:<22} {d} [{v}]\n"));
    }
    s
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut sources = ConfigSources {
        file: cli.config,
        overrides: cli.overrides,
        seed: cli.seed,
        out: cli.out,
    };
    if let Command::Sample { no_project_eps: true, .. } | Command::SweepDelta { no_project_eps: true } =
        &cli.command
    {
        sources.overrides.push("sample.project_eps=false".into());
    }
    let cfg = sources.resolve()?;
    match &cli.command {
        Command::ScheduleAnalyze => commands::schedule_analyze(&cfg),
        Command::VerifyProps => commands::verify_props(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Sample { checkpoint, .. } => commands::sample(&cfg, checkpoint),
        Command::Eval { generated, reference } => commands::eval(&cfg, generated, reference),
        Command::SweepDelta { .. } => commands::sweep_delta(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
