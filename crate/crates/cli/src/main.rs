use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgdlab_cli::output::write_outputs;
use sgdlab_cli::{run_experiment, ExperimentConfig, ExperimentKind};

/// Replicated SGD / SDE experiments driven by a TOML configuration.
#[derive(Parser)]
#[command(name = "sgdlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence rates of SGD against the theoretical exponents.
    Rates(RunArgs),
    /// Strong error between SGD and the coupled SDE across step sizes.
    StrongApprox(RunArgs),
    /// Weak error between SGD and the coupled SDE across step sizes.
    WeakApprox(RunArgs),
    /// Wasserstein gap between mini-batch noise and its Gaussian surrogate.
    BatchEps(RunArgs),
    /// Exact second moment of SGD on f = 0 and the gradient-flow lower bound.
    Prop24(RunArgs),
    /// A few coupled SGD/SDE paths with their states.
    CoupleDemo(RunArgs),
    /// Grid check of the objective's function-class inequalities.
    Certify(RunArgs),
    /// Parse and validate a configuration, then print it back.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_ALL_ABORTED: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Validate { config } => {
            return match ExperimentConfig::load(&config, None) {
                Ok(cfg) => {
                    print!("{}", cfg.echo());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}: invalid configuration\n{e}", config.display());
                    ExitCode::from(EXIT_CONFIG)
                }
            };
        }
        Command::Rates(a) => (ExperimentKind::Rates, a),
        Command::StrongApprox(a) => (ExperimentKind::StrongApprox, a),
        Command::WeakApprox(a) => (ExperimentKind::WeakApprox, a),
        Command::BatchEps(a) => (ExperimentKind::BatchEps, a),
        Command::Prop24(a) => (ExperimentKind::Prop24, a),
        Command::CoupleDemo(a) => (ExperimentKind::CoupleDemo, a),
        Command::Certify(a) => (ExperimentKind::Certify, a),
    };
    let mut cfg = match ExperimentConfig::load(&args.config, Some(kind)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: invalid configuration\n{e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    let dir = args
        .out_dir
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("setup failed: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = write_outputs(&cfg, &outcome, &dir) {
        eprintln!("writing results: {e:#}");
        return ExitCode::FAILURE;
    }
    for line in &outcome.report {
        println!("{line}");
    }
    println!("\nresults written to {}", dir.display());
    if outcome.all_aborted() {
        eprintln!("every replicate aborted");
        return ExitCode::from(EXIT_ALL_ABORTED);
    }
    ExitCode::SUCCESS
}
