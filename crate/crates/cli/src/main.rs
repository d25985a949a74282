use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ginx_cli::{commands, report, CliError, Context, Overrides, RunConfig, OUT_ENV};

#[derive(Parser)]
#[command(name = "ginx", version, about = "Evaluate graph explainers by fine-tuning on degraded graphs")]
struct Cli {
    /// Run configuration (TOML); every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for explanation and evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Added to every seed in the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    /// Evaluate the pretrained model on degraded graphs without fine-tuning.
    #[arg(long, global = true)]
    no_finetune: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the dataset.
    GenData,
    /// Pretrain the classifier.
    Train,
    /// Compute explanation masks.
    Explain,
    /// Compute GInX curves and EdgeRank.
    GinxEval,
    /// Compute fidelity and faithfulness.
    Fidelity,
    /// Merge artifacts into a summary, comparison table, and plot data.
    Report,
    /// Every stage in order.
    Run,
    /// Print the materialized config.
    Config,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("worker pool already initialized: {e}");
        }
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let default_out = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("ginx-out"), PathBuf::from);
    let ov = Overrides { out: cli.out, seed_offset: cli.seed_offset, no_finetune: cli.no_finetune };
    let ctx = Context::new(cfg.materialize(&ov, &default_out)?);
    match cli.command {
        Command::GenData => {
            commands::gen_data(&ctx)?;
        }
        Command::Train => {
            commands::train_model(&ctx)?;
        }
        Command::Explain => {
            commands::explain(&ctx)?;
        }
        Command::GinxEval => {
            commands::ginx(&ctx)?;
        }
        Command::Fidelity => {
            commands::fidelity(&ctx)?;
        }
        Command::Report => print!("{}", report::report(&ctx)?),
        Command::Run => print!("{}", commands::run_all(&ctx)?),
        Command::Config => print!("# config {}\n{}", ctx.hash, ctx.cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
