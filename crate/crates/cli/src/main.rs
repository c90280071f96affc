//! `jsr`: joint external/internal example super-resolution from the command
//! line.

mod config;
mod evaluate;
mod rank;
mod train;
mod upscale;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "jsr", version, about = "Single-image super-resolution with adaptive external/internal example weighting")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = "JSR_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// TOML file with default flag values. Top-level keys set global flags,
    /// a `[subcommand]` table sets that subcommand's flags. Flags given on
    /// the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every randomized step (epitome initialization, dictionary
    /// training order).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Upscale one image. Only luminance goes through the selected method;
    /// chroma is always bicubic.
    Upscale(upscale::UpscaleArgs),
    /// Train a coupled LR/HR dictionary on a directory of images.
    TrainDict(train::TrainDictArgs),
    /// Train and save the epitome of an input image for later `upscale
    /// --epitome` runs.
    TrainEpitome(train::TrainEpitomeArgs),
    /// Run several methods over a manifest of images and tabulate PSNR/SSIM.
    Evaluate(evaluate::EvaluateArgs),
    /// PSNR and SSIM of one image against a reference, on luminance.
    Metrics(MetricsArgs),
    /// Fit Bradley-Terry scores to a pairwise winning matrix.
    BtRank(rank::BtRankArgs),
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Reconstructed image.
    #[arg(long, value_name = "FILE")]
    pub estimate: PathBuf,
    /// Reference image of the same size.
    #[arg(long, value_name = "FILE")]
    pub truth: PathBuf,
    /// Border pixels ignored on every side.
    #[arg(long, default_value_t = 0)]
    pub shave: usize,
}

fn metrics(args: &MetricsArgs) -> anyhow::Result<()> {
    let est = jsr_core::imagecore::read_luma(&args.estimate)?;
    let truth = jsr_core::imagecore::read_luma(&args.truth)?;
    let r = jsr_core::metrics::evaluate(&est, &truth, args.shave)?;
    println!("psnr={:.4} ssim={:.6}", r.psnr, r.ssim);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()?;
    match &cli.command {
        Command::Upscale(a) => upscale::run(a, cli.seed),
        Command::TrainDict(a) => train::run_dict(a, cli.seed),
        Command::TrainEpitome(a) => train::run_epitome(a, cli.seed),
        Command::Evaluate(a) => evaluate::run(a, cli.seed),
        Command::Metrics(a) => metrics(a),
        Command::BtRank(a) => rank::run(a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
