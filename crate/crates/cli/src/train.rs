use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use jsr_core::imagecore::read_luma;
use jsr_core::pipeline::train_input_epitome;
use jsr_core::sparse::{train_coupled_dictionary, training_pairs, TrainingOptions};

use crate::upscale::MethodArgs;

#[derive(Args, Debug)]
pub struct TrainDictArgs {
    /// Directory of ground-truth training images (PNG, PGM, PPM, ...).
    /// Files that cannot be decoded are skipped with a warning.
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,

    /// Output dictionary file. Its header records patch size, factor and
    /// atom count.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Dictionary atoms.
    #[arg(long, default_value_t = TrainingOptions::default().atoms)]
    pub atoms: usize,

    /// L1 penalty used while training.
    #[arg(long, default_value_t = TrainingOptions::default().lambda)]
    pub lambda: f64,

    /// Passes of sparse coding plus dictionary update.
    #[arg(long, default_value_t = TrainingOptions::default().epochs)]
    pub epochs: usize,

    /// Magnification the dictionary is trained for.
    #[arg(long, default_value_t = 3)]
    pub factor: usize,

    /// Patch side on the high-resolution grid.
    #[arg(long, default_value_t = 5)]
    pub patch_size: usize,

    /// Step between sampled patch positions.
    #[arg(long, default_value_t = 2)]
    pub stride: usize,

    /// Patches flatter than this standard deviation are not sampled.
    #[arg(long, default_value_t = 0.01)]
    pub min_std: f64,

    /// Upper bound on training pairs; a larger sample is thinned evenly.
    #[arg(long, default_value_t = 100_000)]
    pub max_pairs: usize,
}

pub fn run_dict(args: &TrainDictArgs, seed: u64) -> anyhow::Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.corpus)
        .with_context(|| format!("reading {}", args.corpus.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut pairs = Vec::new();
    let mut images = 0;
    for f in &files {
        match read_luma(f) {
            Ok(img) => {
                images += 1;
                pairs.extend(training_pairs(&img, args.factor, args.patch_size, args.stride, args.min_std)?);
            }
            Err(e) => eprintln!("warning: skipping {e}"),
        }
    }
    if images == 0 {
        bail!("no readable images in {}", args.corpus.display());
    }
    if pairs.len() > args.max_pairs {
        let step = pairs.len().div_ceil(args.max_pairs);
        pairs = pairs.into_iter().step_by(step).collect();
    }
    let opts = TrainingOptions {
        atoms: args.atoms,
        lambda: args.lambda,
        epochs: args.epochs,
        seed,
        patch_size: args.patch_size,
        factor: args.factor,
        ..TrainingOptions::default()
    };
    eprintln!("training {} atoms on {} patch pairs from {images} images", args.atoms, pairs.len());
    let (dict, report) = train_coupled_dictionary(&pairs, &opts).context("dictionary training failed")?;
    if let Some(obj) = report.coding_objective.last() {
        eprintln!("final coding objective {obj:.6}");
    }
    dict.save(&args.out)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainEpitomeArgs {
    /// Low-resolution image that will later be upscaled.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Output epitome file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[command(flatten)]
    pub method: MethodArgs,
}

pub fn run_epitome(args: &TrainEpitomeArgs, seed: u64) -> anyhow::Result<()> {
    let cfg = args.method.joint_config(seed);
    let lr = read_luma(&args.input)?;
    let (e, report) = train_input_epitome(&lr, args.method.factor, &cfg)?;
    if let (Some(first), Some(last)) = (report.log_likelihood.first(), report.log_likelihood.last()) {
        eprintln!("log-likelihood {first:.3} -> {last:.3}");
    }
    e.save(&args.out)?;
    Ok(())
}
