use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use jsr_core::epitome::Epitome;
use jsr_core::imagecore::{read_color, write_color, write_luma, ColorImage};
use jsr_core::jointsr::{trace_csv, JointConfig};
use jsr_core::pipeline::{train_input_epitome, upscale_luma, Mode};
use jsr_core::sparse::DictionaryPair;

/// Method settings shared by `upscale` and `evaluate`.
#[derive(Args, Debug, Clone)]
pub struct MethodArgs {
    /// Magnification: 2, 3 or 4.
    #[arg(long, default_value_t = 3)]
    pub factor: usize,

    /// Coupled dictionary from `train-dict`. Required by csc, joint and
    /// joint-fixed.
    #[arg(long, value_name = "FILE")]
    pub dict: Option<PathBuf>,

    /// Weight used by joint-fixed.
    #[arg(long, default_value_t = 1.0)]
    pub fixed_omega: f64,

    /// Large-patch preset: 25x25 patches, overlap 5, 5 iterations. Explicit
    /// --patch-size, --overlap and --iterations still apply on top.
    #[arg(long)]
    pub shd: bool,

    /// L1 penalty on the sparse codes.
    #[arg(long, default_value_t = JointConfig::default().lambda)]
    pub lambda: f64,

    /// Sharpness of the adaptive weight exp(p (N_g - N_i)).
    #[arg(long, default_value_t = JointConfig::default().p)]
    pub p: f64,

    /// Outer coordinate-descent iterations [default: 10, or 5 with --shd].
    #[arg(long)]
    pub iterations: Option<usize>,

    /// Patch side on the output grid [default: 5, or 25 with --shd]. Must
    /// match the dictionary.
    #[arg(long)]
    pub patch_size: Option<usize>,

    /// Overlap between neighbouring patches [default: 1, or 5 with --shd].
    #[arg(long)]
    pub overlap: Option<usize>,

    /// Relative objective decrease below which iterations stop early.
    #[arg(long, default_value_t = JointConfig::default().tolerance)]
    pub tolerance: f64,

    /// Half-width of the local search window used by nn-lse, in input
    /// pixels.
    #[arg(long, default_value_t = 7)]
    pub nn_radius: usize,

    /// EM iterations when an epitome has to be trained.
    #[arg(long, default_value_t = 10)]
    pub epitome_iterations: usize,

    /// Candidate source patches kept per epitome position.
    #[arg(long, default_value_t = 5)]
    pub candidates: usize,
}

impl MethodArgs {
    pub fn joint_config(&self, seed: u64) -> JointConfig {
        let mut cfg = if self.shd { JointConfig::shd() } else { JointConfig::default() };
        cfg.lambda = self.lambda;
        cfg.p = self.p;
        cfg.tolerance = self.tolerance;
        if let Some(v) = self.iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.patch_size {
            cfg.patch_size = v;
        }
        if let Some(v) = self.overlap {
            cfg.overlap = v;
        }
        cfg.internal.nn_radius = self.nn_radius;
        cfg.internal.epitome.iterations = self.epitome_iterations;
        cfg.internal.epitome.candidates = self.candidates;
        cfg.internal.epitome.seed = seed;
        cfg
    }

    /// Load the dictionary if `mode` needs one, checking it fits.
    pub fn dictionary(&self, modes: &[Mode], cfg: &JointConfig) -> anyhow::Result<Option<DictionaryPair>> {
        if !modes.iter().any(|m| m.needs_dictionary()) {
            return Ok(None);
        }
        let Some(path) = &self.dict else {
            let m = modes.iter().find(|m| m.needs_dictionary()).expect("checked");
            bail!("mode {m} needs a dictionary; pass --dict (see `jsr train-dict`)");
        };
        let dict = DictionaryPair::load(path)?;
        if dict.patch_size() != cfg.patch_size {
            bail!(
                "{} holds {}x{} patches but the patch size is {}",
                path.display(),
                dict.patch_size(),
                dict.patch_size(),
                cfg.patch_size
            );
        }
        Ok(Some(dict))
    }

    pub fn mode_with_omega(&self, mode: Mode) -> Mode {
        match mode {
            Mode::JointFixed(_) => Mode::JointFixed(self.fixed_omega),
            m => m,
        }
    }
}

#[derive(Args, Debug)]
pub struct UpscaleArgs {
    /// Low-resolution image (PNG, PGM, PPM, ...).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Output image; the format follows the extension (PNG by default).
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,

    /// bicubic, csc, epi, nn-lse, joint or joint-fixed.
    #[arg(long, default_value = "joint")]
    pub mode: String,

    /// Epitome cache for epi, joint and joint-fixed. Loaded when the file
    /// exists, otherwise trained on this input and written there.
    #[arg(long, value_name = "FILE")]
    pub epitome: Option<PathBuf>,

    /// Heat map of the sigmoid weight 1/(1+omega) per patch (joint modes).
    /// The raw values go to the same path with a .csv extension.
    #[arg(long, value_name = "FILE")]
    pub weight_map: Option<PathBuf>,

    /// CSV of the joint objective after each outer iteration (joint modes).
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,

    #[command(flatten)]
    pub method: MethodArgs,
}

fn is_grey(img: &ColorImage) -> bool {
    img.cb.data().iter().chain(img.cr.data()).all(|v| (v - 0.5).abs() < 1e-6)
}

fn cached_epitome(path: &Path, lr: &jsr_core::LumaImage, factor: usize, cfg: &JointConfig) -> anyhow::Result<Epitome> {
    if path.exists() {
        return Ok(Epitome::load(path)?);
    }
    let (e, _) = train_input_epitome(lr, factor, cfg)?;
    e.save(path)?;
    Ok(e)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: &UpscaleArgs, seed: u64) -> anyhow::Result<()> {
    let mode = args.method.mode_with_omega(args.mode.parse::<Mode>()?);
    let factor = args.method.factor;
    jsr_core::imagecore::validate_factor(factor)?;
    let joint = matches!(mode, Mode::Joint | Mode::JointFixed(_));
    if !joint && (args.weight_map.is_some() || args.trace.is_some()) {
        bail!("--weight-map and --trace need mode joint or joint-fixed, not {mode}");
    }
    let cfg = args.method.joint_config(seed);
    let dict = args.method.dictionary(&[mode], &cfg)?;
    let input = read_color(&args.input)?;
    let epitome = match (&args.epitome, mode.uses_epitome()) {
        (Some(p), true) => Some(cached_epitome(p, &input.luma, factor, &cfg)?),
        _ => None,
    };
    let out = upscale_luma(mode, &input.luma, factor, dict.as_ref(), epitome, &cfg)?;
    if is_grey(&input) {
        write_luma(&args.output, &out.image)?;
    } else {
        write_color(&args.output, &input.with_upscaled_luma(out.image, factor)?)?;
    }
    if let (Some(path), Some(w)) = (&args.weight_map, &out.weights) {
        write_luma(path, &w.heat_map())?;
        write_text(&path.with_extension("csv"), &w.to_csv())?;
    }
    if let (Some(path), Some(t)) = (&args.trace, &out.trace) {
        write_text(path, &trace_csv(t))?;
    }
    Ok(())
}
