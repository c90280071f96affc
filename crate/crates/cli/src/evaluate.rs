use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use jsr_core::imagecore::{downsample, read_luma};
use jsr_core::jointsr::JointConfig;
use jsr_core::metrics::evaluate;
use jsr_core::pipeline::{upscale_luma, Mode, FIXED_WEIGHT_SWEEP};
use jsr_core::sparse::DictionaryPair;
use jsr_core::LumaImage;
use serde::Deserialize;

use crate::upscale::MethodArgs;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// CSV with header `truth,image,factor`. `image` (an existing
    /// low-resolution input) and `factor` may be left empty; the input is
    /// then made by downsampling the truth, and --factor applies. Relative
    /// paths are resolved against the manifest's directory.
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,

    /// Comma-separated methods. joint-fixed adds one row per weight in
    /// 0.1, 1, 3, 5, 10 besides its --fixed-omega row.
    #[arg(long, value_delimiter = ',', default_value = "bicubic,csc,epi,joint")]
    pub modes: Vec<String>,

    /// Results table as CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Border pixels ignored by the metrics [default: the factor].
    #[arg(long)]
    pub shave: Option<usize>,

    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    truth: PathBuf,
    #[serde(default)]
    image: Option<PathBuf>,
    #[serde(default)]
    factor: Option<usize>,
}

#[derive(Debug)]
struct Entry {
    truth: PathBuf,
    image: Option<PathBuf>,
    factor: usize,
}

fn read_manifest(path: &Path, default_factor: usize) -> anyhow::Result<Vec<Entry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: ManifestRow = row.with_context(|| format!("parsing {}", path.display()))?;
        out.push(Entry {
            truth: resolve(row.truth),
            image: row.image.filter(|p| !p.as_os_str().is_empty()).map(resolve),
            factor: row.factor.unwrap_or(default_factor),
        });
    }
    if out.is_empty() {
        bail!("{} lists no images", path.display());
    }
    Ok(out)
}

struct Row {
    image: String,
    factor: usize,
    mode: Mode,
    outcome: Result<(f64, f64), String>,
    seconds: f64,
}

fn run_one(
    entry: &Entry,
    mode: Mode,
    dict: Option<&DictionaryPair>,
    cfg: &JointConfig,
    shave: Option<usize>,
) -> anyhow::Result<(f64, f64)> {
    let truth = read_luma(&entry.truth)?.mod_crop(entry.factor)?;
    let lr: LumaImage = match &entry.image {
        Some(p) => read_luma(p)?,
        None => downsample(&truth, entry.factor)?,
    };
    let out = upscale_luma(mode, &lr, entry.factor, dict, None, cfg)?;
    if out.image.dims() != truth.dims() {
        bail!("output is {:?} but the truth is {:?}", out.image.dims(), truth.dims());
    }
    let r = evaluate(&out.image, &truth, shave.unwrap_or(entry.factor))?;
    Ok((r.psnr, r.ssim))
}

fn render_table(rows: &[Row]) -> String {
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            let (psnr, ssim, status) = match &r.outcome {
                Ok((p, s)) => (format!("{p:.2}"), format!("{s:.4}"), "ok".to_string()),
                Err(e) => ("-".into(), "-".into(), e.clone()),
            };
            [r.image.clone(), r.mode.to_string(), psnr, ssim, status]
        })
        .collect();
    let header = ["image", "mode", "psnr", "ssim", "status"];
    let mut widths = header.map(str::len);
    for c in &cells {
        for (w, v) in widths.iter_mut().zip(c) {
            *w = (*w).max(v.len());
        }
    }
    let mut s = String::new();
    let mut line = |vals: [&str; 5]| {
        let parts: Vec<String> = vals
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (v, w))| if i == 2 || i == 3 { format!("{v:>w$}") } else { format!("{v:<w$}") })
            .collect();
        s += parts.join("  ").trim_end();
        s.push('\n');
    };
    line(header);
    for c in &cells {
        line([&c[0], &c[1], &c[2], &c[3], &c[4]]);
    }
    s
}

fn write_csv(path: &Path, rows: &[Row]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["image", "factor", "mode", "psnr", "ssim", "seconds", "error"])?;
    for r in rows {
        let (p, s, e) = match &r.outcome {
            Ok((p, s)) => (p.to_string(), s.to_string(), String::new()),
            Err(e) => (String::new(), String::new(), e.clone()),
        };
        w.write_record([
            r.image.clone(),
            r.factor.to_string(),
            r.mode.to_string(),
            p,
            s,
            format!("{:.3}", r.seconds),
            e,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &EvaluateArgs, seed: u64) -> anyhow::Result<()> {
    let requested: Vec<&str> = args.modes.iter().map(|m| m.trim()).filter(|m| !m.is_empty()).collect();
    if requested.is_empty() {
        bail!("--modes is empty; name at least one of bicubic, csc, epi, nn-lse, joint, joint-fixed");
    }
    let mut modes = Vec::new();
    for m in requested {
        let mode = args.method.mode_with_omega(m.parse::<Mode>()?);
        modes.push(mode);
        if let Mode::JointFixed(_) = mode {
            modes.extend(FIXED_WEIGHT_SWEEP.iter().map(|&w| Mode::JointFixed(w)));
        }
    }
    let cfg = args.method.joint_config(seed);
    let dict = args.method.dictionary(&modes, &cfg)?;
    let entries = read_manifest(&args.manifest, args.method.factor)?;

    let mut rows = Vec::new();
    for entry in &entries {
        let name = entry
            .truth
            .file_name()
            .map_or_else(|| entry.truth.display().to_string(), |n| n.to_string_lossy().into_owned());
        for &mode in &modes {
            let t = Instant::now();
            let outcome = run_one(entry, mode, dict.as_ref(), &cfg, args.shave).map_err(|e| format!("{e:#}"));
            rows.push(Row {
                image: name.clone(),
                factor: entry.factor,
                mode,
                outcome,
                seconds: t.elapsed().as_secs_f64(),
            });
        }
    }
    print!("{}", render_table(&rows));
    if let Some(out) = &args.out {
        write_csv(out, &rows)?;
    }
    Ok(())
}
