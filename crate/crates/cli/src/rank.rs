use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use jsr_core::ranking::{bt_fit, WinningMatrix};

#[derive(Args, Debug)]
pub struct BtRankArgs {
    /// Square CSV: a header row of method labels, then one row of win
    /// counts per method (row i, column j = times i beat j).
    #[arg(long, value_name = "FILE")]
    pub matrix: PathBuf,

    /// Method whose score is pinned to 1 [default: the first label].
    #[arg(long)]
    pub anchor: Option<String>,

    /// Write `rank,method,score` CSV here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Newton iterations stop once the gradient norm falls below this.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,

    /// Cap on Newton iterations.
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
}

pub fn run(args: &BtRankArgs) -> anyhow::Result<()> {
    let file = std::fs::File::open(&args.matrix).with_context(|| format!("opening {}", args.matrix.display()))?;
    let w = WinningMatrix::from_csv(file)?;
    let anchor = match &args.anchor {
        None => 0,
        Some(a) => match w.index_of(a) {
            Some(i) => i,
            None => bail!("anchor '{a}' is not in the matrix; available: {}", w.labels().join(", ")),
        },
    };
    let scores = bt_fit(&w, anchor, args.tolerance, args.max_iterations)?;
    print!("{}", scores.bar_chart(40));
    if let Some(out) = &args.out {
        std::fs::write(out, scores.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
