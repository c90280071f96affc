//! One entry point for every upscaling method.

use std::fmt;
use std::str::FromStr;

use crate::epitome::{epi_upscale_with, nn_upscale, train_epitome, Epitome, EpitomeReport, InternalConfig};
use crate::error::{Error, Result};
use crate::imagecore::{smooth_input, upsample, LumaImage};
use crate::jointsr::{joint_upscale_with, JointConfig, WeightMap, Weighting};
use crate::sparse::{csc_upscale, DictionaryPair, SparseConfig};

/// Fixed weights swept when comparing against the adaptive weight.
pub const FIXED_WEIGHT_SWEEP: [f64; 5] = [0.1, 1.0, 3.0, 5.0, 10.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Bicubic,
    Csc,
    Epi,
    NnLse,
    Joint,
    JointFixed(f64),
}

impl Mode {
    pub fn needs_dictionary(self) -> bool {
        matches!(self, Mode::Csc | Mode::Joint | Mode::JointFixed(_))
    }

    pub fn uses_epitome(self) -> bool {
        matches!(self, Mode::Epi | Mode::Joint | Mode::JointFixed(_))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Bicubic => f.write_str("bicubic"),
            Mode::Csc => f.write_str("csc"),
            Mode::Epi => f.write_str("epi"),
            Mode::NnLse => f.write_str("nn-lse"),
            Mode::Joint => f.write_str("joint"),
            Mode::JointFixed(w) => write!(f, "joint-fixed({w})"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    /// `joint-fixed` alone means a weight of 1; `joint-fixed(3)` or
    /// `joint-fixed=3` sets it.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "bicubic" => Mode::Bicubic,
            "csc" => Mode::Csc,
            "epi" => Mode::Epi,
            "nn-lse" => Mode::NnLse,
            "joint" => Mode::Joint,
            "joint-fixed" => Mode::JointFixed(1.0),
            _ => {
                let w = s
                    .strip_prefix("joint-fixed")
                    .map(|r| r.trim_start_matches(['=', '(']).trim_end_matches(')'))
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "unknown mode '{s}'; expected bicubic, csc, epi, nn-lse, joint or joint-fixed"
                        ))
                    })?;
                Mode::JointFixed(w)
            }
        })
    }
}

/// Train the epitome the internal branch would build for `lr`, so it can be
/// cached and passed back to [`upscale_luma`].
pub fn train_input_epitome(lr: &LumaImage, factor: usize, config: &JointConfig) -> Result<(Epitome, EpitomeReport)> {
    let cfg = crate::epitome::EpitomeConfig {
        patch_size: config.patch_size,
        ..config.internal.epitome.clone()
    };
    train_epitome(&smooth_input(lr, factor)?, &cfg)
}

#[derive(Clone, Debug)]
pub struct Upscaled {
    pub image: LumaImage,
    pub weights: Option<WeightMap>,
    pub trace: Option<Vec<f64>>,
}

/// Upscale a luminance image by `factor` with the chosen method.
/// `epitome`, when given, must have been trained on this input's smoothed
/// image.
pub fn upscale_luma(
    mode: Mode,
    lr: &LumaImage,
    factor: usize,
    dict: Option<&DictionaryPair>,
    epitome: Option<Epitome>,
    config: &JointConfig,
) -> Result<Upscaled> {
    let dict = match (mode.needs_dictionary(), dict) {
        (true, None) => return Err(Error::invalid(format!("mode {mode} needs a dictionary"))),
        (true, Some(d)) if d.factor() != factor => {
            return Err(Error::invalid(format!(
                "dictionary was trained for x{} but x{factor} was requested",
                d.factor()
            )))
        }
        (_, d) => d,
    };
    let plain = |image| Upscaled {
        image,
        weights: None,
        trace: None,
    };
    let internal = InternalConfig {
        epitome: crate::epitome::EpitomeConfig {
            patch_size: config.patch_size,
            ..config.internal.epitome.clone()
        },
        ..config.internal.clone()
    };
    match mode {
        Mode::Bicubic => Ok(plain(upsample(lr, factor)?.clamped())),
        Mode::Csc => {
            let sparse = SparseConfig {
                lambda: config.lambda,
                solver: config.solver,
            };
            Ok(plain(csc_upscale(lr, dict.expect("checked"), config.overlap, &sparse)?))
        }
        Mode::Epi => Ok(plain(epi_upscale_with(lr, factor, config.overlap, &internal, epitome)?)),
        Mode::NnLse => Ok(plain(nn_upscale(lr, factor, config.overlap, &internal)?)),
        Mode::Joint | Mode::JointFixed(_) => {
            let weighting = match mode {
                Mode::JointFixed(w) => Weighting::Fixed(w),
                _ => Weighting::Adaptive,
            };
            let cfg = JointConfig {
                weighting,
                internal,
                ..config.clone()
            };
            let res = joint_upscale_with(lr, dict.expect("checked"), &cfg, epitome)?;
            Ok(Upscaled {
                image: res.image,
                weights: Some(res.weights),
                trace: Some(res.trace),
            })
        }
    }
}
