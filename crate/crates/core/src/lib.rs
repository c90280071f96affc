//! Joint super-resolution from external (coupled sparse coding) and internal
//! (epitomic matching) examples, with PSNR/SSIM metrics and Bradley-Terry
//! ranking of pairwise preferences.

pub mod epitome;
pub mod error;
pub mod imagecore;
pub mod jointsr;
pub mod metrics;
pub mod pipeline;
pub mod ranking;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use imagecore::LumaImage;
