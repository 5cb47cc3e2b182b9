//! Privacy and text-quality evaluation.
//!
//! Image metrics compare an original with an adversarial reconstruction;
//! SRRA scores a nearest-neighbor re-identification attack over
//! embeddings; text metrics measure how much concrete detail a caption
//! carries.

mod detection;
mod image;
mod quality;
mod reid;
mod text;

pub use detection::{detection_loss, DetectionGrid, GridCell};
pub use image::RasterImage;
pub use quality::{mse, psnr, ssim, Psnr, SSIM_C1, SSIM_C2, SSIM_STRIDE, SSIM_WINDOW};
pub use reid::srra;
pub use text::{semantic_similarity, text_stats, Lexicons, TextStats, CLAUSE_MARKERS};

pub(crate) use image::hex;

/// Default peak value for 8-bit samples.
pub const MAX_SAMPLE: f64 = 255.0;
