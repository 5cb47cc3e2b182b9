//! Reconstruction-quality metrics between an original and a reconstructed
//! image. For privacy evaluation lower values mean less leakage.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::image::RasterImage;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn check_shapes(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::domain(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_shapes(a, b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.samples().len() as f64)
}

/// Peak signal-to-noise ratio in dB. Zero error has no finite value and is
/// reported as [`Psnr::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn from_mse(mse: f64, max_value: f64) -> Self {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Finite(10.0 * (max_value * max_value / mse).log10())
        }
    }

    pub fn db(&self) -> Option<f64> {
        match *self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Psnr::Finite(v) => s.serialize_f64(v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Psnr::Finite(v)),
            Repr::Str(s) if s == "inf" => Ok(Psnr::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("invalid psnr {s:?}"))),
        }
    }
}

pub fn psnr(a: &RasterImage, b: &RasterImage, max_value: f64) -> Result<Psnr> {
    Ok(Psnr::from_mse(mse(a, b)?, max_value))
}

/// Mean SSIM over 8×8 windows at stride 4, averaged over channels.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_shapes(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::domain(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        for y0 in (0..=a.height() - SSIM_WINDOW).step_by(SSIM_STRIDE) {
            for x0 in (0..=a.width() - SSIM_WINDOW).step_by(SSIM_STRIDE) {
                total += window_ssim(a, b, x0, y0, c);
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

fn window_ssim(a: &RasterImage, b: &RasterImage, x0: usize, y0: usize, c: usize) -> f64 {
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let pixels = || (y0..y0 + SSIM_WINDOW).flat_map(move |y| (x0..x0 + SSIM_WINDOW).map(move |x| (x, y)));
    let (mut sum_a, mut sum_b) = (0.0, 0.0);
    for (x, y) in pixels() {
        sum_a += f64::from(a.sample(x, y, c));
        sum_b += f64::from(b.sample(x, y, c));
    }
    let (mu_a, mu_b) = (sum_a / n, sum_b / n);
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in pixels() {
        let da = f64::from(a.sample(x, y, c)) - mu_a;
        let db = f64::from(b.sample(x, y, c)) - mu_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    let (var_a, var_b, cov) = (var_a / n, var_b / n, cov / n);
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}
