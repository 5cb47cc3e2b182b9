use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 8-bit grayscale or RGB raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::ImageFormat(format!("unsupported channel count {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::ImageFormat("image has zero area".into()));
        }
        if samples.len() != width * height * channels {
            return Err(Error::ImageFormat(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        (self.width, self.height, self.channels) == (other.width, other.height, other.channels)
    }

    /// SHA-256 over shape and samples, hex-encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        h.update((self.channels as u64).to_le_bytes());
        h.update(&self.samples);
        hex(&h.finalize())
    }

    pub fn mean_intensity(&self) -> f64 {
        self.samples.iter().map(|&s| f64::from(s)).sum::<f64>() / self.samples.len() as f64
    }

    /// Parses plain-text PGM (`P2`) or PPM (`P3`). `maxval` may not exceed 255.
    pub fn parse_pnm(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let magic = tokens.next().ok_or_else(|| Error::ImageFormat("empty file".into()))?;
        let channels = match magic {
            "P2" => 1,
            "P3" => 3,
            other => return Err(Error::ImageFormat(format!("unsupported magic {other:?}"))),
        };
        let mut header = |name: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::ImageFormat(format!("missing {name}")))?
                .parse()
                .map_err(|_| Error::ImageFormat(format!("invalid {name}")))
        };
        let width = header("width")?;
        let height = header("height")?;
        let maxval = header("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::ImageFormat(format!("maxval {maxval} outside 1..=255")));
        }
        let samples = tokens
            .map(|t| {
                let v: usize = t
                    .parse()
                    .map_err(|_| Error::ImageFormat(format!("invalid sample {t:?}")))?;
                if v > maxval {
                    return Err(Error::ImageFormat(format!("sample {v} exceeds maxval {maxval}")));
                }
                Ok(v as u8)
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(width, height, channels, samples)
    }

    pub fn to_pnm(&self) -> String {
        let magic = if self.channels == 1 { "P2" } else { "P3" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height);
        for row in self.samples.chunks(self.width * self.channels) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::parse_pnm(&text)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
