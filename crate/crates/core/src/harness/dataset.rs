//! Test images: synthetic Gauss-Markov textures and binary PGM/PPM files.

use std::path::Path;

use rayon::prelude::*;

use crate::codec::ImageSample;
use crate::seeding::{self, derive_seed};
use crate::{Error, Result};

/// Pixel mapping of the unit-variance field: `clamp(0.5 + 0.15 x, 0, 1)`.
const PIXEL_MEAN: f64 = 0.5;
const PIXEL_SCALE: f64 = 0.15;

/// One `width x height` unit-variance field with separable correlation
/// `rho^|dx| * rho^|dy|`.
pub fn gauss_markov_field(width: usize, height: usize, rho: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeding::rng_from_seed(seed);
    let s = (1.0 - rho * rho).sqrt();
    let mut x = vec![0.0; width * height];
    for i in 0..height {
        for j in 0..width {
            let e = seeding::gaussian(&mut rng);
            x[i * width + j] = match (i, j) {
                (0, 0) => e,
                (0, _) => rho * x[j - 1] + s * e,
                (_, 0) => rho * x[(i - 1) * width] + s * e,
                _ => {
                    rho * x[(i - 1) * width + j] + rho * x[i * width + j - 1]
                        - rho * rho * x[(i - 1) * width + j - 1]
                        + (1.0 - rho * rho) * e
                }
            };
        }
    }
    x
}

/// `count` grayscale `size x size` textures. Image `i` depends only on
/// `(seed, i)`.
pub fn synth_dataset(count: usize, size: usize, rho: f64, seed: u64) -> Result<Vec<ImageSample>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::config(format!("rho must be in [0, 1), got {rho}")));
    }
    if size == 0 {
        return Err(Error::config("image size must be positive"));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let field = gauss_markov_field(size, size, rho, derive_seed(seed, &[i as u64]));
            let px = field
                .into_iter()
                .map(|v| (PIXEL_MEAN + PIXEL_SCALE * v).clamp(0.0, 1.0))
                .collect();
            ImageSample::new(px, size, size, 1)
        })
        .collect()
}

/// Reads a binary PGM (`P5`) or PPM (`P6`) file.
pub fn load_image(path: &Path) -> Result<ImageSample> {
    parse_netpbm(&std::fs::read(path)?)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
    }
}

/// Parses netpbm bytes; see [`load_image`].
pub fn parse_netpbm(data: &[u8]) -> Result<ImageSample> {
    if data.len() < 2 || data[0] != b'P' {
        return Err(Error::parse(0, "missing netpbm magic"));
    }
    let channels = match data[1] {
        b'5' => 1,
        b'6' => 3,
        other => {
            return Err(Error::Unsupported(format!(
                "netpbm magic 'P{}' (only binary P5 and P6 are supported)",
                other as char
            )))
        }
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(at, "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(at, format!("maxval {maxval} outside 1..=65535")));
    }
    match data.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse(cur.pos, "expected whitespace after maxval")),
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::parse(2, "image dimensions overflow"))?;
    let need = n * bytes_per;
    let payload = &data[cur.pos..];
    if payload.len() < need {
        return Err(Error::parse(
            data.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(n);
    for i in 0..n {
        let v = if bytes_per == 1 {
            payload[i] as usize
        } else {
            ((payload[2 * i] as usize) << 8) | payload[2 * i + 1] as usize
        };
        if v > maxval {
            return Err(Error::parse(cur.pos + i * bytes_per, format!("sample {v} exceeds maxval")));
        }
        pixels.push(v as f64 / scale);
    }
    ImageSample::new(pixels, width, height, channels)
}

/// Loads every `.pgm`/`.ppm` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<ImageSample>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| load_image(p)).collect()
}
