//! Reconstruction quality: MSE, PSNR and SSIM.

use crate::codec::ImageSample;
use crate::{Error, Result};

/// PSNR reported for a perfect reconstruction.
pub const DEFAULT_PSNR_CAP_DB: f64 = 100.0;

/// Side of the square SSIM window.
pub const DEFAULT_SSIM_WINDOW: usize = 8;

pub fn mse(s: &[f64], s_hat: &[f64]) -> Result<f64> {
    if s.len() != s_hat.len() || s.is_empty() {
        return Err(Error::dim("images differ in size"));
    }
    Ok(s.iter().zip(s_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s.len() as f64)
}

/// `10 log10(max^2 / mse)`, or `cap_db` when `mse = 0`.
pub fn psnr_from_mse(mse: f64, max_val: f64, cap_db: f64) -> f64 {
    if mse <= 0.0 {
        cap_db
    } else {
        (10.0 * (max_val * max_val / mse).log10()).min(cap_db)
    }
}

pub fn psnr(s: &[f64], s_hat: &[f64], max_val: f64) -> Result<f64> {
    if !(max_val > 0.0) {
        return Err(Error::config("peak value must be positive"));
    }
    Ok(psnr_from_mse(mse(s, s_hat)?, max_val, DEFAULT_PSNR_CAP_DB))
}

/// Mean SSIM over all `window x window` patches at stride 1, averaged over
/// channels. Patch statistics use `1/N` normalization and the constants are
/// `C1 = (0.01 max)^2`, `C2 = (0.03 max)^2`.
pub fn ssim(s: &ImageSample, s_hat: &ImageSample, window: usize, max_val: f64) -> Result<f64> {
    if (s.width, s.height, s.channels) != (s_hat.width, s_hat.height, s_hat.channels) {
        return Err(Error::dim("images differ in shape"));
    }
    if window == 0 || window > s.width || window > s.height {
        return Err(Error::config(format!(
            "SSIM window {window} does not fit a {}x{} image",
            s.width, s.height
        )));
    }
    let c1 = (0.01 * max_val).powi(2);
    let c2 = (0.03 * max_val).powi(2);
    let n = (window * window) as f64;
    let (w, ch) = (s.width, s.channels);
    let at = |img: &ImageSample, x: usize, y: usize, k: usize| img.pixels[(y * w + x) * ch + k];
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..ch {
        for y0 in 0..=s.height - window {
            for x0 in 0..=s.width - window {
                let mut mx = 0.0;
                let mut my = 0.0;
                for y in y0..y0 + window {
                    for x in x0..x0 + window {
                        mx += at(s, x, y, k);
                        my += at(s_hat, x, y, k);
                    }
                }
                mx /= n;
                my /= n;
                let mut vx = 0.0;
                let mut vy = 0.0;
                let mut cov = 0.0;
                for y in y0..y0 + window {
                    for x in x0..x0 + window {
                        let dx = at(s, x, y, k) - mx;
                        let dy = at(s_hat, x, y, k) - my;
                        vx += dx * dx;
                        vy += dy * dy;
                        cov += dx * dy;
                    }
                }
                vx /= n;
                vy /= n;
                cov /= n;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl QualityReport {
    /// Scores a decoder output against the original on the `[0, 1]` pixel
    /// scale, clamping the reconstruction first. The SSIM window shrinks to
    /// the image if the image is smaller than the default.
    pub fn score(s: &ImageSample, s_hat: &ImageSample) -> Result<Self> {
        let clamped = s_hat.clamped();
        let mse = mse(&s.pixels, &clamped.pixels)?;
        let window = DEFAULT_SSIM_WINDOW.min(s.width).min(s.height);
        Ok(QualityReport {
            mse,
            psnr: psnr_from_mse(mse, 1.0, DEFAULT_PSNR_CAP_DB),
            ssim: ssim(s, &clamped, window, 1.0)?,
        })
    }
}
