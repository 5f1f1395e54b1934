//! PSNR and SSIM on clamped linear RGB.

use thiserror::Error;

pub use crate::image::Image as ImageF;
use crate::image::Image;

/// Returned for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("image sizes differ: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("image {w}×{h} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window")]
    TooSmall { w: usize, h: usize },
}

fn check_sizes(a: &Image, b: &Image) -> Result<(), MetricError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricError::SizeMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64, MetricError> {
    check_sizes(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.clamp(0.0, 1.0) - y.clamp(0.0, 1.0);
            d * d
        })
        .sum::<f64>()
        / n)
}

/// `−10·log₁₀(MSE)` with peak 1, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricError> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m))
}

pub fn psnr_from_mse(m: f64) -> f64 {
    if m <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * m.log10()).min(PSNR_CAP)
    }
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - c;
        *t = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.map(|t| t / s)
}

/// Single-scale SSIM, averaged over valid window positions and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricError> {
    check_sizes(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall { w, h });
    }
    let taps = gaussian_taps();
    let (c1, c2) = ((SSIM_K1 * 1.0).powi(2), (SSIM_K2 * 1.0).powi(2));
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.data().iter().skip(ch).step_by(3).map(|v| v.clamp(0.0, 1.0)).collect();
        let y: Vec<f64> = b.data().iter().skip(ch).step_by(3).map(|v| v.clamp(0.0, 1.0)).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|img| filter_valid(img, w, h, &taps));
        for i in 0..ow * oh {
            let (mux, muy) = (mx[i], my[i]);
            let vx = sxx[i] - mux * mux;
            let vy = syy[i] - muy * muy;
            let cov = sxy[i] - mux * muy;
            total += ((2.0 * mux * muy + c1) * (2.0 * cov + c2))
                / ((mux * mux + muy * muy + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (3 * ow * oh) as f64)
}

/// Separable valid-mode correlation with `taps` along both axes.
fn filter_valid(img: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &img[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| taps[k] * horiz[(y + k) * ow + x]).sum();
        }
    }
    out
}
