//! Image quality metrics and summary statistics.

use crate::error::Result;
use crate::field::{check_shape, ScalarImage};

/// PSNR reported in CSV output when the images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `10 log10(peak^2 / MSE)`; `+inf` when the images coincide.
pub fn psnr(x: &ScalarImage, reference: &ScalarImage, peak: f64) -> Result<f64> {
    check_shape(reference.shape(), x.shape())?;
    let n = x.as_slice().len() as f64;
    let mse = x.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean SSIM over all 7x7 windows lying inside the image, with uniform
/// weights, population (co)variances and dynamic range 1. Images smaller
/// than the window use a single window covering the whole image.
pub fn ssim(x: &ScalarImage, reference: &ScalarImage) -> Result<f64> {
    check_shape(reference.shape(), x.shape())?;
    let shape = x.shape();
    let wh = SSIM_WINDOW.min(shape.height);
    let ww = SSIM_WINDOW.min(shape.width);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (a, b) = (x.as_slice(), reference.as_slice());
    let count = (wh * ww) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for i0 in 0..=shape.height - wh {
        for j0 in 0..=shape.width - ww {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in i0..i0 + wh {
                for j in j0..j0 + ww {
                    let k = shape.index(i, j);
                    sa += a[k];
                    sb += b[k];
                    saa += a[k] * a[k];
                    sbb += b[k] * b[k];
                    sab += a[k] * b[k];
                }
            }
            let (ma, mb) = (sa / count, sb / count);
            let va = saa / count - ma * ma;
            let vb = sbb / count - mb * mb;
            let cov = sab / count - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

/// Mean and normal-approximation 95% confidence interval
/// `mean -/+ 1.96 s / sqrt(n)` with the sample standard deviation `s`.
/// A single value gives a zero-width interval; no values give `None`.
pub fn mean_ci(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, mean, mean));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * var.sqrt() / n.sqrt();
    Some((mean, mean - half, mean + half))
}
