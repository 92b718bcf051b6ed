//! Image fidelity metrics: MSE, PSNR and single-scale SSIM.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::renderer::Image;

/// PSNR reported for identical images in tables.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Rec. 601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub valid_pixel_fraction: f64,
}

impl MetricReport {
    /// Metrics of `render` against `reference`; PSNR is capped for tabulation and
    /// the valid fraction comes from the render.
    pub fn compute(render: &Image, reference: &Image) -> Result<Self> {
        let mse = mse(render, reference)?;
        Ok(MetricReport {
            psnr: psnr_from_mse(mse).min(PSNR_CAP_DB),
            ssim: ssim(render, reference)?,
            mse,
            valid_pixel_fraction: render.valid_fraction(),
        })
    }
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::DimensionMismatch {
            expected: (a.width(), a.height()),
            found: (b.width(), b.height()),
        });
    }
    Ok(())
}

/// Mean squared error over every channel of every pixel.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (p - q).norm_squared())
        .sum();
    Ok(sum / (3 * a.pixels().len()) as f64)
}

/// MSE restricted to pixels valid in both images; `None` when they share none.
pub fn mse_masked(a: &Image, b: &Image) -> Result<Option<f64>> {
    check_dims(a, b)?;
    let (sum, count) = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .zip(a.validity().iter().zip(b.validity()))
        .filter(|(_, (va, vb))| **va && **vb)
        .fold((0.0, 0usize), |(s, n), ((p, q), _)| (s + (p - q).norm_squared(), n + 1));
    Ok((count > 0).then(|| sum / (3 * count) as f64))
}

/// `10 log10(1 / mse)` for unit-peak images; infinite when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

fn luminance(img: &Image) -> Vec<f64> {
    img.pixels()
        .iter()
        .map(|p| LUMA[0] * p.x + LUMA[1] * p.y + LUMA[2] * p.z)
        .collect()
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian filter keeping only fully covered window positions.
fn filter_valid(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let out_w = width - n + 1;
    let out_h = height - n + 1;
    let mut rows = vec![0.0; out_w * height];
    for y in 0..height {
        for x in 0..out_w {
            rows[y * out_w + x] = (0..n).map(|i| kernel[i] * data[y * width + x + i]).sum();
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            out[y * out_w + x] = (0..n).map(|i| kernel[i] * rows[(y + i) * out_w + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) of the luminance.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let x = luminance(a);
    let y = luminance(b);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let kernel = gaussian_kernel();
    let [mu_x, mu_y, e_xx, e_yy, e_xy] =
        [&x, &y, &xx, &yy, &xy].map(|d| filter_valid(d, w, h, &kernel));

    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}
