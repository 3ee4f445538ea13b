//! RMSE, PSNR and windowed SSIM between two rasters of equal size.

use crate::error::Result;
use crate::types::ZImage;

/// Side of the square SSIM window (pixels).
pub const SSIM_WINDOW: usize = 8;

pub fn mse(a: &ZImage, b: &ZImage) -> Result<f64> {
    a.same_dims(b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

pub fn rmse_image(a: &ZImage, b: &ZImage) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// `10 log10(peak² / MSE)` in dB; `+∞` when the images are identical.
pub fn psnr(a: &ZImage, b: &ZImage, peak_val: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak_val * peak_val / m).log10())
}

/// SSIM with the dynamic range `L` taken from the reference `b` (its
/// max − min), falling back to `a`'s range and then to 1 for flat images.
pub fn ssim(a: &ZImage, b: &ZImage) -> Result<f64> {
    let range = |img: &ZImage| {
        let (lo, hi) = img.min_max();
        hi - lo
    };
    let l = [range(b), range(a)].into_iter().find(|&r| r > 0.0).unwrap_or(1.0);
    ssim_with_range(a, b, l)
}

/// Mean SSIM over stride-1 8x8 windows (replicate border), with
/// `C1 = (0.01 L)²`, `C2 = (0.03 L)²` and unit exponents.
pub fn ssim_with_range(a: &ZImage, b: &ZImage, dynamic_range: f64) -> Result<f64> {
    a.same_dims(b)?;
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let (rows, cols) = a.dims();
    // Window covers offsets lo..=hi around its anchor pixel.
    let lo = -((SSIM_WINDOW as isize - 1) / 2);
    let hi = SSIM_WINDOW as isize / 2;
    let count = (SSIM_WINDOW * SSIM_WINDOW) as f64;

    let mut total = 0.0;
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dr in lo..=hi {
                for dc in lo..=hi {
                    let x = *a.clamped(r + dr, c + dc);
                    let y = *b.clamped(r + dr, c + dc);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (ma, mb) = (sa / count, sb / count);
            let va = (saa / count - ma * ma).max(0.0);
            let vb = (sbb / count - mb * mb).max(0.0);
            let cov = sab / count - ma * mb;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (rows * cols) as f64)
}
