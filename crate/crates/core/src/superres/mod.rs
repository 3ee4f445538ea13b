//! Dense z-image generation from a sparse LiDAR projection.
//!
//! Points are dropped onto the raster (keeping the highest return per pixel),
//! then the empty pixels are filled by minimizing
//! `‖∇x φ‖² + ‖∇y φ‖² + λ‖φ‖₁` with the projected pixels held fixed, using
//! FISTA. The baseline interpolators and the image-quality metrics used to
//! compare against them live in the submodules.

mod benchmark;
mod interp;
mod quality;
mod tiling;

pub use benchmark::{reference_dsm, sr_benchmark, sr_benchmark_factors, BenchRow, Method, SrBenchReport, MIN_REFERENCE_FILL};
pub use interp::{interp_bilinear, interp_nearest};
pub use quality::{mse, psnr, rmse_image, ssim, ssim_with_range, SSIM_WINDOW};
pub use tiling::{superres_tiled, TileLayout, DEFAULT_HALO};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GeoTransform, PointCloud3D, SparseZImage, ZImage};

/// Grids at or above this many pixels run the stencil passes on the rayon pool.
const PARALLEL_MIN_PIXELS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrParams {
    /// Weight of the l1 term. `None` picks `1e-3 * |mean of constrained values|`
    /// (or `1e-3` when that mean is zero).
    pub lambda: Option<f64>,
    pub max_iters: usize,
    /// Stop once `‖φ^(k+1) − φ^(k)‖₂` drops below this (meters).
    pub diff_tol: f64,
    pub step_size: f64,
}

impl Default for SrParams {
    fn default() -> Self {
        Self {
            lambda: None,
            max_iters: 1000,
            diff_tol: 1e-3,
            step_size: 1.0 / 16.0,
        }
    }
}

impl SrParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidParam(format!("lambda must be >= 0, got {l}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParam("max_iters must be >= 1".into()));
        }
        if !(self.diff_tol > 0.0) {
            return Err(Error::InvalidParam("diff_tol must be > 0".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParam("step_size must be > 0".into()));
        }
        Ok(())
    }

    /// The l1 weight actually used for `sparse`.
    pub fn resolved_lambda(&self, sparse: &SparseZImage) -> f64 {
        self.lambda.unwrap_or_else(|| {
            let n = sparse.len().max(1) as f64;
            let mean = sparse.iter().map(|(_, z)| z).sum::<f64>() / n;
            if mean == 0.0 {
                1e-3
            } else {
                1e-3 * mean.abs()
            }
        })
    }
}

/// Per-iteration record of the propagation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SrTrace {
    /// `‖φ^(k+1) − φ^(k)‖₂` per iteration.
    pub diff: Vec<f64>,
    /// `F(φ^(k+1))` per iteration.
    pub cost: Vec<f64>,
    /// First iteration (0-based) after which no pixel is still at its zero start value.
    pub filled_at: Option<usize>,
    pub lambda: f64,
}

impl SrTrace {
    pub fn iterations(&self) -> usize {
        self.diff.len()
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.diff.last().is_some_and(|&d| d < tol)
    }
}

/// Drops each point into the pixel containing it. Collisions keep the highest elevation.
pub fn project_points(cloud: &PointCloud3D, gt: &GeoTransform) -> Result<SparseZImage> {
    gt.validate()?;
    let mut sparse = SparseZImage::new(gt.rows, gt.cols);
    for &[x, y, z] in cloud.points() {
        let [r, c] = gt.world_to_pixel(x, y);
        let (r, c) = (r.floor(), c.floor());
        if r < 0.0 || c < 0.0 || r >= gt.rows as f64 || c >= gt.cols as f64 {
            continue;
        }
        let (r, c) = (r as usize, c as usize);
        match sparse.get(r, c) {
            Some(prev) if prev >= z => {}
            _ => sparse.insert(r, c, z)?,
        }
    }
    if sparse.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(sparse)
}

/// `‖∇x φ‖² + ‖∇y φ‖² + λ‖φ‖₁` with forward differences; the last row and
/// column have zero gradient.
pub fn ssdg_cost(img: &ZImage, lambda: f64) -> f64 {
    let (rows, cols) = img.dims();
    let mut smooth = 0.0;
    let mut l1 = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let v = img[(r, c)];
            if c + 1 < cols {
                let d = img[(r, c + 1)] - v;
                smooth += d * d;
            }
            if r + 1 < rows {
                let d = img[(r + 1, c)] - v;
                smooth += d * d;
            }
            l1 += v.abs();
        }
    }
    smooth + lambda * l1
}

/// Gradient of the smooth part of [`ssdg_cost`]: `2 · Σ_j (φ_i − φ_j)` over the
/// in-raster 4-neighbors `j` of each pixel.
pub fn ssdg_gradient(img: &ZImage) -> ZImage {
    let (rows, cols) = img.dims();
    let mut out = ZImage::zeros(rows, cols);
    for_each_row(out.data_mut(), cols, |r, row| {
        for (c, g) in row.iter_mut().enumerate() {
            *g = 2.0 * neighbor_excess(img.data(), rows, cols, r, c);
        }
    });
    out
}

/// `Σ_j (φ_i − φ_j)` over in-raster 4-neighbors.
#[inline]
fn neighbor_excess(v: &[f64], rows: usize, cols: usize, r: usize, c: usize) -> f64 {
    let i = r * cols + c;
    let x = v[i];
    let mut s = 0.0;
    if c > 0 {
        s += x - v[i - 1];
    }
    if c + 1 < cols {
        s += x - v[i + 1];
    }
    if r > 0 {
        s += x - v[i - cols];
    }
    if r + 1 < rows {
        s += x - v[i + cols];
    }
    s
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn for_each_row(out: &mut [f64], cols: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    if out.len() >= PARALLEL_MIN_PIXELS {
        out.par_chunks_mut(cols).enumerate().for_each(|(r, row)| f(r, row));
    } else {
        out.chunks_mut(cols).enumerate().for_each(|(r, row)| f(r, row));
    }
}

/// Fills the unconstrained pixels of `sparse` by FISTA on the SSDG + l1 cost.
///
/// Each iteration takes a gradient step on the smooth term from the
/// extrapolated point, soft-thresholds the free pixels by `λ · step`, resets
/// the constrained pixels, and extrapolates with the usual
/// `t_{k+1} = (1 + √(1 + 4 t_k²)) / 2` momentum. Constrained pixels of the
/// result are bit-identical to the input values.
pub fn propagate_fista(sparse: &SparseZImage, params: &SrParams) -> Result<(ZImage, SrTrace)> {
    params.validate()?;
    if sparse.is_empty() {
        return Err(Error::EmptySparse);
    }
    let (rows, cols) = (sparse.rows(), sparse.cols());
    let n = rows * cols;
    let lambda = params.resolved_lambda(sparse);
    let step = params.step_size;
    let thresh = lambda * step;

    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for ((r, c), z) in sparse.iter() {
        fixed[r * cols + c] = Some(z);
    }
    let fixed = fixed;

    let mut x: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let mut y = x.clone();
    let mut x_next = vec![0.0; n];
    let mut t = 1.0_f64;

    let mut trace = SrTrace {
        lambda,
        ..Default::default()
    };
    let mut all_filled = fixed.iter().all(Option::is_some);
    if all_filled {
        trace.filled_at = Some(0);
    }

    for k in 0..params.max_iters {
        {
            let y = &y;
            let fixed = &fixed;
            for_each_row(&mut x_next, cols, |r, row| {
                for (c, out) in row.iter_mut().enumerate() {
                    let i = r * cols + c;
                    *out = match fixed[i] {
                        Some(z) => z,
                        None => {
                            let g = 2.0 * neighbor_excess(y, rows, cols, r, c);
                            soft_threshold(y[i] - step * g, thresh)
                        }
                    };
                }
            });
        }
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: k });
        }

        let diff = x_next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..n {
            y[i] = match fixed[i] {
                Some(z) => z,
                None => x_next[i] + momentum * (x_next[i] - x[i]),
            };
        }
        std::mem::swap(&mut x, &mut x_next);
        t = t_next;

        let img = ZImage::from_vec(rows, cols, x.clone())?;
        trace.diff.push(diff);
        trace.cost.push(ssdg_cost(&img, lambda));
        if !all_filled && x.iter().all(|&v| v != 0.0) {
            all_filled = true;
            trace.filled_at = Some(k);
        }
        if diff < params.diff_tol {
            break;
        }
    }

    Ok((ZImage::from_vec(rows, cols, x)?, trace))
}
