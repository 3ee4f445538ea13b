//! Image energies for the snake and their gradient vector flow.
//!
//! Derivatives are central differences with replicate borders; `x` runs along
//! columns and `y` along rows.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{Point, ScalarField, SnakeParams};

/// Guard added to `C_x² + C_y²` before the `3/2` power in [`e_term`].
pub const TERM_EPS: f64 = 1e-8;

/// GVF values above this magnitude are treated as divergence.
const GVF_BLOWUP: f64 = 1e12;

const PARALLEL_MIN_PIXELS: usize = 1 << 14;

/// Two-component field; `u` along columns (x), `v` along rows (y).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub u: ScalarField,
    pub v: ScalarField,
}

impl VectorField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            u: ScalarField::zeros(rows, cols),
            v: ScalarField::zeros(rows, cols),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    /// Bilinear sample at a continuous position, returned as `[row, col]` components.
    pub fn sample(&self, p: Point) -> Point {
        [self.v.sample_bilinear(p[0], p[1]), self.u.sample_bilinear(p[0], p[1])]
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u
            .data()
            .iter()
            .zip(self.v.data())
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Separable Gaussian blur, kernel truncated at `⌈3σ⌉` and renormalized.
pub fn gaussian_smooth(img: &ScalarField, sigma: f64) -> Result<ScalarField> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParam(format!("sigma must be > 0, got {sigma}")));
    }
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let (rows, cols) = img.dims();
    let horizontal = ScalarField::from_fn(rows, cols, |r, c| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * img.clamped(r as isize, c as isize + i as isize - radius))
            .sum()
    });
    Ok(ScalarField::from_fn(rows, cols, |r, c| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * horizontal.clamped(r as isize + i as isize - radius, c as isize))
            .sum()
    }))
}

/// Central-difference derivatives of a smoothed image.
struct Derivatives {
    x: ScalarField,
    y: ScalarField,
}

fn first_derivatives(f: &ScalarField) -> Derivatives {
    let (rows, cols) = f.dims();
    let at = |r: usize, c: usize, dr: isize, dc: isize| *f.clamped(r as isize + dr, c as isize + dc);
    Derivatives {
        x: ScalarField::from_fn(rows, cols, |r, c| 0.5 * (at(r, c, 0, 1) - at(r, c, 0, -1))),
        y: ScalarField::from_fn(rows, cols, |r, c| 0.5 * (at(r, c, 1, 0) - at(r, c, -1, 0))),
    }
}

/// `(∂f/∂x, ∂f/∂y)` as a vector field.
pub fn gradient(f: &ScalarField) -> VectorField {
    let d = first_derivatives(f);
    VectorField { u: d.x, v: d.y }
}

/// Line energy: the Gaussian-smoothed intensity.
pub fn e_line(img: &ScalarField, sigma: f64) -> Result<ScalarField> {
    gaussian_smooth(img, sigma)
}

/// Edge energy `−|∇(G_σ ∗ I)|²`.
pub fn e_edge(img: &ScalarField, sigma: f64) -> Result<ScalarField> {
    let smooth = gaussian_smooth(img, sigma)?;
    let d = first_derivatives(&smooth);
    Ok(ScalarField::from_fn(img.rows(), img.cols(), |r, c| {
        let (gx, gy) = (d.x[(r, c)], d.y[(r, c)]);
        -(gx * gx + gy * gy)
    }))
}

/// Termination energy: curvature of the level lines of `C = G_σ ∗ I`,
/// `(C_yy C_x² − 2 C_xy C_x C_y + C_xx C_y²) / (C_x² + C_y² + ε)^{3/2}`.
pub fn e_term(img: &ScalarField, sigma: f64) -> Result<ScalarField> {
    let c = gaussian_smooth(img, sigma)?;
    let at = |r: usize, col: usize, dr: isize, dc: isize| *c.clamped(r as isize + dr, col as isize + dc);
    Ok(ScalarField::from_fn(img.rows(), img.cols(), |r, col| {
        let center = at(r, col, 0, 0);
        let cx = 0.5 * (at(r, col, 0, 1) - at(r, col, 0, -1));
        let cy = 0.5 * (at(r, col, 1, 0) - at(r, col, -1, 0));
        let cxx = at(r, col, 0, 1) - 2.0 * center + at(r, col, 0, -1);
        let cyy = at(r, col, 1, 0) - 2.0 * center + at(r, col, -1, 0);
        let cxy = 0.25 * (at(r, col, 1, 1) - at(r, col, 1, -1) - at(r, col, -1, 1) + at(r, col, -1, -1));
        let num = cyy * cx * cx - 2.0 * cxy * cx * cy + cxx * cy * cy;
        num / (cx * cx + cy * cy + TERM_EPS).powf(1.5)
    }))
}

/// Weighted sum of the three energies before normalization.
pub fn e_img_raw(img: &ScalarField, params: &SnakeParams) -> Result<ScalarField> {
    let mut out = ScalarField::zeros(img.rows(), img.cols());
    let terms: [(f64, fn(&ScalarField, f64) -> Result<ScalarField>); 3] =
        [(params.w_line, e_line), (params.w_edge, e_edge), (params.w_term, e_term)];
    for (w, term) in terms {
        if w == 0.0 {
            continue;
        }
        let t = term(img, params.sigma)?;
        out.data_mut().iter_mut().zip(t.data()).for_each(|(o, v)| *o += w * v);
    }
    Ok(out)
}

/// Min-max normalization to `[0, 1]`; a flat field maps to all zeros.
pub fn normalize_min_max(f: &ScalarField) -> ScalarField {
    let (lo, hi) = f.min_max();
    if !(hi > lo) {
        return ScalarField::zeros(f.rows(), f.cols());
    }
    let span = hi - lo;
    f.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// `w_line E_line + w_edge E_edge + w_term E_term`, min-max normalized to `[0, 1]`.
pub fn e_img(img: &ScalarField, params: &SnakeParams) -> Result<ScalarField> {
    Ok(normalize_min_max(&e_img_raw(img, params)?))
}

/// Edge map `f = −E_img` fed to the GVF.
pub fn edge_map(img: &ScalarField, params: &SnakeParams) -> Result<ScalarField> {
    Ok(e_img(img, params)?.map(|v| -v))
}

fn map_rows(out: &mut [f64], cols: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    if out.len() >= PARALLEL_MIN_PIXELS {
        out.par_chunks_mut(cols).enumerate().for_each(|(r, row)| f(r, row));
    } else {
        out.chunks_mut(cols).enumerate().for_each(|(r, row)| f(r, row));
    }
}

/// 5-point Laplacian with replicate borders.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let (rows, cols) = f.dims();
    let mut out = ScalarField::zeros(rows, cols);
    map_rows(out.data_mut(), cols, |r, row| {
        let (r, rr) = (r as isize, r);
        for (c, o) in row.iter_mut().enumerate() {
            let ci = c as isize;
            *o = f.clamped(r - 1, ci) + f.clamped(r + 1, ci) + f.clamped(r, ci - 1) + f.clamped(r, ci + 1)
                - 4.0 * f[(rr, c)];
        }
    });
    out
}

/// Gradient vector flow of the edge map `f`, by explicit time stepping of
/// `∂u/∂t = μ∇²u − (u − f_x)(f_x² + f_y²)` (and likewise `v` with `f_y`),
/// starting from `(u, v) = ∇f`.
pub fn gvf(f: &ScalarField, mu_gvf: f64, iters: usize, dt: f64) -> Result<VectorField> {
    if !(mu_gvf > 0.0) {
        return Err(Error::InvalidParam(format!("mu_gvf must be > 0, got {mu_gvf}")));
    }
    if !(dt > 0.0 && dt * 4.0 * mu_gvf < 1.0) {
        return Err(Error::InvalidParam(format!(
            "GVF time step {dt} violates dt·4μ < 1 for μ = {mu_gvf}"
        )));
    }
    let (rows, cols) = f.dims();
    let d = first_derivatives(f);
    let mag2: Vec<f64> = d.x.data().iter().zip(d.y.data()).map(|(a, b)| a * a + b * b).collect();
    let mut u = d.x.clone();
    let mut v = d.y.clone();
    let mut next_u = ScalarField::zeros(rows, cols);
    let mut next_v = ScalarField::zeros(rows, cols);

    for iteration in 0..iters {
        for (cur, next, target) in [(&u, &mut next_u, &d.x), (&v, &mut next_v, &d.y)] {
            map_rows(next.data_mut(), cols, |r, row| {
                let ri = r as isize;
                for (c, o) in row.iter_mut().enumerate() {
                    let ci = c as isize;
                    let x = cur[(r, c)];
                    let lap = cur.clamped(ri - 1, ci)
                        + cur.clamped(ri + 1, ci)
                        + cur.clamped(ri, ci - 1)
                        + cur.clamped(ri, ci + 1)
                        - 4.0 * x;
                    *o = x + dt * (mu_gvf * lap - (x - target[(r, c)]) * mag2[r * cols + c]);
                }
            });
        }
        std::mem::swap(&mut u, &mut next_u);
        std::mem::swap(&mut v, &mut next_v);
        let blown = u.data().iter().chain(v.data()).any(|x| !(x.abs() <= GVF_BLOWUP));
        if blown {
            return Err(Error::Unstable { iteration });
        }
    }
    Ok(VectorField { u, v })
}

/// Max-norm residual of the GVF Euler equations for `field` on edge map `f`.
pub fn gvf_residual(field: &VectorField, f: &ScalarField, mu_gvf: f64) -> f64 {
    let d = first_derivatives(f);
    let lu = laplacian(&field.u);
    let lv = laplacian(&field.v);
    let mut worst = 0.0_f64;
    for i in 0..f.len() {
        let (fx, fy) = (d.x.data()[i], d.y.data()[i]);
        let b = fx * fx + fy * fy;
        let ru = mu_gvf * lu.data()[i] - (field.u.data()[i] - fx) * b;
        let rv = mu_gvf * lv.data()[i] - (field.v.data()[i] - fy) * b;
        worst = worst.max(ru.abs()).max(rv.abs());
    }
    worst
}

/// Explicit GVF step: `0.9/(4μ)`, shortened to `1.8/(8μ + max|∇f|²)` so the
/// data term cannot push the iteration past its stability limit either.
pub fn gvf_step(f: &ScalarField, mu_gvf: f64) -> f64 {
    let g = gradient(f);
    let b = g.u.data().iter().zip(g.v.data()).map(|(x, y)| x * x + y * y).fold(0.0, f64::max);
    (0.9 / (4.0 * mu_gvf)).min(1.8 / (8.0 * mu_gvf + b))
}

/// External force field for the snake on `img`: GVF of the edge map, or `−∇E_img`.
pub fn external_field(img: &ScalarField, params: &SnakeParams) -> Result<VectorField> {
    let f = edge_map(img, params)?;
    match params.external_force {
        crate::types::ExternalForce::Gvf => gvf(&f, params.mu_gvf, params.gvf_iters, gvf_step(&f, params.mu_gvf)),
        crate::types::ExternalForce::Gradient => Ok(gradient(&f)),
    }
}
