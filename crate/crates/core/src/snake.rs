//! Semi-implicit active contour evolution.

use crate::energy::VectorField;
use crate::error::{Error, Result};
use crate::types::{dist, signed_area, BinaryMask, Contour, Point, SnakeParams, MIN_POINT_SEPARATION};

/// Iterations between arc-length resamplings inside [`evolve`].
pub const RESAMPLE_PERIOD: usize = 5;

/// Minimum point count produced by [`resample`].
pub const MIN_RESAMPLE_POINTS: usize = 8;

/// Snapshot after one evolution step.
#[derive(Debug, Clone, PartialEq)]
pub struct SnakeState {
    pub contour: Contour,
    pub iteration: usize,
    /// Largest point displacement of this step, in pixels.
    pub last_move: f64,
    /// `‖(I + γA)x_new − (x_old + γF)‖_∞` of this step's implicit solve.
    pub residual: f64,
}

/// Factored `I + γA` for the cyclic internal-energy operator
/// `A = −α D₂ + β D₄` on `n` points.
#[derive(Debug, Clone)]
pub struct InternalSolver {
    n: usize,
    matrix: Vec<f64>,
    /// Lower Cholesky factor, row-major.
    chol: Vec<f64>,
}

/// Builds the implicit step operator for a closed snake with `n` points.
pub fn internal_step_matrix(n: usize, alpha: f64, beta: f64, gamma: f64) -> Result<InternalSolver> {
    if n < 5 {
        return Err(Error::InvalidParam(format!("internal operator needs n >= 5, got {n}")));
    }
    if !(alpha >= 0.0 && beta >= 0.0 && gamma > 0.0) || !(alpha + beta + gamma).is_finite() {
        return Err(Error::InvalidParam(format!(
            "need alpha, beta >= 0 and gamma > 0, got {alpha}, {beta}, {gamma}"
        )));
    }
    let mut m = vec![0.0; n * n];
    let stencil = [
        (0isize, 1.0 + gamma * (2.0 * alpha + 6.0 * beta)),
        (1, gamma * (-alpha - 4.0 * beta)),
        (-1, gamma * (-alpha - 4.0 * beta)),
        (2, gamma * beta),
        (-2, gamma * beta),
    ];
    for i in 0..n {
        for &(off, w) in &stencil {
            let j = (i as isize + off).rem_euclid(n as isize) as usize;
            m[i * n + j] += w;
        }
    }
    let chol = cholesky(&m, n).ok_or(Error::SingularOperator)?;
    Ok(InternalSolver { n, matrix: m, chol })
}

fn cholesky(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

impl InternalSolver {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `(I + γA) x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n, "right-hand side length");
        let n = self.n;
        let l = &self.chol;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }

    /// Computes `(I + γA) x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length");
        (0..self.n)
            .map(|i| self.matrix[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Dense `(I + γA)`, row-major.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// Outward unit normals by averaging the normals of the two incident edges.
/// Orientation is taken from the signed area, so clockwise input works too.
pub fn outward_normals(contour: &Contour) -> Result<Vec<Point>> {
    let p = contour.points();
    let n = p.len();
    let flip = if contour.signed_area() < 0.0 { -1.0 } else { 1.0 };
    // Outward normal of edge a->b on a counter-clockwise ring.
    let edge_normal = |a: Point, b: Point, index: usize| -> Result<Point> {
        let len = dist(a, b);
        if len <= MIN_POINT_SEPARATION {
            return Err(Error::DegenerateNormal { index });
        }
        let (dr, dc) = ((b[0] - a[0]) / len, (b[1] - a[1]) / len);
        Ok([-dc * flip, dr * flip])
    };
    (0..n)
        .map(|i| {
            let prev = p[(i + n - 1) % n];
            let next = p[(i + 1) % n];
            let a = edge_normal(prev, p[i], i)?;
            let b = edge_normal(p[i], next, i)?;
            let s = [a[0] + b[0], a[1] + b[1]];
            let len = s[0].hypot(s[1]);
            if len <= 1e-12 {
                return Err(Error::DegenerateNormal { index: i });
            }
            Ok([s[0] / len, s[1] / len])
        })
        .collect()
}

/// `κ n̂` at every point.
pub fn classic_balloon(contour: &Contour, kappa: f64) -> Result<Vec<Point>> {
    Ok(outward_normals(contour)?.into_iter().map(|n| [kappa * n[0], kappa * n[1]]).collect())
}

/// `K(x, y) n̂` with `K = +κ` where the point's pixel is inside the mask and `−κ` elsewhere.
pub fn improved_balloon(contour: &Contour, mask: &BinaryMask, kappa: f64) -> Result<Vec<Point>> {
    Ok(outward_normals(contour)?
        .into_iter()
        .zip(contour.points())
        .map(|(n, p)| {
            let k = if mask.contains_point(*p) { kappa } else { -kappa };
            [k * n[0], k * n[1]]
        })
        .collect())
}

/// Uniform arc-length resampling starting at the first point, with
/// `round(perimeter / spacing)` points (at least eight).
pub fn resample(contour: &Contour, spacing: f64) -> Result<Contour> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidParam(format!("resample spacing must be > 0, got {spacing}")));
    }
    let p = contour.points();
    let n = p.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        let last = cum[i];
        cum.push(last + dist(p[i], p[(i + 1) % n]));
    }
    let perimeter = cum[n];
    let count = ((perimeter / spacing).round() as usize).max(MIN_RESAMPLE_POINTS);
    let step = perimeter / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = k as f64 * step;
        while seg + 1 < n && cum[seg + 1] <= s {
            seg += 1;
        }
        let (a, b) = (p[seg], p[(seg + 1) % n]);
        let t = (s - cum[seg]) / (cum[seg + 1] - cum[seg]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    Contour::new(out)
}

fn external_forces(contour: &Contour, field: &VectorField, mask: Option<&BinaryMask>, kappa: f64) -> Result<Vec<Point>> {
    let mut f: Vec<Point> = contour.points().iter().map(|&p| field.sample(p)).collect();
    let balloon = match mask {
        Some(m) => Some(improved_balloon(contour, m, kappa)?),
        None if kappa > 0.0 => Some(classic_balloon(contour, kappa)?),
        None => None,
    };
    if let Some(b) = balloon {
        for (fi, bi) in f.iter_mut().zip(b) {
            fi[0] += bi[0];
            fi[1] += bi[1];
        }
    }
    Ok(f)
}

fn max_residual(solver: &InternalSolver, x: &[f64], rhs: &[f64]) -> f64 {
    solver.apply(x).iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Evolves `init` under the internal energy, the sampled external field and
/// a balloon force (improved when a building mask is given, classic otherwise).
///
/// Returns the final contour and one [`SnakeState`] per iteration.
pub fn evolve(
    init: &Contour,
    field: &VectorField,
    mask: Option<&BinaryMask>,
    params: &SnakeParams,
) -> Result<(Contour, Vec<SnakeState>)> {
    params.validate()?;
    let (rows, cols) = field.dims();
    if let Some(m) = mask {
        if m.dims() != (rows, cols) {
            let (left_rows, left_cols) = m.dims();
            return Err(Error::DimMismatch { left_rows, left_cols, right_rows: rows, right_cols: cols });
        }
    }
    let mut contour = resample(&init.to_ccw(), params.resample_spacing)?;
    let mut solver = internal_step_matrix(contour.len(), params.alpha, params.beta, params.gamma)?;
    let mut history = Vec::new();
    let gamma = params.gamma;

    for iteration in 1..=params.max_iters {
        let force = external_forces(&contour, field, mask, params.kappa)?;
        let pts = contour.points();
        let rhs_r: Vec<f64> = pts.iter().zip(&force).map(|(p, f)| p[0] + gamma * f[0]).collect();
        let rhs_c: Vec<f64> = pts.iter().zip(&force).map(|(p, f)| p[1] + gamma * f[1]).collect();
        let new_r = solver.solve(&rhs_r);
        let new_c = solver.solve(&rhs_c);
        let residual = max_residual(&solver, &new_r, &rhs_r).max(max_residual(&solver, &new_c, &rhs_c));
        let moved: Vec<Point> = new_r.into_iter().zip(new_c).map(|(r, c)| [r, c]).collect();
        if moved.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::Diverged { iteration });
        }
        let last_move = pts.iter().zip(&moved).map(|(a, b)| dist(*a, *b)).fold(0.0, f64::max);

        let outside = moved.iter().all(|p| p[0] < 0.0 || p[1] < 0.0 || p[0] > rows as f64 || p[1] > cols as f64);
        if outside {
            return Err(Error::Diverged { iteration });
        }
        let area = signed_area(&moved);
        if area < 1.0 {
            return Err(Error::Collapsed { iteration, area });
        }
        contour = Contour::new(moved).map_err(|_| Error::Collapsed { iteration, area })?;
        if iteration % RESAMPLE_PERIOD == 0 {
            contour = resample(&contour, params.resample_spacing)?;
            if contour.len() != solver.n() {
                solver = internal_step_matrix(contour.len(), params.alpha, params.beta, gamma)?;
            }
        }
        history.push(SnakeState { contour: contour.clone(), iteration, last_move, residual });
        if last_move < params.convergence_tol {
            break;
        }
    }
    Ok((contour, history))
}
