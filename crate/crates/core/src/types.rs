//! Geometric and raster value types shared by every stage of the pipeline.
//!
//! Rasters are stored row-major with `(row 0, col 0)` at the north-west
//! corner. Continuous pixel coordinates place the corner of pixel `(i, j)`
//! at `(i, j)` and its center at `(i + 0.5, j + 0.5)`.

use std::collections::BTreeMap;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sub-pixel position stored as `[row, col]`.
pub type Point = [f64; 2];

/// LiDAR point cloud, one `[x, y, z]` triple per point (meters).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud3D {
    points: Vec<[f64; 3]>,
}

impl PointCloud3D {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidGeometry(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps every `stride`-th point, starting with the first.
    pub fn subsample(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        Self {
            points: self.points.iter().step_by(stride).copied().collect(),
        }
    }
}

/// North-up affine map between world meters and fractional pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size: f64, rows: usize, cols: usize) -> Result<Self> {
        let gt = Self {
            origin_x,
            origin_y,
            pixel_size,
            rows,
            cols,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::InvalidParam(format!("pixel_size must be > 0, got {}", self.pixel_size)));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::InvalidParam("geotransform origin must be finite".into()));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParam("geotransform needs at least one row and column".into()));
        }
        Ok(())
    }

    /// World `(x, y)` to fractional `(row, col)`. Out-of-extent results are allowed.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> Point {
        [(self.origin_y - y) / self.pixel_size, (x - self.origin_x) / self.pixel_size]
    }

    pub fn pixel_to_world(&self, row: f64, col: f64) -> (f64, f64) {
        (self.origin_x + col * self.pixel_size, self.origin_y - row * self.pixel_size)
    }

    /// Area of one pixel in m².
    pub fn pixel_area(&self) -> f64 {
        self.pixel_size * self.pixel_size
    }

    /// Geotransform of the window starting at pixel `(row0, col0)`.
    /// Offsets may be negative, the window may extend past this raster.
    pub fn window(&self, row0: isize, col0: isize, rows: usize, cols: usize) -> Self {
        let (x, y) = self.pixel_to_world(row0 as f64, col0 as f64);
        Self {
            origin_x: x,
            origin_y: y,
            pixel_size: self.pixel_size,
            rows,
            cols,
        }
    }
}

/// Dense row-major raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Dense elevation raster (meters).
pub type ZImage = Grid<f64>;
/// Dense unitless field (energies, NDVI, edge maps).
pub type ScalarField = Grid<f64>;
/// Building or vegetation mask.
pub type BinaryMask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidParam(format!(
                "grid of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&T> {
        (row < self.rows && col < self.cols).then(|| &self.data[row * self.cols + col])
    }

    /// Replicate-border access.
    #[inline]
    pub fn clamped(&self, row: isize, col: isize) -> &T {
        let r = row.clamp(0, self.rows as isize - 1) as usize;
        let c = col.clamp(0, self.cols as isize - 1) as usize;
        &self.data[r * self.cols + c]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }

    /// Copies the `rows x cols` window at `(row0, col0)`; outside cells replicate the border.
    pub fn crop_clamped(&self, row0: isize, col0: isize, rows: usize, cols: usize) -> Grid<T>
    where
        T: Clone,
    {
        Grid::from_fn(rows, cols, |r, c| {
            self.clamped(row0 + r as isize, col0 + c as isize).clone()
        })
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Grid<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(min, max)` of the values; `(inf, -inf)` for an empty grid.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample at a continuous `(row, col)` position. Samples live at
    /// pixel centers; positions beyond the outermost centers are clamped.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> f64 {
        let y = (row - 0.5).clamp(0.0, (self.rows - 1) as f64);
        let x = (col - 0.5).clamp(0.0, (self.cols - 1) as f64);
        let r0 = y.floor() as usize;
        let c0 = x.floor() as usize;
        let r1 = (r0 + 1).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let fy = y - r0 as f64;
        let fx = x - c0 as f64;
        let top = self[(r0, c0)] * (1.0 - fx) + self[(r0, c1)] * fx;
        let bottom = self[(r1, c0)] * (1.0 - fx) + self[(r1, c1)] * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Mask lookup at a continuous position; outside the raster reads false.
    pub fn contains_point(&self, p: Point) -> bool {
        if !(p[0] >= 0.0 && p[1] >= 0.0) {
            return false;
        }
        let (r, c) = (p[0].floor() as usize, p[1].floor() as usize);
        self.get(r, c).copied().unwrap_or(false)
    }
}

/// Raster with elevations on a subset of pixels (`Ω*`); all other pixels are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseZImage {
    rows: usize,
    cols: usize,
    filled: BTreeMap<(usize, usize), f64>,
}

impl SparseZImage {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            filled: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sets a filled pixel, replacing any previous value.
    pub fn insert(&mut self, row: usize, col: usize, z: f64) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::InvalidParam(format!(
                "pixel ({row}, {col}) outside {}x{} raster",
                self.rows, self.cols
            )));
        }
        if !z.is_finite() {
            return Err(Error::InvalidParam(format!("non-finite elevation at ({row}, {col})")));
        }
        self.filled.insert((row, col), z);
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.filled.get(&(row, col)).copied()
    }

    pub fn len(&self) -> usize {
        self.filled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filled.is_empty()
    }

    /// Filled pixels in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.filled.iter().map(|(&k, &v)| (k, v))
    }

    pub fn fill_fraction(&self) -> f64 {
        self.filled.len() as f64 / (self.rows * self.cols) as f64
    }

    /// Mask of `Ω*`.
    pub fn constraint_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::filled(self.rows, self.cols, false);
        for &(r, c) in self.filled.keys() {
            m[(r, c)] = true;
        }
        m
    }

    /// Sparse image holding every pixel of a dense raster.
    pub fn from_dense(z: &ZImage) -> Self {
        let mut s = Self::new(z.rows(), z.cols());
        for r in 0..z.rows() {
            for c in 0..z.cols() {
                s.filled.insert((r, c), z[(r, c)]);
            }
        }
        s
    }
}

/// Closed polyline of sub-pixel `[row, col]` points (the last point connects to the first).
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point>,
}

/// Minimum separation between consecutive contour points, in pixels.
pub const MIN_POINT_SEPARATION: f64 = 1e-9;

impl Contour {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidGeometry(format!(
                "contour needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("contour has a non-finite coordinate".into()));
        }
        let n = points.len();
        for i in 0..n {
            if dist(points[i], points[(i + 1) % n]) <= MIN_POINT_SEPARATION {
                return Err(Error::InvalidGeometry(format!(
                    "contour points {i} and {} coincide",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { points })
    }

    /// Builds a contour after dropping a repeated closing point and any consecutive duplicates.
    pub fn from_ring(mut points: Vec<Point>) -> Result<Self> {
        points.dedup_by(|a, b| dist(*a, *b) <= MIN_POINT_SEPARATION);
        while points.len() > 1 && dist(points[0], points[points.len() - 1]) <= MIN_POINT_SEPARATION {
            points.pop();
        }
        Self::new(points)
    }

    /// Axis-aligned rectangle `[row0, row1] x [col0, col1]`, counter-clockwise.
    pub fn rectangle(row0: f64, col0: f64, row1: f64, col1: f64) -> Result<Self> {
        Self::new(vec![[row0, col0], [row0, col1], [row1, col1], [row1, col0]])
    }

    /// Regular `n`-gon, counter-clockwise.
    pub fn circle(center: Point, radius: f64, n: usize) -> Result<Self> {
        let pts = (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                [center[0] + radius * t.sin(), center[1] + radius * t.cos()]
            })
            .collect();
        Self::new(pts)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Shoelace area with `x = col`, `y = row`; positive means counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n).map(|i| dist(self.points[i], self.points[(i + 1) % n])).sum()
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    /// Same contour with counter-clockwise orientation.
    pub fn to_ccw(&self) -> Self {
        if self.signed_area() < 0.0 {
            let mut pts = self.points.clone();
            pts.reverse();
            Self { points: pts }
        } else {
            self.clone()
        }
    }

    pub fn reversed(&self) -> Self {
        let mut pts = self.points.clone();
        pts.reverse();
        Self { points: pts }
    }

    /// `(min_row, min_col, max_row, max_col)`.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        self.points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(r0, c0, r1, c1), p| (r0.min(p[0]), c0.min(p[1]), r1.max(p[0]), c1.max(p[1])),
        )
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len() as f64;
        let (r, c) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(r, c), p| (r + p[0], c + p[1]));
        [r / n, c / n]
    }

    pub fn translated(&self, d_row: f64, d_col: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| [p[0] + d_row, p[1] + d_col]).collect(),
        }
    }
}

pub fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        s += a[1] * b[0] - b[1] * a[0];
    }
    0.5 * s
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Which external force drives the snake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExternalForce {
    /// Gradient vector flow of the edge map.
    #[default]
    Gvf,
    /// Plain `-∇E_img`.
    Gradient,
}

/// Snake and image-energy parameters. Defaults follow the published
/// parameter set (`α = β = 0.2`, `κ = 0.1`, `w = (0.04, 2, 0.01)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnakeParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub mu_gvf: f64,
    pub gvf_iters: usize,
    pub w_line: f64,
    pub w_edge: f64,
    pub w_term: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub resample_spacing: f64,
    pub convergence_tol: f64,
    pub external_force: ExternalForce,
}

impl Default for SnakeParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 0.2,
            kappa: 0.1,
            mu_gvf: 0.2,
            gvf_iters: 200,
            w_line: 0.04,
            w_edge: 2.0,
            w_term: 0.01,
            sigma: 1.0,
            gamma: 1.0,
            max_iters: 400,
            resample_spacing: 1.0,
            convergence_tol: 0.05,
            external_force: ExternalForce::Gvf,
        }
    }
}

impl SnakeParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.alpha >= 0.0, "alpha >= 0"),
            (self.beta >= 0.0, "beta >= 0"),
            (self.kappa >= 0.0, "kappa >= 0"),
            (self.mu_gvf > 0.0, "mu_gvf > 0"),
            (self.sigma > 0.0, "sigma > 0"),
            (self.gamma > 0.0, "gamma > 0"),
            (self.max_iters >= 1, "max_iters >= 1"),
            (self.resample_spacing > 0.0, "resample_spacing > 0"),
            (self.convergence_tol > 0.0, "convergence_tol > 0"),
            (
                [self.w_line, self.w_edge, self.w_term].iter().all(|w| w.is_finite()),
                "finite energy weights",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(Error::InvalidParam(format!("snake parameters: need {what}"))),
            None => Ok(()),
        }
    }

    /// GVF time step at 90% of the explicit stability bound.
    pub fn gvf_dt(&self) -> f64 {
        0.9 / (4.0 * self.mu_gvf)
    }
}
