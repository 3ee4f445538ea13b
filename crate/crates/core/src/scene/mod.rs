//! Everything upstream of the snake: terrain removal and candidate
//! extraction, boundary tracing and polygon fill, NDVI vegetation masks,
//! and synthetic scenes.

mod synth;

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Contour, GeoTransform, Grid, Point, ScalarField, ZImage};

pub use synth::{synth_scene, BoxSpec, SceneSpec, SyntheticScene, TreeSpec};

/// Block edge, in pixels, of the terrain percentile grid.
pub const TERRAIN_BLOCK: usize = 32;
/// Percentile of each block taken as its ground level.
pub const TERRAIN_PERCENTILE: f64 = 5.0;
pub const DEFAULT_NDVI_THRESHOLD: f64 = 0.3;

/// Named reflectance bands sharing one raster shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSpectralImage {
    rows: usize,
    cols: usize,
    bands: BTreeMap<String, ScalarField>,
}

impl MultiSpectralImage {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bands: BTreeMap::new(),
        }
    }

    /// Adds or replaces a band. Values must be finite and non-negative.
    pub fn insert_band(&mut self, name: impl Into<String>, band: ScalarField) -> Result<()> {
        if band.dims() != (self.rows, self.cols) {
            return Err(Error::DimMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: band.rows(),
                right_cols: band.cols(),
            });
        }
        if band.data().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParam("band values must be finite and >= 0".into()));
        }
        self.bands.insert(name.into(), band);
        Ok(())
    }

    pub fn band(&self, name: &str) -> Result<&ScalarField> {
        self.bands.get(name).ok_or_else(|| Error::MissingBand(name.to_string()))
    }

    pub fn bands(&self) -> impl Iterator<Item = (&str, &ScalarField)> {
        self.bands.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// `(NIR − R)/(NIR + R)`, zero where both bands are zero.
pub fn ndvi(ms: &MultiSpectralImage) -> Result<ScalarField> {
    let nir = ms.band("nir")?;
    let red = ms.band("red")?;
    Ok(ScalarField::from_fn(ms.rows(), ms.cols(), |r, c| {
        let (n, v) = (nir[(r, c)], red[(r, c)]);
        if n + v == 0.0 {
            0.0
        } else {
            (n - v) / (n + v)
        }
    }))
}

pub fn vegetation_mask(ndvi_field: &ScalarField, threshold: f64) -> BinaryMask {
    ndvi_field.map(|&v| v > threshold)
}

fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((pct / 100.0) * (values.len() - 1) as f64).round() as usize;
    values[idx]
}

/// Terrain surface: the 5th percentile of each 32×32 block, placed at the
/// block center and blended bilinearly (clamped at the outer block centers).
pub fn estimate_terrain(z: &ZImage) -> ScalarField {
    let (rows, cols) = z.dims();
    let (br, bc) = (rows.div_ceil(TERRAIN_BLOCK), cols.div_ceil(TERRAIN_BLOCK));
    let mut level = Grid::filled(br, bc, 0.0);
    let mut center_r = vec![0.0; br];
    let mut center_c = vec![0.0; bc];
    for i in 0..br {
        let (r0, r1) = (i * TERRAIN_BLOCK, ((i + 1) * TERRAIN_BLOCK).min(rows));
        center_r[i] = 0.5 * (r0 + r1) as f64;
        for j in 0..bc {
            let (c0, c1) = (j * TERRAIN_BLOCK, ((j + 1) * TERRAIN_BLOCK).min(cols));
            center_c[j] = 0.5 * (c0 + c1) as f64;
            let mut v: Vec<f64> = (r0..r1).flat_map(|r| (c0..c1).map(move |c| (r, c))).map(|p| z[p]).collect();
            level[(i, j)] = percentile(&mut v, TERRAIN_PERCENTILE);
        }
    }
    // Fractional position of a pixel center between block centers.
    let locate = |x: f64, centers: &[f64]| -> (usize, usize, f64) {
        if x <= centers[0] {
            return (0, 0, 0.0);
        }
        let last = centers.len() - 1;
        if x >= centers[last] {
            return (last, last, 0.0);
        }
        let k = centers.iter().rposition(|&c| c <= x).unwrap();
        (k, k + 1, (x - centers[k]) / (centers[k + 1] - centers[k]))
    };
    ScalarField::from_fn(rows, cols, |r, c| {
        let (i0, i1, ty) = locate(r as f64 + 0.5, &center_r);
        let (j0, j1, tx) = locate(c as f64 + 0.5, &center_c);
        let top = level[(i0, j0)] * (1.0 - tx) + level[(i0, j1)] * tx;
        let bottom = level[(i1, j0)] * (1.0 - tx) + level[(i1, j1)] * tx;
        top * (1.0 - ty) + bottom * ty
    })
}

/// 4-connected components in raster order. Returns per-pixel labels
/// (0 = background, components numbered from 1) and the component count.
pub fn label_components(mask: &BinaryMask) -> (Grid<u32>, usize) {
    let (rows, cols) = mask.dims();
    let mut labels = Grid::filled(rows, cols, 0u32);
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for r in 0..rows {
        for c in 0..cols {
            if !mask[(r, c)] || labels[(r, c)] != 0 {
                continue;
            }
            count += 1;
            labels[(r, c)] = count;
            queue.push_back((r, c));
            while let Some((pr, pc)) = queue.pop_front() {
                let nbrs = [
                    (pr.wrapping_sub(1), pc),
                    (pr + 1, pc),
                    (pr, pc.wrapping_sub(1)),
                    (pr, pc + 1),
                ];
                for (nr, nc) in nbrs {
                    if nr < rows && nc < cols && mask[(nr, nc)] && labels[(nr, nc)] == 0 {
                        labels[(nr, nc)] = count;
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

const EAST: (isize, isize) = (0, 1);

fn turn_left((dr, dc): (isize, isize)) -> (isize, isize) {
    (-dc, dr)
}

fn turn_right((dr, dc): (isize, isize)) -> (isize, isize) {
    (dc, -dr)
}

/// Offsets from a lattice vertex to the pixels on the right and on the left
/// of the unit edge leaving it in direction `d`.
fn side_pixels(d: (isize, isize)) -> ((isize, isize), (isize, isize)) {
    match d {
        (0, 1) => ((0, 0), (-1, 0)),
        (1, 0) => ((0, -1), (0, 0)),
        (0, -1) => ((-1, -1), (0, -1)),
        _ => ((-1, 0), (-1, -1)),
    }
}

/// Outer boundary of the 4-connected component containing the first
/// foreground pixel in raster order, traced along pixel edges.
///
/// Vertices lie on pixel corners (integer `[row, col]`), so filling the
/// result by pixel centers gives back the component with its holes filled.
/// Returns `None` for an empty mask.
pub fn trace_boundary(mask: &BinaryMask) -> Option<Contour> {
    let start_idx = mask.data().iter().position(|&b| b)?;
    let (rows, cols) = mask.dims();
    let fg = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols && mask[(r as usize, c as usize)];
    let start = ((start_idx / cols) as isize, (start_idx % cols) as isize);
    let mut ring: Vec<Point> = vec![[start.0 as f64, start.1 as f64]];
    let mut v = (start.0 + EAST.0, start.1 + EAST.1);
    let mut d = EAST;
    loop {
        let (right, left) = side_pixels(d);
        let ahead_right = fg(v.0 + right.0, v.1 + right.1);
        let ahead_left = fg(v.0 + left.0, v.1 + left.1);
        let next = match (ahead_right, ahead_left) {
            (true, false) => d,
            (true, true) => turn_left(d),
            // 4-connectivity: never cross a diagonal-only contact.
            (false, _) => turn_right(d),
        };
        if v == start && next == EAST {
            break;
        }
        if next != d {
            ring.push([v.0 as f64, v.1 as f64]);
        }
        v = (v.0 + next.0, v.1 + next.1);
        d = next;
    }
    Some(Contour::new(ring).expect("a traced ring has at least four distinct corners").to_ccw())
}

/// Even-odd scanline fill: a pixel is set when its center lies inside the polygon.
pub fn mask_from_contour(c: &Contour, rows: usize, cols: usize) -> BinaryMask {
    let mut mask = BinaryMask::filled(rows, cols, false);
    let p = c.points();
    let n = p.len();
    let mut xs = Vec::new();
    for r in 0..rows {
        let y = r as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (p[i], p[(i + 1) % n]);
            if (a[0] > y) != (b[0] > y) {
                xs.push(a[1] + (y - a[0]) / (b[0] - a[0]) * (b[1] - a[1]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // Pixel centers c + 0.5 in [x0, x1).
            let lo = (span[0] - 0.5).ceil().max(0.0);
            let hi = (span[1] - 0.5).ceil().min(cols as f64);
            let mut col = lo;
            while col < hi {
                mask[(r, col as usize)] = true;
                col += 1.0;
            }
        }
    }
    mask
}

/// One building candidate: its traced outline in raster pixel coordinates
/// and its pixel mask, stored cropped to the bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub contour: Contour,
    pub row0: usize,
    pub col0: usize,
    pub mask: BinaryMask,
}

impl Candidate {
    pub fn pixel_count(&self) -> usize {
        self.mask.count()
    }

    /// The mask placed in a `rows x cols` raster.
    pub fn full_mask(&self, rows: usize, cols: usize) -> BinaryMask {
        BinaryMask::from_fn(rows, cols, |r, c| {
            r >= self.row0
                && c >= self.col0
                && self.mask.get(r - self.row0, c - self.col0).copied().unwrap_or(false)
        })
    }
}

/// Simplified building candidate extraction: nDSM threshold against an
/// estimated terrain, optional vegetation removal, 4-connected components of
/// at least `min_area` m², each traced into a closed outline.
pub fn preliminary_extract(
    z: &ZImage,
    gt: &GeoTransform,
    min_height: f64,
    min_area: f64,
    veg_mask: Option<&BinaryMask>,
) -> Result<Vec<Candidate>> {
    if (gt.rows, gt.cols) != z.dims() {
        return Err(Error::DimMismatch {
            left_rows: z.rows(),
            left_cols: z.cols(),
            right_rows: gt.rows,
            right_cols: gt.cols,
        });
    }
    if let Some(v) = veg_mask {
        z.same_dims(v)?;
    }
    if !z.all_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let terrain = estimate_terrain(z);
    let (rows, cols) = z.dims();
    let elevated = BinaryMask::from_fn(rows, cols, |r, c| {
        z[(r, c)] - terrain[(r, c)] >= min_height && !veg_mask.is_some_and(|v| v[(r, c)])
    });
    let (labels, count) = label_components(&elevated);

    // Bounding boxes and sizes in one pass.
    let mut boxes = vec![(usize::MAX, usize::MAX, 0usize, 0usize, 0usize); count + 1];
    for r in 0..rows {
        for c in 0..cols {
            let l = labels[(r, c)] as usize;
            if l > 0 {
                let b = &mut boxes[l];
                *b = (b.0.min(r), b.1.min(c), b.2.max(r), b.3.max(c), b.4 + 1);
            }
        }
    }
    let min_pixels = min_area / gt.pixel_area();
    let mut out = Vec::new();
    for (label, &(r0, c0, r1, c1, n)) in boxes.iter().enumerate().skip(1) {
        if (n as f64) < min_pixels {
            continue;
        }
        let mask = BinaryMask::from_fn(r1 - r0 + 1, c1 - c0 + 1, |r, c| labels[(r0 + r, c0 + c)] as usize == label);
        let local = trace_boundary(&mask).expect("component is nonempty");
        out.push(Candidate {
            contour: local.translated(r0 as f64, c0 as f64),
            row0: r0,
            col0: c0,
            mask,
        });
    }
    Ok(out)
}
