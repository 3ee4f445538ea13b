//! Baseline scattered-data interpolators used to judge the propagation.

use crate::error::{Error, Result};
use crate::types::{SparseZImage, ZImage};

fn dense_constraints(sparse: &SparseZImage) -> Result<Vec<Option<f64>>> {
    if sparse.is_empty() {
        return Err(Error::EmptySparse);
    }
    let cols = sparse.cols();
    let mut v = vec![None; sparse.rows() * cols];
    for ((r, c), z) in sparse.iter() {
        v[r * cols + c] = Some(z);
    }
    Ok(v)
}

/// Visits pixels on the square ring at Chebyshev radius `radius` around `(r, c)`,
/// passing the offset and value of every filled one.
fn scan_ring(
    known: &[Option<f64>],
    rows: usize,
    cols: usize,
    (r, c): (usize, usize),
    radius: i64,
    mut visit: impl FnMut(i64, i64, f64),
) {
    let (r, c) = (r as i64, c as i64);
    for dr in -radius..=radius {
        let rr = r + dr;
        if rr < 0 || rr >= rows as i64 {
            continue;
        }
        let full_row = dr.abs() == radius;
        let mut dc = -radius;
        while dc <= radius {
            let cc = c + dc;
            if cc >= 0 && cc < cols as i64 {
                if let Some(z) = known[(rr * cols as i64 + cc) as usize] {
                    visit(dr, dc, z);
                }
            }
            dc += if full_row || radius == 0 { 1 } else { 2 * radius };
        }
    }
}

/// Each empty pixel copies its Euclidean-nearest filled pixel; ties go to the
/// smaller row, then the smaller column.
pub fn interp_nearest(sparse: &SparseZImage) -> Result<ZImage> {
    let known = dense_constraints(sparse)?;
    let (rows, cols) = (sparse.rows(), sparse.cols());
    let max_radius = rows.max(cols) as i64;
    Ok(ZImage::from_fn(rows, cols, |r, c| {
        if let Some(z) = known[r * cols + c] {
            return z;
        }
        // (squared distance, row offset, col offset, value)
        let mut best: Option<(i64, i64, i64, f64)> = None;
        for radius in 1..=max_radius {
            if let Some((d2, ..)) = best {
                if radius * radius > d2 {
                    break;
                }
            }
            scan_ring(&known, rows, cols, (r, c), radius, |dr, dc, z| {
                let cand = (dr * dr + dc * dc, dr, dc, z);
                let better = match best {
                    None => true,
                    Some(b) => (cand.0, cand.1, cand.2) < (b.0, b.1, b.2),
                };
                if better {
                    best = Some(cand);
                }
            });
        }
        best.map(|b| b.3).expect("at least one filled pixel")
    }))
}

/// Half-open quadrant of a nonzero offset; the four quadrants tile the plane.
fn quadrant(dr: i64, dc: i64) -> usize {
    if dc > 0 && dr >= 0 {
        0
    } else if dr > 0 && dc <= 0 {
        1
    } else if dc < 0 && dr <= 0 {
        2
    } else {
        3
    }
}

/// Scattered-data "bilinear" baseline: each empty pixel takes the
/// inverse-distance-weighted mean of the nearest filled pixel in each of the
/// four quadrants around it. With a single neighbor this reduces to copying it.
pub fn interp_bilinear(sparse: &SparseZImage) -> Result<ZImage> {
    let known = dense_constraints(sparse)?;
    let (rows, cols) = (sparse.rows(), sparse.cols());
    let max_radius = rows.max(cols) as i64;
    Ok(ZImage::from_fn(rows, cols, |r, c| {
        if let Some(z) = known[r * cols + c] {
            return z;
        }
        let mut best: [Option<(i64, i64, i64, f64)>; 4] = [None; 4];
        for radius in 1..=max_radius {
            if best.iter().all(|b| b.is_some_and(|(d2, ..)| radius * radius > d2)) {
                break;
            }
            scan_ring(&known, rows, cols, (r, c), radius, |dr, dc, z| {
                let slot = &mut best[quadrant(dr, dc)];
                let cand = (dr * dr + dc * dc, dr, dc, z);
                let better = match *slot {
                    None => true,
                    Some(b) => (cand.0, cand.1, cand.2) < (b.0, b.1, b.2),
                };
                if better {
                    *slot = Some(cand);
                }
            });
        }
        let found: Vec<_> = best.iter().flatten().collect();
        if let [only] = found.as_slice() {
            return only.3;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (d2, _, _, z) in found {
            let w = 1.0 / (*d2 as f64).sqrt();
            num += w * z;
            den += w;
        }
        num / den
    }))
}
