//! Tiled propagation for rasters too large to solve in one piece.
//!
//! Each tile is solved on its core plus a halo, and every pixel of the output
//! is the average of all padded tiles that cover it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::superres::{propagate_fista, SrParams, SrTrace};
use crate::types::{SparseZImage, ZImage};

pub const DEFAULT_HALO: usize = 16;

/// Padded window of one tile, in raster pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileLayout {
    pub index: usize,
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TileLayout {
    /// Padded windows for `tile_size` cores over a `rows x cols` raster, in row-major tile order.
    pub fn grid(rows: usize, cols: usize, tile_size: usize, halo: usize) -> Vec<TileLayout> {
        let mut out = Vec::new();
        for tr in (0..rows).step_by(tile_size) {
            for tc in (0..cols).step_by(tile_size) {
                let row0 = tr.saturating_sub(halo);
                let col0 = tc.saturating_sub(halo);
                let row1 = (tr + tile_size + halo).min(rows);
                let col1 = (tc + tile_size + halo).min(cols);
                out.push(TileLayout {
                    index: out.len(),
                    row0,
                    col0,
                    rows: row1 - row0,
                    cols: col1 - col0,
                });
            }
        }
        out
    }

    fn extract(&self, sparse: &SparseZImage) -> SparseZImage {
        let mut s = SparseZImage::new(self.rows, self.cols);
        for ((r, c), z) in sparse.iter() {
            if r >= self.row0 && r < self.row0 + self.rows && c >= self.col0 && c < self.col0 + self.cols {
                s.insert(r - self.row0, c - self.col0, z).expect("inside the window");
            }
        }
        s
    }
}

/// Propagates each padded tile independently (in parallel on the current
/// rayon pool) and averages overlapping results. The l1 weight is resolved
/// once from the whole raster so all tiles solve the same problem.
///
/// Returns the merged raster and the per-tile traces in tile order.
pub fn superres_tiled(
    sparse: &SparseZImage,
    params: &SrParams,
    tile_size: usize,
    halo: usize,
) -> Result<(ZImage, Vec<SrTrace>)> {
    if tile_size == 0 {
        return Err(Error::InvalidParam("tile size must be >= 1".into()));
    }
    if sparse.is_empty() {
        return Err(Error::EmptySparse);
    }
    let params = SrParams {
        lambda: Some(params.resolved_lambda(sparse)),
        ..*params
    };
    let (rows, cols) = (sparse.rows(), sparse.cols());
    let tiles = TileLayout::grid(rows, cols, tile_size, halo);

    let solved: Vec<(TileLayout, ZImage, SrTrace)> = tiles
        .par_iter()
        .map(|t| {
            let local = t.extract(sparse);
            let (img, trace) = propagate_fista(&local, &params)?;
            Ok((*t, img, trace))
        })
        .collect::<Result<_>>()?;

    let mut sum = ZImage::zeros(rows, cols);
    let mut count = vec![0u32; rows * cols];
    let mut traces = Vec::with_capacity(solved.len());
    for (t, img, trace) in solved {
        for r in 0..t.rows {
            for c in 0..t.cols {
                let (gr, gc) = (t.row0 + r, t.col0 + c);
                sum[(gr, gc)] += img[(r, c)];
                count[gr * cols + gc] += 1;
            }
        }
        traces.push(trace);
    }
    let mut merged = ZImage::from_fn(rows, cols, |r, c| {
        let n = count[r * cols + c];
        if n == 1 {
            sum[(r, c)]
        } else {
            sum[(r, c)] / n as f64
        }
    });
    // Summing three copies of a value can round; projected pixels stay exact.
    for ((r, c), z) in sparse.iter() {
        merged[(r, c)] = z;
    }
    Ok((merged, traces))
}
