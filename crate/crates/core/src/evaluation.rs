//! Thematic (per-area, per-object) and geometric (boundary RMSE) accuracy.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::mask_from_contour;
use crate::types::{dist, BinaryMask, Contour, GeoTransform, Point};

/// Boundary samples farther than this from the reference are ignored.
pub const DEFAULT_RMSE_CUTOFF: f64 = 3.0;
/// Object size threshold of the large-building variant, in m².
pub const LARGE_OBJECT_AREA: f64 = 50.0;
/// Spacing, in pixels, of boundary samples.
pub const BOUNDARY_SAMPLE_SPACING: f64 = 0.5;

/// True-positive, false-positive and false-negative counts (pixels or objects).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

impl Counts {
    /// `Cp = TP/(TP+FN)`; `None` without any reference.
    pub fn completeness(&self) -> Option<f64> {
        percent(self.tp, self.tp + self.fn_)
    }

    /// `Cr = TP/(TP+FP)`; `None` without any extraction.
    pub fn correctness(&self) -> Option<f64> {
        percent(self.tp, self.tp + self.fp)
    }

    /// `Q = TP/(TP+FP+FN)`.
    pub fn quality(&self) -> Option<f64> {
        percent(self.tp, self.tp + self.fp + self.fn_)
    }

    /// Sum of raw counts, e.g. when merging tiles.
    pub fn merge(self, other: Counts) -> Counts {
        Counts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

/// Pixel-center rasterization of each contour.
pub fn rasterize(contours: &[Contour], rows: usize, cols: usize) -> Vec<BinaryMask> {
    contours.iter().map(|c| mask_from_contour(c, rows, cols)).collect()
}

fn union(masks: &[&BinaryMask], rows: usize, cols: usize) -> Result<BinaryMask> {
    let mut u = BinaryMask::filled(rows, cols, false);
    for m in masks {
        if m.dims() != (rows, cols) {
            return Err(Error::DimMismatch {
                left_rows: rows,
                left_cols: cols,
                right_rows: m.rows(),
                right_cols: m.cols(),
            });
        }
        u.data_mut().iter_mut().zip(m.data()).for_each(|(a, b)| *a |= b);
    }
    Ok(u)
}

fn overlap(a: &BinaryMask, b: &BinaryMask) -> usize {
    a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count()
}

/// Per-area counts between the union of extracted and the union of reference masks.
pub fn area_metrics(extracted: &[BinaryMask], truth: &[BinaryMask], rows: usize, cols: usize) -> Result<Counts> {
    let e = union(&extracted.iter().collect::<Vec<_>>(), rows, cols)?;
    let r = union(&truth.iter().collect::<Vec<_>>(), rows, cols)?;
    let mut c = Counts::default();
    for (&a, &b) in e.data().iter().zip(r.data()) {
        match (a, b) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(c)
}

/// Best-overlapping reference object of an extracted object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub extracted: usize,
    pub truth: usize,
    /// Share of the extracted object's pixels inside that reference object.
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectMetrics {
    pub min_area: f64,
    pub counts: Counts,
    pub matched: Vec<MatchedPair>,
}

/// Per-object counts. An extracted object is a TP when at least half of its
/// pixels fall inside the union of reference objects, otherwise a FP. A
/// reference object is a FN when less than half of it is covered by the
/// union of extracted objects. Objects smaller than `min_area` m² (and empty
/// ones) are dropped from both sides first.
pub fn object_metrics(
    extracted: &[BinaryMask],
    truth: &[BinaryMask],
    rows: usize,
    cols: usize,
    pixel_area: f64,
    min_area: f64,
) -> Result<ObjectMetrics> {
    let keep = |m: &BinaryMask| {
        let n = m.count();
        n > 0 && n as f64 * pixel_area >= min_area
    };
    let kept_e: Vec<(usize, &BinaryMask)> = extracted.iter().enumerate().filter(|(_, m)| keep(m)).collect();
    let kept_t: Vec<(usize, &BinaryMask)> = truth.iter().enumerate().filter(|(_, m)| keep(m)).collect();
    let union_e = union(&kept_e.iter().map(|(_, m)| *m).collect::<Vec<_>>(), rows, cols)?;
    let union_t = union(&kept_t.iter().map(|(_, m)| *m).collect::<Vec<_>>(), rows, cols)?;

    let mut counts = Counts::default();
    let mut matched = Vec::new();
    for &(i, m) in &kept_e {
        let area = m.count();
        if 2 * overlap(m, &union_t) >= area {
            counts.tp += 1;
        } else {
            counts.fp += 1;
        }
        let best = kept_t.iter().map(|&(j, t)| (overlap(m, t), j)).filter(|&(o, _)| o > 0).max_by_key(|&(o, j)| (o, std::cmp::Reverse(j)));
        if let Some((o, j)) = best {
            matched.push(MatchedPair {
                extracted: i,
                truth: j,
                overlap: o as f64 / area as f64,
            });
        }
    }
    for &(_, t) in &kept_t {
        if 2 * overlap(t, &union_e) < t.count() {
            counts.fn_ += 1;
        }
    }
    Ok(ObjectMetrics { min_area, counts, matched })
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dr, dc) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dr * dr + dc * dc;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dr + (p[1] - a[1]) * dc) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * dr, a[1] + t * dc])
}

/// Points along the closed outline, at most `spacing` apart, vertices included.
pub fn densify(c: &Contour, spacing: f64) -> Vec<Point> {
    let p = c.points();
    let n = p.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (p[i], p[(i + 1) % n]);
        let k = (dist(a, b) / spacing).ceil().max(1.0) as usize;
        for s in 0..k {
            let t = s as f64 / k as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Distances in meters from samples on `extracted` to the `truth` outline,
/// keeping those within `cutoff` meters.
pub fn boundary_distances(extracted: &Contour, truth: &Contour, pixel_size: f64, cutoff: f64) -> Vec<f64> {
    let t = truth.points();
    let n = t.len();
    densify(extracted, BOUNDARY_SAMPLE_SPACING)
        .into_iter()
        .map(|p| {
            let d = (0..n).map(|i| point_segment_distance(p, t[i], t[(i + 1) % n])).fold(f64::INFINITY, f64::min);
            d * pixel_size
        })
        .filter(|&d| d <= cutoff)
        .collect()
}

fn rms(d: &[f64]) -> Option<f64> {
    (!d.is_empty()).then(|| (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt())
}

/// Boundary RMSE in meters; `None` when every sample lies beyond the cutoff.
pub fn boundary_rmse(extracted: &Contour, truth: &Contour, gt: &GeoTransform, cutoff: f64) -> Option<f64> {
    rms(&boundary_distances(extracted, truth, gt.pixel_size, cutoff))
}

/// Full accuracy report for one scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_area: Counts,
    pub per_object: ObjectMetrics,
    pub per_object_large: ObjectMetrics,
    /// Pooled over all matched pairs, in meters.
    pub boundary_rmse: Option<f64>,
    pub boundary_samples: usize,
    pub cutoff: f64,
}

/// Scores extracted outlines against reference outlines, both in the raster
/// pixel coordinates of `gt`.
pub fn evaluate(extracted: &[Contour], truth: &[Contour], gt: &GeoTransform) -> Result<EvalReport> {
    let (rows, cols) = (gt.rows, gt.cols);
    let e = rasterize(extracted, rows, cols);
    let t = rasterize(truth, rows, cols);
    let per_area = area_metrics(&e, &t, rows, cols)?;
    let per_object = object_metrics(&e, &t, rows, cols, gt.pixel_area(), 0.0)?;
    let per_object_large = object_metrics(&e, &t, rows, cols, gt.pixel_area(), LARGE_OBJECT_AREA)?;
    let mut samples = Vec::new();
    for m in &per_object.matched {
        samples.extend(boundary_distances(&extracted[m.extracted], &truth[m.truth], gt.pixel_size, DEFAULT_RMSE_CUTOFF));
    }
    Ok(EvalReport {
        per_area,
        per_object,
        per_object_large,
        boundary_rmse: rms(&samples),
        boundary_samples: samples.len(),
        cutoff: DEFAULT_RMSE_CUTOFF,
    })
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"))
}

impl EvalReport {
    fn rows(&self) -> [(&'static str, &Counts); 3] {
        [
            ("per_area", &self.per_area),
            ("per_object", &self.per_object.counts),
            ("per_object_min50m2", &self.per_object_large.counts),
        ]
    }

    /// Long-format CSV: `section,metric,value`. Undefined values are `NA`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,metric,value\n");
        for (name, c) in self.rows() {
            let _ = writeln!(s, "{name},tp,{}", c.tp);
            let _ = writeln!(s, "{name},fp,{}", c.fp);
            let _ = writeln!(s, "{name},fn,{}", c.fn_);
            let _ = writeln!(s, "{name},completeness,{}", fmt_pct(c.completeness()));
            let _ = writeln!(s, "{name},correctness,{}", fmt_pct(c.correctness()));
            let _ = writeln!(s, "{name},quality,{}", fmt_pct(c.quality()));
        }
        let rmse = self.boundary_rmse.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "boundary,rmse_m,{rmse}");
        let _ = writeln!(s, "boundary,samples,{}", self.boundary_samples);
        let _ = writeln!(s, "boundary,cutoff_m,{}", self.cutoff);
        s
    }

    /// Human-readable table, one line per accuracy level.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<22}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}\n",
            "", "Cp (%)", "Cr (%)", "Q (%)", "TP", "FP", "FN"
        );
        let labels = ["Per-area (pixels)", "Per-object", "Per-object >= 50 m2"];
        for (label, (_, c)) in labels.iter().zip(self.rows()) {
            let _ = writeln!(
                s,
                "{label:<22}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}",
                fmt_pct(c.completeness()),
                fmt_pct(c.correctness()),
                fmt_pct(c.quality()),
                c.tp,
                c.fp,
                c.fn_
            );
        }
        let rmse = self.boundary_rmse.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            s,
            "Boundary RMSE: {rmse} m ({} samples, cutoff {} m)",
            self.boundary_samples, self.cutoff
        );
        s
    }
}
