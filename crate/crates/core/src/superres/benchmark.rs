use std::fmt;

use crate::error::{Error, Result};
use crate::superres::{interp_bilinear, interp_nearest, project_points, propagate_fista, psnr, rmse_image, ssim, SrParams};
use crate::types::{GeoTransform, PointCloud3D, ZImage};

/// Minimum fraction of pixels the full-resolution cloud must hit for its DSM to serve as reference.
pub const MIN_REFERENCE_FILL: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sr,
    Nearest,
    Bilinear,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sr, Method::Nearest, Method::Bilinear];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sr => "SR",
            Method::Nearest => "NN",
            Method::Bilinear => "bilinear",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub factor: usize,
    pub rmse: f64,
    pub ssim: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrBenchReport {
    pub factor: usize,
    pub rows: Vec<BenchRow>,
    /// Fill fraction of the full-resolution projection.
    pub reference_fill: f64,
}

impl SrBenchReport {
    pub fn get(&self, method: Method) -> &BenchRow {
        self.rows.iter().find(|r| r.method == method).expect("every method is scored")
    }
}

/// Reference DSM from the full cloud (projection + propagation).
pub fn reference_dsm(cloud: &PointCloud3D, gt: &GeoTransform, params: &SrParams) -> Result<(ZImage, f64)> {
    let sparse = project_points(cloud, gt)?;
    let fill = sparse.fill_fraction();
    if fill < MIN_REFERENCE_FILL {
        return Err(Error::InvalidParam(format!(
            "cloud fills {:.1}% of the raster, need {:.0}% for a reference DSM",
            100.0 * fill,
            100.0 * MIN_REFERENCE_FILL
        )));
    }
    Ok((propagate_fista(&sparse, params)?.0, fill))
}

/// Subsamples the cloud by a deterministic point stride, reconstructs with
/// each method and scores against the full-resolution reference DSM.
pub fn sr_benchmark(cloud: &PointCloud3D, gt: &GeoTransform, factor: usize, params: &SrParams) -> Result<SrBenchReport> {
    let (reference, fill) = reference_dsm(cloud, gt, params)?;
    score_factor(cloud, gt, factor, params, &reference, fill)
}

/// [`sr_benchmark`] for several factors sharing one reference DSM.
pub fn sr_benchmark_factors(
    cloud: &PointCloud3D,
    gt: &GeoTransform,
    factors: &[usize],
    params: &SrParams,
) -> Result<Vec<SrBenchReport>> {
    let (reference, fill) = reference_dsm(cloud, gt, params)?;
    factors
        .iter()
        .map(|&f| score_factor(cloud, gt, f, params, &reference, fill))
        .collect()
}

fn score_factor(
    cloud: &PointCloud3D,
    gt: &GeoTransform,
    factor: usize,
    params: &SrParams,
    reference: &ZImage,
    reference_fill: f64,
) -> Result<SrBenchReport> {
    if factor == 0 {
        return Err(Error::InvalidParam("subsampling factor must be >= 1".into()));
    }
    let sparse = project_points(&cloud.subsample(factor), gt)?;
    let (lo, hi) = reference.min_max();
    let peak = if hi > lo { hi - lo } else { 1.0 };

    let mut rows = Vec::with_capacity(3);
    for method in Method::ALL {
        let recon = match method {
            Method::Sr => propagate_fista(&sparse, params)?.0,
            Method::Nearest => interp_nearest(&sparse)?,
            Method::Bilinear => interp_bilinear(&sparse)?,
        };
        rows.push(BenchRow {
            method,
            factor,
            rmse: rmse_image(&recon, reference)?,
            ssim: ssim(&recon, reference)?,
            psnr: psnr(&recon, reference, peak)?,
        });
    }
    Ok(SrBenchReport {
        factor,
        rows,
        reference_fill,
    })
}
