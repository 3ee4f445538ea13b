//! The five subcommands. Each `cmd_*` checks its inputs before writing
//! anything, then writes its files under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use srsm::energy::external_field;
use srsm::evaluation::{evaluate, EvalReport};
use srsm::io::{
    footprints_to_geojson, history_csv, read_footprints, read_geotransform, read_pgm_band, read_xyz, read_zimg,
    sidecar_path, trace_csv, write_pgm_band, write_pgm_preview, write_xyz, write_zimg, CoordSpace,
};
use srsm::scene::{ndvi, preliminary_extract, synth_scene, vegetation_mask, Candidate, MultiSpectralImage, SceneSpec, SyntheticScene};
use srsm::snake::{evolve, SnakeState};
use srsm::superres::{project_points, sr_benchmark_factors, superres_tiled, SrBenchReport, SrTrace, DEFAULT_HALO};
use srsm::{BinaryMask, Contour, GeoTransform, SnakeParams, ZImage};

use crate::config::{PipelineConfig, Paths};
use crate::error::{CliError, CliResult};

pub const ZIMAGE_FILE: &str = "zimage.zimg";
pub const ZIMAGE_PREVIEW: &str = "zimage.pgm";
pub const TRACE_DIR: &str = "superres_trace";
pub const FOOTPRINTS_FILE: &str = "footprints.geojson";
pub const HISTORY_DIR: &str = "history";
pub const EVAL_CSV: &str = "evaluation.csv";
pub const EVAL_TABLE: &str = "evaluation.txt";
pub const BENCH_CSV: &str = "bench_sr.csv";
pub const PIPELINE_FILE: &str = "pipeline.toml";
/// Margin around each candidate's bounding box for its energy crop, in pixels.
pub const EXTRACT_PAD: usize = 16;
const BAND_MAXVAL: u16 = 65535;

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path))
    }
}

fn required_path<'a>(p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    let p = p.as_deref().ok_or_else(|| CliError::config(format!("paths.{key} is not set")))?;
    require(p)?;
    Ok(p)
}

fn required_gt(cfg: &PipelineConfig) -> CliResult<GeoTransform> {
    cfg.geotransform.ok_or_else(|| CliError::config("a [geotransform] section is required"))
}

// ---------------------------------------------------------------- superres

pub struct SuperresOutput {
    pub zimage: ZImage,
    pub gt: GeoTransform,
    /// One trace per tile, in tile order.
    pub traces: Vec<SrTrace>,
}

/// Projection and tiled propagation, in memory.
pub fn run_superres(cfg: &PipelineConfig) -> CliResult<SuperresOutput> {
    let cloud_path = required_path(&cfg.paths.cloud, "cloud")?;
    let gt = required_gt(cfg)?;
    let cloud = read_xyz(cloud_path)?;
    let sparse = project_points(&cloud, &gt)?;
    info!("projected {} points, fill {:.1}%", cloud.len(), 100.0 * sparse.fill_fraction());
    let (zimage, traces) = with_pool(cfg.jobs, || superres_tiled(&sparse, &cfg.superres, cfg.tile_size, DEFAULT_HALO))??;
    Ok(SuperresOutput { zimage, gt, traces })
}

pub fn cmd_superres(cfg: &PipelineConfig) -> CliResult<SuperresOutput> {
    let out = run_superres(cfg)?;
    fs::create_dir_all(&cfg.paths.out_dir)?;
    write_zimg(&cfg.out_path(ZIMAGE_FILE), &out.zimage, &out.gt)?;
    write_pgm_preview(&cfg.out_path(ZIMAGE_PREVIEW), &out.zimage)?;
    let trace_dir = cfg.out_path(TRACE_DIR);
    if trace_dir.exists() {
        fs::remove_dir_all(&trace_dir)?;
    }
    fs::create_dir_all(&trace_dir)?;
    for (k, t) in out.traces.iter().enumerate() {
        fs::write(trace_dir.join(format!("tile_{k:03}.csv")), trace_csv(t))?;
    }
    info!("wrote {} ({} tiles)", cfg.out_path(ZIMAGE_FILE).display(), out.traces.len());
    Ok(out)
}

// ---------------------------------------------------------------- extract

/// Evolves the snake for one candidate on a padded crop of `z`.
/// Returns the refined outline in raster pixel coordinates and its history.
pub fn refine_candidate(z: &ZImage, cand: &Candidate, params: &SnakeParams) -> srsm::Result<(Contour, Vec<SnakeState>)> {
    let pad = EXTRACT_PAD as isize;
    let (r0, c0) = (cand.row0 as isize - pad, cand.col0 as isize - pad);
    let (h, w) = (cand.mask.rows() + 2 * EXTRACT_PAD, cand.mask.cols() + 2 * EXTRACT_PAD);
    let crop = z.crop_clamped(r0, c0, h, w);
    let mask = BinaryMask::from_fn(h, w, |r, c| {
        let (mr, mc) = (r as isize - pad, c as isize - pad);
        mr >= 0 && mc >= 0 && cand.mask.get(mr as usize, mc as usize).copied().unwrap_or(false)
    });
    let field = external_field(&crop, params)?;
    let init = cand.contour.translated(-r0 as f64, -c0 as f64);
    let (out, history) = evolve(&init, &field, Some(&mask), params)?;
    Ok((out.translated(r0 as f64, c0 as f64), history))
}

fn vegetation(paths: &Paths, rows: usize, cols: usize, threshold: f64) -> CliResult<Option<BinaryMask>> {
    let (Some(red), Some(nir)) = (paths.bands.get("red"), paths.bands.get("nir")) else {
        info!("no red/nir bands configured, skipping vegetation removal");
        return Ok(None);
    };
    let mut ms = MultiSpectralImage::new(rows, cols);
    ms.insert_band("red", read_pgm_band(red)?)?;
    ms.insert_band("nir", read_pgm_band(nir)?)?;
    Ok(Some(vegetation_mask(&ndvi(&ms)?, threshold)))
}

pub struct ExtractOutput {
    pub gt: GeoTransform,
    pub candidates: usize,
    /// Candidate index, refined outline (raster pixels) and history, for every success.
    pub buildings: Vec<(usize, Contour, Vec<SnakeState>)>,
    pub failures: Vec<(usize, srsm::Error)>,
}

fn load_zimage(cfg: &PipelineConfig) -> CliResult<(ZImage, GeoTransform)> {
    let zpath = cfg.zimage_path();
    if zpath.exists() {
        return Ok(read_zimg(&zpath)?);
    }
    if cfg.paths.cloud.is_some() {
        info!("{} not found, running superres first", zpath.display());
        let out = run_superres(cfg)?;
        return Ok((out.zimage, out.gt));
    }
    Err(CliError::missing(zpath))
}

/// Candidate extraction and snake refinement, in memory.
pub fn run_extract(cfg: &PipelineConfig, z: &ZImage, gt: &GeoTransform) -> CliResult<ExtractOutput> {
    for p in cfg.paths.bands.values() {
        require(p)?;
    }
    let veg = vegetation(&cfg.paths, z.rows(), z.cols(), cfg.scene.ndvi_threshold)?;
    let cands = preliminary_extract(z, gt, cfg.scene.min_height, cfg.scene.min_area, veg.as_ref())?;
    info!("{} building candidates", cands.len());
    let results: Vec<_> = with_pool(cfg.jobs, || {
        cands.par_iter().map(|c| refine_candidate(z, c, &cfg.snake)).collect()
    })?;
    let mut out = ExtractOutput {
        gt: *gt,
        candidates: cands.len(),
        buildings: Vec::new(),
        failures: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((c, h)) => out.buildings.push((i, c, h)),
            Err(e) => {
                warn!("building {i}: {e}, skipped");
                out.failures.push((i, e));
            }
        }
    }
    Ok(out)
}

pub fn cmd_extract(cfg: &PipelineConfig) -> CliResult<ExtractOutput> {
    let (z, gt) = load_zimage(cfg)?;
    let mut out = run_extract(cfg, &z, &gt)?;
    if out.buildings.is_empty() && !out.failures.is_empty() {
        return Err(out.failures.swap_remove(0).1.into());
    }
    fs::create_dir_all(&cfg.paths.out_dir)?;
    let contours: Vec<Contour> = out.buildings.iter().map(|(_, c, _)| c.clone()).collect();
    fs::write(cfg.out_path(FOOTPRINTS_FILE), footprints_to_geojson(&contours, &gt, CoordSpace::World))?;
    let hist_dir = cfg.out_path(HISTORY_DIR);
    if hist_dir.exists() {
        fs::remove_dir_all(&hist_dir)?;
    }
    fs::create_dir_all(&hist_dir)?;
    for (i, _, h) in &out.buildings {
        fs::write(hist_dir.join(format!("building_{i:03}.csv")), history_csv(h))?;
    }
    info!("wrote {} footprints", contours.len());
    Ok(out)
}

// ---------------------------------------------------------------- evaluate

pub fn cmd_evaluate(cfg: &PipelineConfig) -> CliResult<EvalReport> {
    let fp = cfg.footprints_path();
    require(&fp)?;
    let truth_path = required_path(&cfg.paths.truth, "truth")?;
    let gt = match cfg.geotransform {
        Some(gt) => gt,
        None => {
            let side = sidecar_path(&cfg.zimage_path());
            if !side.exists() {
                return Err(CliError::config("a [geotransform] section (or a z-image sidecar) is required"));
            }
            read_geotransform(&side)?
        }
    };
    let extracted = read_footprints(&fp, &gt)?;
    let truth = read_footprints(truth_path, &gt)?;
    let report = evaluate(&extracted, &truth, &gt)?;
    fs::create_dir_all(&cfg.paths.out_dir)?;
    fs::write(cfg.out_path(EVAL_CSV), report.to_csv())?;
    fs::write(cfg.out_path(EVAL_TABLE), report.to_table())?;
    Ok(report)
}

// ---------------------------------------------------------------- synth

/// Writes a self-contained fixture: cloud, reference footprints and
/// z-image, multispectral bands, the scene spec and a ready pipeline config.
pub fn cmd_synth(spec: &SceneSpec, seed: u64, dir: &Path) -> CliResult<SyntheticScene> {
    let scene = synth_scene(spec, seed)?;
    fs::create_dir_all(dir)?;
    write_xyz(&dir.join("cloud.xyz"), &scene.cloud)?;
    fs::write(dir.join("truth.geojson"), footprints_to_geojson(&scene.footprints, &scene.gt, CoordSpace::World))?;
    write_zimg(&dir.join("truth_z.zimg"), &scene.truth_z, &scene.gt)?;
    let mut bands = std::collections::BTreeMap::new();
    for (name, band) in scene.image.bands() {
        let file = format!("{name}.pgm");
        write_pgm_band(&dir.join(&file), band, BAND_MAXVAL)?;
        bands.insert(name.to_string(), PathBuf::from(file));
    }
    fs::write(dir.join("scene.toml"), spec.to_toml_string())?;
    let cfg = PipelineConfig {
        seed,
        paths: Paths {
            cloud: Some("cloud.xyz".into()),
            bands,
            truth: Some("truth.geojson".into()),
            ..Paths::default()
        },
        geotransform: Some(scene.gt),
        ..PipelineConfig::default()
    };
    fs::write(dir.join(PIPELINE_FILE), cfg.to_toml_string())?;
    Ok(scene)
}

// ---------------------------------------------------------------- bench-sr

pub fn bench_csv(reports: &[SrBenchReport]) -> String {
    let mut s = String::from("method,factor,rmse,ssim,psnr\n");
    for rep in reports {
        for r in &rep.rows {
            let _ = writeln!(s, "{},{},{:.6},{:.6},{:.4}", r.method, r.factor, r.rmse, r.ssim, r.psnr);
        }
    }
    s
}

pub fn cmd_bench_sr(cfg: &PipelineConfig) -> CliResult<Vec<SrBenchReport>> {
    let cloud_path = required_path(&cfg.paths.cloud, "cloud")?;
    let gt = required_gt(cfg)?;
    let cloud = read_xyz(cloud_path)?;
    let reports = with_pool(cfg.jobs, || sr_benchmark_factors(&cloud, &gt, &cfg.bench_factors, &cfg.superres))??;
    fs::create_dir_all(&cfg.paths.out_dir)?;
    fs::write(cfg.out_path(BENCH_CSV), bench_csv(&reports))?;
    Ok(reports)
}
