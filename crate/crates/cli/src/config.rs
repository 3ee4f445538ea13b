//! Pipeline configuration, read from a single TOML file.
//!
//! Relative paths are resolved against the directory holding the config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srsm::scene::DEFAULT_NDVI_THRESHOLD;
use srsm::superres::SrParams;
use srsm::{GeoTransform, SnakeParams};

use crate::error::{CliError, CliResult};

pub const MIN_TILE_SIZE: usize = 64;
pub const DEFAULT_TILE_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Tile core size in pixels.
    #[serde(default = "default_tile_size")]
    pub tile_size: usize,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    /// Only used by `synth`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_factors")]
    pub bench_factors: Vec<usize>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geotransform: Option<GeoTransform>,
    #[serde(default)]
    pub superres: SrParams,
    #[serde(default)]
    pub snake: SnakeParams,
    #[serde(default)]
    pub scene: SceneThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud: Option<PathBuf>,
    /// Band name (`red`, `nir`, ...) to PGM file.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bands: BTreeMap<String, PathBuf>,
    /// Reference footprints (GeoJSON).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Z-image input for `extract`; defaults to the `superres` output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zimage: Option<PathBuf>,
    /// Footprints input for `evaluate`; defaults to the `extract` output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprints: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            cloud: None,
            bands: BTreeMap::new(),
            truth: None,
            zimage: None,
            footprints: None,
            out_dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneThresholds {
    /// Height above terrain, meters.
    pub min_height: f64,
    /// Smallest candidate, m².
    pub min_area: f64,
    pub ndvi_threshold: f64,
}

impl Default for SceneThresholds {
    fn default() -> Self {
        Self {
            min_height: 2.0,
            min_area: 10.0,
            ndvi_threshold: DEFAULT_NDVI_THRESHOLD,
        }
    }
}

fn default_tile_size() -> usize {
    DEFAULT_TILE_SIZE
}

fn default_factors() -> Vec<usize> {
    vec![2, 4, 8]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            jobs: 0,
            seed: 0,
            bench_factors: default_factors(),
            paths: Paths::default(),
            geotransform: None,
            superres: SrParams::default(),
            snake: SnakeParams::default(),
            scene: SceneThresholds::default(),
        }
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tile_size: Option<usize>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::missing(path),
            _ => CliError::from(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [&mut paths.cloud, &mut paths.truth, &mut paths.zimage, &mut paths.footprints]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        paths.bands.values_mut().for_each(fix);
        fix(&mut paths.out_dir);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.tile_size {
            self.tile_size = t;
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
        if let Some(d) = &o.out_dir {
            self.paths.out_dir = d.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.tile_size < MIN_TILE_SIZE {
            return Err(CliError::config(format!("tile_size must be >= {MIN_TILE_SIZE}, got {}", self.tile_size)));
        }
        if self.bench_factors.is_empty() || self.bench_factors.contains(&0) {
            return Err(CliError::config("bench_factors must be a non-empty list of factors >= 1"));
        }
        let s = &self.scene;
        if !(s.min_height >= 0.0 && s.min_area >= 0.0 && s.ndvi_threshold.is_finite()) {
            return Err(CliError::config("scene thresholds must be finite and >= 0"));
        }
        if let Some(gt) = &self.geotransform {
            gt.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        self.superres.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.snake.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    pub fn zimage_path(&self) -> PathBuf {
        self.paths.zimage.clone().unwrap_or_else(|| self.out_path(crate::commands::ZIMAGE_FILE))
    }

    pub fn footprints_path(&self) -> PathBuf {
        self.paths.footprints.clone().unwrap_or_else(|| self.out_path(crate::commands::FOOTPRINTS_FILE))
    }
}
