use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MultiSpectralImage;
use crate::error::{Error, Result};
use crate::types::{Contour, GeoTransform, PointCloud3D, ScalarField, ZImage};

/// Flat-roofed building with a polygonal footprint in world `(x, y)` meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub polygon: Vec<[f64; 2]>,
    pub height: f64,
}

/// Dome-shaped tree, rendered green in the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
}

fn default_pixel_size() -> f64 {
    1.0
}

/// Synthetic scene description. `origin` is the south-west corner and
/// `extent` the (width, height) in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    #[serde(default = "default_pixel_size")]
    pub pixel_size: f64,
    /// Ground elevation at the origin.
    pub ground: f64,
    /// Ground gradient `(dz/dx, dz/dy)`.
    #[serde(default)]
    pub ground_slope: [f64; 2],
    /// Points per m².
    pub density: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub trees: Vec<TreeSpec>,
}

/// Everything [`synth_scene`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub cloud: PointCloud3D,
    pub gt: GeoTransform,
    /// Noise-free surface sampled at pixel centers.
    pub truth_z: ZImage,
    /// Footprints in raster pixel coordinates.
    pub footprints: Vec<Contour>,
    /// Footprints as open world rings, in the order given by the spec.
    pub footprints_world: Vec<Vec<[f64; 2]>>,
    pub image: MultiSpectralImage,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Cover {
    Ground,
    Roof,
    Tree,
}

fn inside_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > y) != (b[1] > y) && x < a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]) {
            inside = !inside;
        }
    }
    inside
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

impl SceneSpec {
    /// 128 m × 128 m at 1 m pixels, gently sloped ground, two flat-roofed
    /// boxes, 2 points per m² and no noise.
    pub fn standard() -> Self {
        let rect = |x0: f64, y0: f64, x1: f64, y1: f64| vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
        Self {
            origin: [0.0, 0.0],
            extent: [128.0, 128.0],
            pixel_size: 1.0,
            ground: 100.0,
            ground_slope: [0.02, -0.01],
            density: 2.0,
            noise_std: 0.0,
            boxes: vec![
                BoxSpec {
                    polygon: rect(20.0, 70.0, 50.0, 100.0),
                    height: 12.0,
                },
                BoxSpec {
                    polygon: rect(70.0, 20.0, 110.0, 45.0),
                    height: 8.0,
                },
            ],
            trees: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::parse("scene spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(format!("scene spec: {msg}")));
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return bad("extent must be positive".into());
        }
        if !(self.pixel_size > 0.0) {
            return bad("pixel_size must be > 0".into());
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be > 0".into());
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be >= 0".into());
        }
        let finite = [self.origin[0], self.origin[1], self.ground, self.ground_slope[0], self.ground_slope[1]];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("origin, ground and slope must be finite".into());
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.height > 0.0) {
                return bad(format!("box {i} height must be > 0"));
            }
            if b.polygon.len() < 3 || b.polygon.iter().flatten().any(|v| !v.is_finite()) || !is_simple(&b.polygon) {
                return bad(format!("box {i} polygon must be a simple ring of >= 3 finite vertices"));
            }
        }
        for (i, t) in self.trees.iter().enumerate() {
            if !(t.height > 0.0 && t.radius > 0.0) {
                return bad(format!("tree {i} needs positive radius and height"));
            }
        }
        Ok(())
    }

    pub fn geotransform(&self) -> GeoTransform {
        let rows = (self.extent[1] / self.pixel_size).ceil() as usize;
        let cols = (self.extent[0] / self.pixel_size).ceil() as usize;
        GeoTransform {
            origin_x: self.origin[0],
            origin_y: self.origin[1] + self.extent[1],
            pixel_size: self.pixel_size,
            rows,
            cols,
        }
    }

    fn ground_at(&self, x: f64, y: f64) -> f64 {
        self.ground + self.ground_slope[0] * (x - self.origin[0]) + self.ground_slope[1] * (y - self.origin[1])
    }

    fn roof_levels(&self) -> Vec<f64> {
        self.boxes
            .iter()
            .map(|b| {
                let n = b.polygon.len() as f64;
                let cx = b.polygon.iter().map(|p| p[0]).sum::<f64>() / n;
                let cy = b.polygon.iter().map(|p| p[1]).sum::<f64>() / n;
                self.ground_at(cx, cy) + b.height
            })
            .collect()
    }

    fn surface_at(&self, roofs: &[f64], x: f64, y: f64) -> (f64, Cover) {
        let mut z = self.ground_at(x, y);
        let mut cover = Cover::Ground;
        for (b, &roof) in self.boxes.iter().zip(roofs) {
            if inside_polygon(&b.polygon, x, y) && roof > z {
                z = roof;
                cover = Cover::Roof;
            }
        }
        for t in &self.trees {
            let d2 = (x - t.center[0]).powi(2) + (y - t.center[1]).powi(2);
            if d2 < t.radius * t.radius {
                let top = self.ground_at(x, y) + t.height * (1.0 - d2 / (t.radius * t.radius)).sqrt();
                if top > z {
                    z = top;
                    cover = Cover::Tree;
                }
            }
        }
        (z, cover)
    }
}

/// Reflectances `(red, green, blue, nir)` per cover class.
fn reflectance(cover: Cover) -> [f64; 4] {
    match cover {
        Cover::Ground => [0.25, 0.27, 0.22, 0.35],
        Cover::Roof => [0.40, 0.38, 0.36, 0.45],
        Cover::Tree => [0.05, 0.12, 0.04, 0.50],
    }
}

/// Samples the scene on a jittered grid (one point per `1/√density` cell,
/// uniformly placed inside it) and renders the truth raster and image.
/// The same spec and seed always give identical output.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let gt = spec.geotransform();
    let roofs = spec.roof_levels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if spec.noise_std > 0.0 {
        Some(Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidParam(e.to_string()))?)
    } else {
        None
    };

    let step = 1.0 / spec.density.sqrt();
    let (w, h) = (spec.extent[0], spec.extent[1]);
    let (nx, ny) = ((w / step).ceil() as usize, (h / step).ceil() as usize);
    let mut points = Vec::with_capacity(nx * ny);
    for i in 0..ny {
        for j in 0..nx {
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let x = spec.origin[0] + (j as f64 + u) * step;
            let y = spec.origin[1] + (i as f64 + v) * step;
            let mut z = spec.surface_at(&roofs, x, y).0;
            if let Some(n) = &noise {
                z += n.sample(&mut rng);
            }
            if x < spec.origin[0] + w && y < spec.origin[1] + h {
                points.push([x, y, z]);
            }
        }
    }
    let cloud = PointCloud3D::new(points)?;

    let (rows, cols) = (gt.rows, gt.cols);
    let mut truth_z = ZImage::zeros(rows, cols);
    let mut bands = [0, 1, 2, 3].map(|_| ScalarField::zeros(rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = gt.pixel_to_world(r as f64 + 0.5, c as f64 + 0.5);
            let (z, cover) = spec.surface_at(&roofs, x, y);
            truth_z[(r, c)] = z;
            for (band, value) in bands.iter_mut().zip(reflectance(cover)) {
                band[(r, c)] = value;
            }
        }
    }
    let mut image = MultiSpectralImage::new(rows, cols);
    for (name, band) in ["red", "green", "blue", "nir"].into_iter().zip(bands) {
        image.insert_band(name, band)?;
    }

    let footprints = spec
        .boxes
        .iter()
        .map(|b| Contour::from_ring(b.polygon.iter().map(|p| gt.world_to_pixel(p[0], p[1])).collect()).map(|c| c.to_ccw()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticScene {
        cloud,
        gt,
        truth_z,
        footprints,
        footprints_world: spec.boxes.iter().map(|b| b.polygon.clone()).collect(),
        image,
    })
}
