//! File formats: ASCII XYZ clouds, ZIMG float rasters with a geotransform
//! sidecar, PGM previews and bands, GeoJSON footprints, CSV traces.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snake::SnakeState;
use crate::superres::SrTrace;
use crate::types::{Contour, GeoTransform, Grid, PointCloud3D, ScalarField, ZImage};

pub const ZIMG_MAGIC: &[u8; 4] = b"ZIMG";
const ZIMG_HEADER: usize = 16;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

// ---------------------------------------------------------------- XYZ

/// One `x y z` triple per line, separated by whitespace and/or commas.
/// Blank lines and lines starting with `#` are skipped; extra columns are ignored.
pub fn parse_xyz(text: &str) -> Result<PointCloud3D> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
        let mut xyz = [0.0; 3];
        for v in &mut xyz {
            let tok = it.next().ok_or_else(|| Error::parse(format!("xyz line {}", i + 1), "expected 3 values"))?;
            *v = tok.parse().map_err(|e| Error::parse(format!("xyz line {}", i + 1), e))?;
        }
        points.push(xyz);
    }
    PointCloud3D::new(points)
}

pub fn read_xyz(path: &Path) -> Result<PointCloud3D> {
    parse_xyz(&read_text(path)?)
}

pub fn write_xyz(path: &Path, cloud: &PointCloud3D) -> Result<()> {
    let mut s = String::with_capacity(cloud.len() * 32);
    for [x, y, z] in cloud.points() {
        let _ = writeln!(s, "{x} {y} {z}");
    }
    fs::write(path, s)?;
    Ok(())
}

// ---------------------------------------------------------------- ZIMG

/// Path of the geotransform sidecar for a raster (`<file>.toml`).
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Header `ZIMG`, u32 rows, u32 cols, u32 zero (all little-endian), then
/// row-major f32 elevations. The geotransform goes to the sidecar.
pub fn encode_zimg(img: &ZImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(ZIMG_HEADER + 4 * img.len());
    out.extend_from_slice(ZIMG_MAGIC);
    out.extend_from_slice(&(img.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(img.cols() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_zimg(bytes: &[u8]) -> Result<ZImage> {
    let bad = |m: &str| Error::parse("zimg", m);
    if bytes.len() < ZIMG_HEADER || &bytes[..4] != ZIMG_MAGIC {
        return Err(bad("missing ZIMG header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (u32_at(4), u32_at(8));
    if bytes.len() != ZIMG_HEADER + 4 * rows * cols {
        return Err(bad(&format!("{rows}x{cols} raster needs {} data bytes", 4 * rows * cols)));
    }
    let data = bytes[ZIMG_HEADER..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    Grid::from_vec(rows, cols, data)
}

pub fn write_zimg(path: &Path, img: &ZImage, gt: &GeoTransform) -> Result<()> {
    if (gt.rows, gt.cols) != img.dims() {
        return Err(Error::DimMismatch {
            left_rows: img.rows(),
            left_cols: img.cols(),
            right_rows: gt.rows,
            right_cols: gt.cols,
        });
    }
    fs::write(path, encode_zimg(img))?;
    fs::write(sidecar_path(path), toml::to_string(gt).map_err(|e| Error::parse("geotransform", e))?)?;
    Ok(())
}

pub fn read_geotransform(path: &Path) -> Result<GeoTransform> {
    let gt: GeoTransform = toml::from_str(&read_text(path)?).map_err(|e| Error::parse(path.display().to_string(), e))?;
    gt.validate()?;
    Ok(gt)
}

pub fn read_zimg(path: &Path) -> Result<(ZImage, GeoTransform)> {
    let img = decode_zimg(&read_bytes(path)?)?;
    let gt = read_geotransform(&sidecar_path(path))?;
    if (gt.rows, gt.cols) != img.dims() {
        return Err(Error::parse(path.display().to_string(), "sidecar dims differ from raster"));
    }
    Ok((img, gt))
}

// ---------------------------------------------------------------- PGM

fn encode_pgm(rows: usize, cols: usize, maxval: u16, values: impl Iterator<Item = u16>) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n{maxval}\n").into_bytes();
    for v in values {
        if maxval > 255 {
            out.extend_from_slice(&v.to_be_bytes());
        } else {
            out.push(v as u8);
        }
    }
    out
}

/// 16-bit min-max scaled preview of a raster.
pub fn write_pgm_preview(path: &Path, img: &ZImage) -> Result<()> {
    let (lo, hi) = img.min_max();
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
    let bytes = encode_pgm(img.rows(), img.cols(), 65535, img.data().iter().map(|&v| ((v - lo) * scale).round() as u16));
    fs::write(path, bytes)?;
    Ok(())
}

/// A reflectance band in [0, 1], stored as `round(value * maxval)`.
pub fn write_pgm_band(path: &Path, band: &ScalarField, maxval: u16) -> Result<()> {
    let m = maxval as f64;
    let bytes = encode_pgm(
        band.rows(),
        band.cols(),
        maxval,
        band.data().iter().map(|&v| (v.clamp(0.0, 1.0) * m).round() as u16),
    );
    fs::write(path, bytes)?;
    Ok(())
}

/// Raw samples and maxval of a binary (P5) PGM.
pub fn decode_pgm(bytes: &[u8]) -> Result<(Grid<u16>, u16)> {
    let bad = |m: &str| Error::parse("pgm", m);
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (cols, rows, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    pos += 1; // single whitespace before the raster
    let width = if maxval > 255 { 2 } else { 1 };
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != rows * cols * width {
        return Err(bad("raster size does not match header"));
    }
    let values = if width == 2 {
        data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    Ok((Grid::from_vec(rows, cols, values)?, maxval as u16))
}

/// A band written by [`write_pgm_band`], back in [0, 1].
pub fn read_pgm_band(path: &Path) -> Result<ScalarField> {
    let (raw, maxval) = decode_pgm(&read_bytes(path)?)?;
    Ok(raw.map(|&v| v as f64 / maxval as f64))
}

// ---------------------------------------------------------------- GeoJSON

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordSpace {
    /// Map coordinates `[x, y]` in meters.
    World,
    /// Raster coordinates `[col, row]`.
    Pixel,
}

#[derive(Serialize, Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    properties: Properties,
    geometry: Geometry,
}

#[derive(Serialize, Deserialize)]
struct Properties {
    id: usize,
    coords: CoordSpace,
}

#[derive(Serialize, Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<Vec<[f64; 2]>>,
}

/// FeatureCollection of closed Polygon rings. Contours are in raster pixel
/// coordinates; `gt` converts them when `space` is `World`.
pub fn footprints_to_geojson(contours: &[Contour], gt: &GeoTransform, space: CoordSpace) -> String {
    let features = contours
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let mut ring: Vec<[f64; 2]> = c
                .points()
                .iter()
                .map(|&[r, col]| match space {
                    CoordSpace::World => {
                        let (x, y) = gt.pixel_to_world(r, col);
                        [x, y]
                    }
                    CoordSpace::Pixel => [col, r],
                })
                .collect();
            ring.push(ring[0]);
            Feature {
                kind: "Feature".into(),
                properties: Properties { id, coords: space },
                geometry: Geometry {
                    kind: "Polygon".into(),
                    coordinates: vec![ring],
                },
            }
        })
        .collect();
    let fc = FeatureCollection {
        kind: "FeatureCollection".into(),
        features,
    };
    let mut s = serde_json::to_string_pretty(&fc).expect("plain data serializes");
    s.push('\n');
    s
}

/// Outer rings of every Polygon feature, in raster pixel coordinates of `gt`.
pub fn footprints_from_geojson(text: &str, gt: &GeoTransform) -> Result<Vec<Contour>> {
    let fc: FeatureCollection = serde_json::from_str(text).map_err(|e| Error::parse("geojson", e))?;
    if fc.kind != "FeatureCollection" {
        return Err(Error::parse("geojson", "expected a FeatureCollection"));
    }
    fc.features
        .into_iter()
        .map(|f| {
            if f.geometry.kind != "Polygon" {
                return Err(Error::parse("geojson", format!("feature {}: only Polygon is supported", f.properties.id)));
            }
            let ring = f
                .geometry
                .coordinates
                .into_iter()
                .next()
                .ok_or_else(|| Error::parse("geojson", "polygon without rings"))?;
            let pts = ring
                .into_iter()
                .map(|[a, b]| match f.properties.coords {
                    CoordSpace::World => gt.world_to_pixel(a, b),
                    CoordSpace::Pixel => [b, a],
                })
                .collect();
            Contour::from_ring(pts)
        })
        .collect()
}

pub fn read_footprints(path: &Path, gt: &GeoTransform) -> Result<Vec<Contour>> {
    footprints_from_geojson(&read_text(path)?, gt)
}

// ---------------------------------------------------------------- CSV

/// `iter,diff,cost`, one row per propagation iteration.
pub fn trace_csv(trace: &SrTrace) -> String {
    let mut s = String::from("iter,diff,cost\n");
    for (k, (d, c)) in trace.diff.iter().zip(&trace.cost).enumerate() {
        let _ = writeln!(s, "{k},{d},{c}");
    }
    s
}

/// `iter,max_move,area`, one row per snake iteration.
pub fn history_csv(history: &[SnakeState]) -> String {
    let mut s = String::from("iter,max_move,area\n");
    for st in history {
        let _ = writeln!(s, "{},{},{}", st.iteration, st.last_move, st.contour.area());
    }
    s
}
