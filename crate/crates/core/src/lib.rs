//! Building footprint extraction from LiDAR: super-resolved z-images, image
//! energies with gradient vector flow, mask-guided active contours, and the
//! thematic/geometric accuracy metrics used to score the result.

pub mod energy;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod scene;
pub mod snake;
pub mod superres;
pub mod types;

pub use error::{Error, Result};
pub use superres::SrParams;
pub use types::{
    BinaryMask, Contour, ExternalForce, GeoTransform, Grid, Point, PointCloud3D, ScalarField, SnakeParams,
    SparseZImage, ZImage,
};
