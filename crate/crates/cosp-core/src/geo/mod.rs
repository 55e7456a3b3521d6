//! Foundational geometry: geodetic and Earth-centered coordinates, rotation
//! matrices, raster grids, a transverse Mercator projection and robust
//! statistics.

mod geodesy;
mod geotiff;
mod raster;
mod rotation;
mod stats;
mod utm;

pub use geodesy::{
    ecef_to_geodetic, geodetic_to_ecef, meters_per_degree, normalize_lon, EcefPoint, GeodeticPoint,
};
pub use raster::RasterGrid;
pub use rotation::{euler_to_rotation, euler_to_rotation_partials, Rotation3};
pub use stats::{median, nmad};
pub use utm::UtmZone;

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_INV_F: f64 = 298.257_223_563;
pub const WGS84_F: f64 = 1.0 / WGS84_INV_F;
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("point lies within {0} m of the Earth center")]
    NearEarthCenter(f64),
    #[error("need at least {needed} finite values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("geotransform {0:?} is not invertible")]
    SingularGeotransform([f64; 6]),
    #[error("{width}x{height} grid does not match buffer of {len} values")]
    DimensionMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("grids share no overlap")]
    DisjointGrids,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tiff(#[from] tiff::TiffError),
    #[error("sidecar metadata: {0}")]
    Sidecar(#[from] serde_json::Error),
    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),
}
