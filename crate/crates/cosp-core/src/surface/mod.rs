//! From matched image points to terrain: forward intersection, DEM
//! gridding, tile-based coregistration and difference statistics.

mod intersect;

pub use intersect::triangulate;

use crate::geo::GeoError;

#[derive(Debug, thiserror::Error)]
pub enum SurfaceError {
    #[error("rays are near parallel; intersection is unstable")]
    NearParallelRays,
    #[error("rays diverge; the intersection lies behind a camera")]
    DivergentPoint,
    #[error("grids do not share any valid area")]
    DisjointGrids,
    #[error("stable mask leaves no usable cells")]
    NoStableTerrain,
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Camera(#[from] crate::pancam::CameraError),
}
