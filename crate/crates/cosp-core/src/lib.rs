//! Core library for reconstructing terrain from panoramic film imagery.
//!
//! The pipeline is organized in processing order:
//!
//! * [`geo`]: coordinate systems, rasters, rotations, robust statistics.
//! * [`imgproc`]: grayscale image containers and low-level matching.
//! * [`pancam`]: the time-dependent rotating-slit camera model.
//! * [`synthkit`]: synthetic scenes with exact ground truth.
//! * [`filmprep`]: film-scan stitching and geometric cleanup.
//! * [`gcpgen`]: ground-control generation against a reference basemap.
//! * [`adjust`]: bundle adjustment of camera parameters.
//! * [`stereo`]: epipolar rectification and dense matching.
//! * [`surface`]: triangulation, gridding and terrain coregistration.

pub mod adjust;
pub mod filmprep;
pub mod geo;
pub mod imgproc;
pub mod pancam;
pub mod surface;
pub mod synthkit;

pub use adjust::{GcpRecord, GcpRole, TiePoint};
pub use geo::{nmad, EcefPoint, GeodeticPoint, RasterGrid, Rotation3};
pub use imgproc::GrayImage;
pub use pancam::{ImagePointMM, PanoramicCamera, PixelPoint};
pub use synthkit::{make_stereo_scene, SceneConfig, SyntheticScene};
