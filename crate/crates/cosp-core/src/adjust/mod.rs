//! Bundle adjustment of panoramic camera pairs.
//!
//! Observations are pixel measurements of ground control points (known
//! ground coordinates) and tie points (ground coordinates estimated during
//! the adjustment). Each camera contributes 13 unknowns: position, velocity,
//! attitude, attitude rates and the image motion compensation factor.

mod init;
mod io;
mod problem;
mod residual;
mod solver;

pub use init::{initialize_cameras, FilmFormat, ImageFootprint, NOMINAL_ALTITUDE_M};
pub use io::{read_observations_csv, write_observations_csv};
pub use residual::{residual_field, RESIDUAL_NODATA};
pub use solver::bundle_adjust;

use serde::{Deserialize, Serialize};

use crate::geo::{EcefPoint, GeoError, UtmZone};
use crate::pancam::{CameraError, PixelPoint};

/// Whether a ground control point constrains the solution or only audits it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GcpRole {
    /// Enters the normal equations.
    Control,
    /// Held out; reported as an independent accuracy check.
    Check,
}

/// One image measurement of a point with known ground coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcpRecord {
    pub image_id: String,
    pub pixel: PixelPoint,
    pub ground: EcefPoint,
    /// A-priori measurement standard deviation in pixels.
    pub sigma_px: f64,
    pub role: GcpRole,
}

/// A feature matched across two or more images. The ground position is an
/// unknown of the adjustment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TiePoint {
    pub id: String,
    /// `(image_id, pixel)` measurements; at least two.
    pub observations: Vec<(String, PixelPoint)>,
    pub sigma_px: f64,
    /// Estimated ground position, filled in by the adjustment.
    pub ground: Option<EcefPoint>,
}

/// Solver settings. The defaults match the documented behaviour of
/// [`bundle_adjust`](crate::adjust::bundle_adjust).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjustmentConfig {
    pub max_iterations: u32,
    /// Stop when the weighted SSE improves by less than this relative amount.
    pub rel_sse_tol: f64,
    /// Stop when the scaled parameter update falls below this norm.
    pub step_tol: f64,
    /// Reweighting rounds for outlier rejection (0 disables).
    pub reweight_rounds: u32,
    /// Residuals beyond `outlier_factor * sigma0` are down-weighted and,
    /// after the final round, rejected.
    pub outlier_factor: f64,
    /// UTM zone for check-point RMSE. `None` picks the zone of the first
    /// control point.
    pub utm: Option<UtmZone>,
    /// Allow more than two cameras in one adjustment (tie points spanning
    /// consecutive overlapping pairs).
    pub multi_pair: bool,
}

impl Default for AdjustmentConfig {
    fn default() -> Self {
        AdjustmentConfig {
            max_iterations: 100,
            rel_sse_tol: 1e-10,
            step_tol: 1e-8,
            reweight_rounds: 3,
            outlier_factor: 3.0,
            utm: None,
            multi_pair: false,
        }
    }
}

/// Which measurement a residual belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationKind {
    Gcp { index: usize, role: GcpRole },
    Tie { id: String },
}

/// Post-fit residual of one image measurement, in pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationResidual {
    pub image_id: String,
    pub kind: ObservationKind,
    pub pixel: PixelPoint,
    pub vx_px: f64,
    pub vy_px: f64,
    pub weight: f64,
    pub rejected: bool,
}

/// Adjustment summary returned alongside the updated cameras.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjustmentReport {
    /// A-posteriori standard deviation of unit weight, pixels.
    pub sigma0_px: f64,
    /// Check-point RMSE `[east, north, up]` in metres in the configured UTM
    /// zone; `None` when no check points were supplied.
    pub rmse_xyz_m: Option<[f64; 3]>,
    pub residuals: Vec<ObservationResidual>,
    pub converged: bool,
    pub iterations: u32,
    /// Degrees of freedom used for `sigma0`.
    pub redundancy: f64,
    pub rejected_observations: usize,
    /// Weighted SSE at each iteration, first entry is the initial value.
    pub sse_history: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AdjustError {
    #[error("image {image_id}: {got} control points, at least {needed} required")]
    InsufficientControl {
        image_id: String,
        needed: usize,
        got: usize,
    },
    #[error("normal matrix is singular; unresolved parameters: {parameters:?}")]
    SingularNormalMatrix { parameters: Vec<String> },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: u32 },
    #[error("residuals diverged at iteration {iteration}")]
    DivergingResiduals { iteration: u32 },
    #[error("observation references unknown image {image_id}")]
    UnknownImage { image_id: String },
    #[error("{unknowns} unknowns but only {observations} observation equations")]
    Underdetermined { unknowns: usize, observations: usize },
    #[error("{cameras} cameras supplied; enable multi_pair for joint adjustment")]
    MultiPairDisabled { cameras: usize },
    #[error("bad observation record: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}
