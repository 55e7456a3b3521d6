//! Time-dependent rotating-slit camera model.
//!
//! A panoramic frame is exposed by a slit sweeping across the film while the
//! optics rotate at constant angular rate, so each film column records the
//! scene at its own instant. Exterior orientation is linear in the scan time
//! `t in [0, 1]`: position `P(t) = P0 + t*P1` in Earth-centered coordinates
//! and attitude angles `theta(t) = theta0 + t*theta1` applied on top of a
//! fixed track-aligned anchor frame. An image motion compensation (IMC) term
//! models the film carriage that counteracts forward motion during the sweep.
//!
//! Film coordinates are millimeters with the origin at the format center:
//! `x` along the sweep (so `x = f * alpha` for scan angle `alpha`), `y`
//! along track. Pixel coordinates place integer indices at pixel corners,
//! column 0 at `x = -L`, row 0 at `y = +W` for half-extents `L`, `W`.

mod jacobian;

pub use jacobian::{project_with_jacobian, ProjectionJacobian};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::geo::{euler_to_rotation, geodetic_to_ecef, EcefPoint, GeodeticPoint, Rotation3};

/// Film-plane position in millimeters from the format center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePointMM {
    pub x: f64,
    pub y: f64,
}

impl ImagePointMM {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Continuous pixel position, corner convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub col: f64,
    pub row: f64,
}

impl PixelPoint {
    pub fn new(col: f64, row: f64) -> Self {
        Self { col, row }
    }
}

/// Geodetic anchor fixing the reference attitude frame of one camera.
///
/// The anchor frame makes the adjustable angles small and meaningful: a
/// camera with zero angles looks straight down at the anchor with film `y`
/// opposite the flight azimuth (degrees clockwise from north).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorFrame {
    pub lon: f64,
    pub lat: f64,
    pub azimuth_deg: f64,
}

impl AnchorFrame {
    /// Local unit vectors `(east, north, up)` at the anchor, in
    /// Earth-centered coordinates.
    pub fn local_axes(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let lon = self.lon.to_radians();
        let lat = self.lat.to_radians();
        let (sin_lon, cos_lon) = lon.sin_cos();
        let (sin_lat, cos_lat) = lat.sin_cos();
        let east = Vector3::new(-sin_lon, cos_lon, 0.0);
        let north = Vector3::new(-cos_lon * sin_lat, -sin_lon * sin_lat, cos_lat);
        let up = Vector3::new(cos_lon * cos_lat, sin_lon * cos_lat, sin_lat);
        (east, north, up)
    }

    /// Horizontal flight direction for the anchor azimuth.
    pub fn flight_direction(&self) -> Vector3<f64> {
        let (east, north, _) = self.local_axes();
        let az = self.azimuth_deg.to_radians();
        north * az.cos() + east * az.sin()
    }

    /// Rows of the returned matrix are the reference camera axes in world
    /// coordinates: `x` across track (right of flight), `y` against flight,
    /// `z` up.
    pub fn base_rotation(&self) -> Rotation3 {
        let (_, _, up) = self.local_axes();
        let y = -self.flight_direction();
        let x = y.cross(&up);
        Rotation3(nalgebra::Matrix3::from_rows(&[
            x.transpose(),
            y.transpose(),
            up.transpose(),
        ]))
    }
}

/// The thirteen adjustable parameters of one panoramic exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    /// Perspective-center position at `t = 0`, Earth-centered meters.
    pub position: [f64; 3],
    /// Position change over one full sweep, meters.
    pub velocity: [f64; 3],
    /// Attitude at `t = 0` relative to the anchor frame, radians
    /// (omega, phi, kappa).
    pub angles: [f64; 3],
    /// Attitude change over one full sweep, radians.
    pub rates: [f64; 3],
    /// Image motion compensation factor (forward velocity over height times
    /// scan rate, dimensionless).
    pub imc: f64,
}

pub const PARAM_COUNT: usize = 13;

impl CameraParams {
    /// Flattened order: position, velocity, angles, rates, imc.
    pub fn to_array(&self) -> [f64; PARAM_COUNT] {
        let mut a = [0.0; PARAM_COUNT];
        a[..3].copy_from_slice(&self.position);
        a[3..6].copy_from_slice(&self.velocity);
        a[6..9].copy_from_slice(&self.angles);
        a[9..12].copy_from_slice(&self.rates);
        a[12] = self.imc;
        a
    }

    pub fn from_array(a: &[f64; PARAM_COUNT]) -> Self {
        Self {
            position: [a[0], a[1], a[2]],
            velocity: [a[3], a[4], a[5]],
            angles: [a[6], a[7], a[8]],
            rates: [a[9], a[10], a[11]],
            imc: a[12],
        }
    }
}

/// Human-readable names for the flattened parameter order.
pub const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "x0", "y0", "z0", "x_rate", "y_rate", "z_rate", "omega0", "phi0", "kappa0", "omega_rate",
    "phi_rate", "kappa_rate", "imc",
];

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq, Eq)]
pub enum CameraError {
    #[error("ground point is behind the scanning camera")]
    BehindCamera,
    #[error("slit-time iteration did not converge after {0} steps")]
    NoConvergence(u32),
}

/// A projected film position together with its exposure instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub mm: ImagePointMM,
    /// Scan time of the recording slit, 0 at `x = -L`, 1 at `x = +L`.
    pub t: f64,
    /// Scan angle in radians.
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanoramicCamera {
    pub id: String,
    /// Focal length, mm.
    pub focal_mm: f64,
    /// Half film width along the sweep, mm.
    pub half_width_mm: f64,
    /// Half film height along track, mm.
    pub half_height_mm: f64,
    /// Scan pixel pitch, mm.
    pub pixel_pitch_mm: f64,
    pub anchor: AnchorFrame,
    pub params: CameraParams,
    #[serde(skip)]
    base: OnceLock<Rotation3>,
}

/// Nominal fore/aft tilt magnitude of the stereo pair, radians.
pub const STEREO_TILT: f64 = 15.0 * std::f64::consts::PI / 180.0;

impl PanoramicCamera {
    /// Slit-time iteration stops when the film coordinate moves less than
    /// this many millimeters.
    pub const CONVERGENCE_MM: f64 = 1e-10;
    pub const MAX_ITERATIONS: u32 = 20;

    pub fn new(
        id: impl Into<String>,
        focal_mm: f64,
        half_width_mm: f64,
        half_height_mm: f64,
        pixel_pitch_mm: f64,
        anchor: AnchorFrame,
        params: CameraParams,
    ) -> Self {
        Self {
            id: id.into(),
            focal_mm,
            half_width_mm,
            half_height_mm,
            pixel_pitch_mm,
            anchor,
            params,
            base: OnceLock::new(),
        }
    }

    /// A camera of a converging down-looking pair at the given height above
    /// the anchor. The fore camera tilts toward flight by the nominal stereo
    /// angle and sits behind the anchor so both look at the same ground;
    /// the aft camera mirrors it. Velocity, rates and IMC start at zero.
    pub fn nominal(
        id: impl Into<String>,
        anchor: AnchorFrame,
        height_m: f64,
        fore: bool,
        focal_mm: f64,
        half_width_mm: f64,
        half_height_mm: f64,
        pixel_pitch_mm: f64,
    ) -> Self {
        let ground = geodetic_to_ecef(GeodeticPoint::new(anchor.lon, anchor.lat, 0.0));
        let (_, _, up) = anchor.local_axes();
        let fly = anchor.flight_direction();
        let along = height_m * STEREO_TILT.tan() * if fore { -1.0 } else { 1.0 };
        let pos = ground.to_vector() + up * height_m + fly * along;
        let omega0 = if fore { -STEREO_TILT } else { STEREO_TILT };
        Self::new(
            id,
            focal_mm,
            half_width_mm,
            half_height_mm,
            pixel_pitch_mm,
            anchor,
            CameraParams {
                position: [pos.x, pos.y, pos.z],
                velocity: [0.0; 3],
                angles: [omega0, 0.0, 0.0],
                rates: [0.0; 3],
                imc: 0.0,
            },
        )
    }

    pub fn base(&self) -> Rotation3 {
        *self.base.get_or_init(|| self.anchor.base_rotation())
    }

    /// Scan time at which the slit exposes film coordinate `x` mm.
    pub fn scan_time(&self, x_mm: f64) -> f64 {
        (x_mm + self.half_width_mm) / (2.0 * self.half_width_mm)
    }

    /// Film `x` under the slit at scan time `t`.
    pub fn slit_x(&self, t: f64) -> f64 {
        (2.0 * t - 1.0) * self.half_width_mm
    }

    /// Scan angle recorded at film coordinate `x` mm.
    pub fn scan_angle(&self, x_mm: f64) -> f64 {
        x_mm / self.focal_mm
    }

    /// Exterior orientation at scan time `t`.
    pub fn eo_at(&self, t: f64) -> (Vector3<f64>, Rotation3) {
        let p = &self.params;
        let pos = Vector3::new(
            p.position[0] + t * p.velocity[0],
            p.position[1] + t * p.velocity[1],
            p.position[2] + t * p.velocity[2],
        );
        let r = euler_to_rotation(
            p.angles[0] + t * p.rates[0],
            p.angles[1] + t * p.rates[1],
            p.angles[2] + t * p.rates[2],
        )
        .compose(&self.base());
        (pos, r)
    }

    /// Along-track film displacement of the motion compensation carriage at
    /// scan angle `alpha`.
    pub fn imc_shift(&self, alpha: f64) -> f64 {
        -self.params.imc * self.focal_mm * alpha.sin() * self.params.angles[0].cos()
    }

    /// Project a ground point onto the film, solving for the slit time.
    pub fn project(&self, ground: EcefPoint) -> Result<ProjectedPoint, CameraError> {
        let (t, n, _) = self.solve_scan_time(ground)?;
        Ok(self.finish_projection(t, n))
    }

    /// Fixed-point slit-time solve. Returns `(t, camera-frame vector, iterations)`.
    pub(crate) fn solve_scan_time(
        &self,
        ground: EcefPoint,
    ) -> Result<(f64, Vector3<f64>, u32), CameraError> {
        let g = ground.to_vector();
        let tol_t = Self::CONVERGENCE_MM / (2.0 * self.half_width_mm);
        let mut t = 0.5;
        for i in 0..Self::MAX_ITERATIONS {
            let (pos, r) = self.eo_at(t);
            let n = r.apply(g - pos);
            if n.z >= 0.0 {
                return Err(CameraError::BehindCamera);
            }
            let alpha = n.x.atan2(-n.z);
            let t_next = self.scan_time(self.focal_mm * alpha);
            if !t_next.is_finite() {
                return Err(CameraError::NoConvergence(i + 1));
            }
            let done = (t_next - t).abs() < tol_t;
            t = t_next;
            if done {
                return Ok((t, n, i + 1));
            }
        }
        Err(CameraError::NoConvergence(Self::MAX_ITERATIONS))
    }

    pub(crate) fn finish_projection(&self, t: f64, n: Vector3<f64>) -> ProjectedPoint {
        let alpha = n.x.atan2(-n.z);
        let x = self.focal_mm * alpha;
        let y = -self.imc_shift(alpha) - self.focal_mm * alpha.cos() * n.y / n.z;
        ProjectedPoint {
            mm: ImagePointMM::new(x, y),
            t,
            alpha,
        }
    }

    /// Ray through a film point: origin at the perspective center of its
    /// exposure instant, direction normalized and pointing at the scene.
    pub fn backproject(&self, p: ImagePointMM) -> (EcefPoint, Vector3<f64>) {
        let t = self.scan_time(p.x);
        let alpha = self.scan_angle(p.x);
        let (pos, r) = self.eo_at(t);
        let v_cam = Vector3::new(
            self.focal_mm * alpha.sin(),
            p.y + self.imc_shift(alpha),
            -self.focal_mm * alpha.cos(),
        );
        let dir = (r.transpose().apply(v_cam)).normalize();
        (EcefPoint::from_vector(pos), dir)
    }

    pub fn mm_to_pixel(&self, p: ImagePointMM) -> PixelPoint {
        PixelPoint::new(
            (p.x + self.half_width_mm) / self.pixel_pitch_mm,
            (self.half_height_mm - p.y) / self.pixel_pitch_mm,
        )
    }

    pub fn pixel_to_mm(&self, p: PixelPoint) -> ImagePointMM {
        ImagePointMM::new(
            p.col * self.pixel_pitch_mm - self.half_width_mm,
            self.half_height_mm - p.row * self.pixel_pitch_mm,
        )
    }

    pub fn width_px(&self) -> usize {
        (2.0 * self.half_width_mm / self.pixel_pitch_mm).round() as usize
    }

    pub fn height_px(&self) -> usize {
        (2.0 * self.half_height_mm / self.pixel_pitch_mm).round() as usize
    }

    /// Whether a film position lies on the format, shrunk by `margin_mm`.
    pub fn contains_mm(&self, p: ImagePointMM, margin_mm: f64) -> bool {
        p.x.abs() <= self.half_width_mm - margin_mm && p.y.abs() <= self.half_height_mm - margin_mm
    }

    pub fn write_json(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).unwrap())
    }

    pub fn read_json(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[cfg(test)]
pub(crate) mod testcams {
    use super::*;

    /// Full-format geometry over central Asia, flying south.
    pub fn anchor() -> AnchorFrame {
        AnchorFrame {
            lon: 96.24,
            lat: 44.59,
            azimuth_deg: 180.0,
        }
    }

    pub fn full_format(fore: bool) -> PanoramicCamera {
        PanoramicCamera::nominal(
            if fore { "fore" } else { "aft" },
            anchor(),
            170_000.0,
            fore,
            609.602,
            372.4,
            27.65,
            0.007,
        )
    }

    /// Same geometry with realistic motion over the sweep.
    pub fn moving(fore: bool) -> PanoramicCamera {
        let mut cam = full_format(fore);
        let fly = cam.anchor.flight_direction();
        // 7.7 km/s for a 0.36 s sweep.
        let v = fly * (7_700.0 * 0.36);
        cam.params.velocity = [v.x, v.y, v.z];
        cam.params.rates = [1e-4, -2e-4, 5e-5];
        cam.params.imc = 7.7 / (170.0 * 3.3);
        cam
    }
}
