//! Synthetic stereo scenes with exact ground truth.
//!
//! A scene bundles an analytic terrain, a procedural ground texture and a
//! convergent fore/aft camera pair. Everything downstream (observations,
//! rendered images, film scans) is derived from it deterministically, so
//! pipeline stages can be validated against closed-form answers instead of
//! real film.

mod film;
mod reference;
mod render;
mod terrain;
mod texture;

pub use film::{make_synthetic_film, split_into_scan_parts, FilmLayout, RigidTruth};
pub use reference::{camera_footprint, render_reference_dem, render_reference_image};
pub use render::{
    intersect_ray_terrain, render_image, render_observations, ObservationOptions,
    ObservationTruth, RenderedObservations,
};
pub use terrain::{AnalyticTerrain, TerrainSpec};
pub use texture::TextureField;

use serde::{Deserialize, Serialize};

use crate::pancam::{AnchorFrame, PanoramicCamera, STEREO_TILT};

/// Scene description. `width_px`/`height_px` control both the rendered image
/// size and the film format: the film extent scales with the pixel count at
/// fixed pixel pitch, so a small scene keeps full-scale viewing geometry
/// while staying cheap to render.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub center_lon_deg: f64,
    pub center_lat_deg: f64,
    /// Flight azimuth, degrees clockwise from north.
    pub azimuth_deg: f64,
    pub altitude_m: f64,
    pub focal_mm: f64,
    pub pixel_pitch_mm: f64,
    pub width_px: u32,
    pub height_px: u32,
    /// Give the cameras realistic motion over the sweep (velocity, attitude
    /// rates and image motion compensation). When false the pair is static.
    pub motion: bool,
    pub terrain: TerrainSpec,
    /// Coarsest texture wavelength on the ground, metres.
    pub texture_wavelength_m: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            center_lon_deg: 96.24,
            center_lat_deg: 44.59,
            azimuth_deg: 190.0,
            altitude_m: 170_000.0,
            focal_mm: 609.602,
            pixel_pitch_mm: 0.007,
            width_px: 2000,
            height_px: 1500,
            motion: true,
            terrain: TerrainSpec::default(),
            texture_wavelength_m: 180.0,
        }
    }
}

impl SceneConfig {
    /// The real film format: 744.8 x 55.3 mm scanned at 7 microns. Rendering
    /// at this size is impractical; use it for sparse-observation tests of
    /// the camera geometry.
    pub fn full_format(mut self) -> Self {
        self.width_px = 106_400;
        self.height_px = 7_900;
        self
    }

    pub fn half_width_mm(&self) -> f64 {
        f64::from(self.width_px) * self.pixel_pitch_mm / 2.0
    }

    pub fn half_height_mm(&self) -> f64 {
        f64::from(self.height_px) * self.pixel_pitch_mm / 2.0
    }
}

/// Sinusoidal film bending: a column-dependent vertical shift of the film
/// content, the distortion the stripe-based correction is built to remove.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BendingSpec {
    pub amplitude_px: f64,
    pub wavelength_px: f64,
    pub phase_rad: f64,
}

impl BendingSpec {
    /// Vertical shift of the content at a film column: the scanned image
    /// shows at row `r` what an undistorted film holds at `r - shift`.
    pub fn row_shift(&self, col: f64) -> f64 {
        self.amplitude_px
            * (2.0 * std::f64::consts::PI * col / self.wavelength_px + self.phase_rad).sin()
    }
}

/// A fully specified scene: terrain, texture and the true camera pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub seed: u64,
    pub terrain: AnalyticTerrain,
    pub texture: TextureField,
    pub fore: PanoramicCamera,
    pub aft: PanoramicCamera,
}

/// Build the convergent pair over the configured terrain. The fore camera
/// looks forward along track, the aft camera backward, both tilted by 15
/// degrees, which yields the KH-4 base-to-height ratio of about 0.54.
pub fn make_stereo_scene(config: &SceneConfig, seed: u64) -> SyntheticScene {
    let anchor = AnchorFrame {
        lon: config.center_lon_deg,
        lat: config.center_lat_deg,
        azimuth_deg: config.azimuth_deg,
    };
    let terrain = AnalyticTerrain::from_spec(
        &config.terrain,
        config.center_lon_deg,
        config.center_lat_deg,
        seed,
    );
    // Aim both cameras at the terrain surface, not the ellipsoid: lift the
    // pair by the surface height at the scene centre so the fore and aft
    // footprints coincide there even for small formats.
    let aim_height = terrain.height_at(config.center_lon_deg, config.center_lat_deg);
    let (_, _, up) = anchor.local_axes();
    let mut cameras = ["fore", "aft"].map(|id| {
        let mut cam = PanoramicCamera::nominal(
            id,
            anchor,
            config.altitude_m,
            id == "fore",
            config.focal_mm,
            config.half_width_mm(),
            config.half_height_mm(),
            config.pixel_pitch_mm,
        );
        let lift = up * aim_height;
        cam.params.position[0] += lift.x;
        cam.params.position[1] += lift.y;
        cam.params.position[2] += lift.z;
        cam
    });
    if config.motion {
        let fly = anchor.flight_direction();
        let cross = fly.cross(&up);
        // 7.7 km/s over a 0.36 s sweep, with small cross-track and vertical
        // components; attitude drifts slowly and the IMC constant matches
        // V / (H * scan rate) for this orbit.
        let velocity = fly * (7_700.0 * 0.36) + cross * 140.0 - up * 80.0;
        for cam in &mut cameras {
            cam.params.velocity = [velocity.x, velocity.y, velocity.z];
            cam.params.rates = [0.9_f64.to_radians(), -0.06_f64.to_radians(), 0.03_f64.to_radians()];
            cam.params.imc = 7.7 / (170.0 * 3.3);
        }
    }
    let [fore, aft] = cameras;
    SyntheticScene {
        terrain,
        texture: TextureField::new(seed ^ 0x7465_7874_7572_6500, config.texture_wavelength_m),
        fore,
        aft,
        config: config.clone(),
        seed,
    }
}

impl SyntheticScene {
    pub fn cameras(&self) -> [&PanoramicCamera; 2] {
        [&self.fore, &self.aft]
    }

    /// Stereo tilt of each camera, radians.
    pub fn tilt(&self) -> f64 {
        STEREO_TILT
    }
}
