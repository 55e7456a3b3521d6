//! Nominal camera initialization from coarse footprint knowledge.

use serde::{Deserialize, Serialize};

use crate::pancam::{AnchorFrame, PanoramicCamera};

/// Coarse prior for one image: roughly where its footprint center is,
/// which way the satellite flew, and whether the exposure is the forward
/// or the backward looking camera of the pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageFootprint {
    pub image_id: String,
    pub center_lon_deg: f64,
    pub center_lat_deg: f64,
    /// Flight azimuth, degrees clockwise from north.
    pub azimuth_deg: f64,
    pub fore: bool,
    /// Mean terrain height of the footprint; lifts the nominal orbit so
    /// the two view cones meet on the ground rather than on the ellipsoid.
    #[serde(default)]
    pub ground_height_m: f64,
}

/// Film and scan geometry shared by the cameras of one mission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilmFormat {
    pub focal_mm: f64,
    pub half_width_mm: f64,
    pub half_height_mm: f64,
    pub pixel_pitch_mm: f64,
}

impl Default for FilmFormat {
    /// Calibrated KH-4B geometry at a 7 micrometre scan pitch.
    fn default() -> Self {
        FilmFormat {
            focal_mm: 609.602,
            half_width_mm: 372.4,
            half_height_mm: 27.65,
            pixel_pitch_mm: 0.007,
        }
    }
}

pub const NOMINAL_ALTITUDE_M: f64 = 170_000.0;

/// Builds starting cameras for the adjustment: 170 km above the footprint
/// center, tilted 15 degrees forward or backward along track, and with
/// all time-dependent parameters (velocity, attitude rates, motion
/// compensation) zero.
pub fn initialize_cameras(
    footprints: &[ImageFootprint],
    format: &FilmFormat,
) -> Vec<PanoramicCamera> {
    footprints
        .iter()
        .map(|fp| {
            let anchor = AnchorFrame {
                lon: fp.center_lon_deg,
                lat: fp.center_lat_deg,
                azimuth_deg: fp.azimuth_deg,
            };
            let mut cam = PanoramicCamera::nominal(
                &fp.image_id,
                anchor,
                NOMINAL_ALTITUDE_M,
                fp.fore,
                format.focal_mm,
                format.half_width_mm,
                format.half_height_mm,
                format.pixel_pitch_mm,
            );
            let up = cam.anchor.local_axes().2;
            for i in 0..3 {
                cam.params.position[i] += fp.ground_height_m * up[i];
            }
            cam
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pancam::STEREO_TILT;

    fn footprint(fore: bool) -> ImageFootprint {
        ImageFootprint {
            image_id: if fore { "f" } else { "a" }.into(),
            center_lon_deg: 96.24,
            center_lat_deg: 44.59,
            azimuth_deg: 190.0,
            fore,
            ground_height_m: 1200.0,
        }
    }

    #[test]
    fn nominal_cameras_match_the_documented_priors() {
        let cams = initialize_cameras(
            &[footprint(true), footprint(false)],
            &FilmFormat::default(),
        );
        assert_eq!(cams.len(), 2);
        let fore = &cams[0].params;
        let aft = &cams[1].params;
        assert!((fore.angles[0] + STEREO_TILT).abs() < 1e-12, "fore tilts forward");
        assert!((aft.angles[0] - STEREO_TILT).abs() < 1e-12, "aft tilts backward");
        for p in [fore, aft] {
            assert_eq!(p.angles[2], 0.0);
            assert_eq!(p.velocity, [0.0; 3]);
            assert_eq!(p.rates, [0.0; 3]);
            assert_eq!(p.imc, 0.0);
        }
    }

    #[test]
    fn cameras_sit_at_the_nominal_altitude_above_ground() {
        let cams = initialize_cameras(&[footprint(true)], &FilmFormat::default());
        let p = &cams[0].params.position;
        let geo = crate::geo::ecef_to_geodetic(crate::geo::EcefPoint::new(p[0], p[1], p[2]))
            .unwrap();
        let above_ground = geo.h - 1200.0;
        assert!(
            (above_ground - NOMINAL_ALTITUDE_M).abs() < 200.0,
            "altitude above ground {above_ground}"
        );
    }
}
