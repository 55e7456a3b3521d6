//! Analytic terrain: a tilted plane plus a sum of Gaussian bumps.
//!
//! Heights are defined on a local east-north plane anchored at a geodetic
//! origin, so the same surface can be evaluated exactly from either pixel
//! rays or map coordinates. Everything is closed-form, which gives the rest
//! of the pipeline an exact reference to verify against.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{meters_per_degree, GeodeticPoint};

/// Parameters the terrain is built from. Bump placement is drawn from the
/// scene seed, everything else is taken literally.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainSpec {
    pub base_height_m: f64,
    /// Plane slope, metres of height per metre east.
    pub slope_east: f64,
    /// Plane slope, metres of height per metre north.
    pub slope_north: f64,
    pub bump_count: u32,
    /// Bump amplitudes are drawn from `[-bump_amplitude_m, bump_amplitude_m]`.
    pub bump_amplitude_m: f64,
    pub bump_sigma_min_m: f64,
    pub bump_sigma_max_m: f64,
    /// Bump centres are placed within this half-extent east of the origin.
    pub extent_east_m: f64,
    /// Bump centres are placed within this half-extent north of the origin.
    pub extent_north_m: f64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        TerrainSpec {
            base_height_m: 1200.0,
            slope_east: 0.03,
            slope_north: -0.02,
            bump_count: 12,
            bump_amplitude_m: 60.0,
            bump_sigma_min_m: 260.0,
            bump_sigma_max_m: 900.0,
            extent_east_m: 2600.0,
            extent_north_m: 2100.0,
        }
    }
}

impl TerrainSpec {
    /// A flat plane; useful when a test needs zero relief.
    pub fn plane(height_m: f64) -> Self {
        TerrainSpec {
            base_height_m: height_m,
            slope_east: 0.0,
            slope_north: 0.0,
            bump_count: 0,
            ..TerrainSpec::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Bump {
    east: f64,
    north: f64,
    sigma: f64,
    amplitude: f64,
}

/// Closed-form terrain over a local east-north frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticTerrain {
    origin_lon: f64,
    origin_lat: f64,
    m_per_deg_lon: f64,
    m_per_deg_lat: f64,
    base: f64,
    slope_east: f64,
    slope_north: f64,
    bumps: Vec<Bump>,
}

impl AnalyticTerrain {
    /// Build the terrain for a scene centred at `(lon, lat)` degrees.
    pub fn from_spec(spec: &TerrainSpec, lon: f64, lat: f64, seed: u64) -> Self {
        let (m_per_deg_lon, m_per_deg_lat) = meters_per_degree(lat);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7272_6169_6e00); // "terrain"
        let bumps = (0..spec.bump_count)
            .map(|_| Bump {
                east: rng.random_range(-spec.extent_east_m..spec.extent_east_m),
                north: rng.random_range(-spec.extent_north_m..spec.extent_north_m),
                sigma: rng.random_range(spec.bump_sigma_min_m..spec.bump_sigma_max_m),
                amplitude: rng.random_range(-spec.bump_amplitude_m..spec.bump_amplitude_m),
            })
            .collect();
        AnalyticTerrain {
            origin_lon: lon,
            origin_lat: lat,
            m_per_deg_lon,
            m_per_deg_lat,
            base: spec.base_height_m,
            slope_east: spec.slope_east,
            slope_north: spec.slope_north,
            bumps,
        }
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_lon, self.origin_lat)
    }

    /// Geodetic degrees to local east-north metres.
    pub fn local_en(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) * self.m_per_deg_lon,
            (lat - self.origin_lat) * self.m_per_deg_lat,
        )
    }

    /// Local east-north metres back to geodetic degrees.
    pub fn lonlat(&self, east: f64, north: f64) -> (f64, f64) {
        (
            self.origin_lon + east / self.m_per_deg_lon,
            self.origin_lat + north / self.m_per_deg_lat,
        )
    }

    /// Terrain height at local coordinates.
    pub fn height_en(&self, east: f64, north: f64) -> f64 {
        let mut h = self.base + self.slope_east * east + self.slope_north * north;
        for b in &self.bumps {
            let de = east - b.east;
            let dn = north - b.north;
            h += b.amplitude * (-(de * de + dn * dn) / (2.0 * b.sigma * b.sigma)).exp();
        }
        h
    }

    /// Analytic gradient `(dh/deast, dh/dnorth)` at local coordinates.
    pub fn gradient_en(&self, east: f64, north: f64) -> (f64, f64) {
        let mut ge = self.slope_east;
        let mut gn = self.slope_north;
        for b in &self.bumps {
            let de = east - b.east;
            let dn = north - b.north;
            let s2 = b.sigma * b.sigma;
            let g = b.amplitude * (-(de * de + dn * dn) / (2.0 * s2)).exp() / s2;
            ge -= g * de;
            gn -= g * dn;
        }
        (ge, gn)
    }

    /// Terrain height at geodetic degrees.
    pub fn height_at(&self, lon: f64, lat: f64) -> f64 {
        let (e, n) = self.local_en(lon, lat);
        self.height_en(e, n)
    }

    /// Surface slope in degrees at geodetic coordinates.
    pub fn slope_deg(&self, lon: f64, lat: f64) -> f64 {
        let (e, n) = self.local_en(lon, lat);
        let (ge, gn) = self.gradient_en(e, n);
        ge.hypot(gn).atan().to_degrees()
    }

    /// The surface point at geodetic `(lon, lat)`.
    pub fn surface_point(&self, lon: f64, lat: f64) -> GeodeticPoint {
        GeodeticPoint::new(lon, lat, self.height_at(lon, lat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_heights_are_exact() {
        let spec = TerrainSpec {
            base_height_m: 500.0,
            slope_east: 0.01,
            slope_north: -0.005,
            bump_count: 0,
            ..TerrainSpec::default()
        };
        let t = AnalyticTerrain::from_spec(&spec, 96.24, 44.59, 1);
        assert_eq!(t.height_en(0.0, 0.0), 500.0);
        assert!((t.height_en(1000.0, 0.0) - 510.0).abs() < 1e-12);
        assert!((t.height_en(0.0, 2000.0) - 490.0).abs() < 1e-12);
    }

    #[test]
    fn local_frame_round_trips_and_scales() {
        let t = AnalyticTerrain::from_spec(&TerrainSpec::default(), 96.24, 44.59, 7);
        let (e, n) = t.local_en(96.25, 44.60);
        let (lon, lat) = t.lonlat(e, n);
        assert!((lon - 96.25).abs() < 1e-12);
        assert!((lat - 44.60).abs() < 1e-12);
        // At 44.59 deg latitude a degree of longitude spans about 79.5 km
        // and a degree of latitude about 111.1 km.
        assert!((t.m_per_deg_lon - 79_500.0).abs() < 500.0, "{}", t.m_per_deg_lon);
        assert!((t.m_per_deg_lat - 111_130.0).abs() < 100.0, "{}", t.m_per_deg_lat);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = AnalyticTerrain::from_spec(&TerrainSpec::default(), 96.24, 44.59, 3);
        let d = 1e-3;
        for &(e, n) in &[(0.0, 0.0), (750.0, -420.0), (-1800.0, 1500.0)] {
            let (ge, gn) = t.gradient_en(e, n);
            let fe = (t.height_en(e + d, n) - t.height_en(e - d, n)) / (2.0 * d);
            let fn_ = (t.height_en(e, n + d) - t.height_en(e, n - d)) / (2.0 * d);
            assert!((ge - fe).abs() < 1e-6, "east {ge} vs {fe}");
            assert!((gn - fn_).abs() < 1e-6, "north {gn} vs {fn_}");
        }
    }

    #[test]
    fn same_seed_same_terrain() {
        let a = AnalyticTerrain::from_spec(&TerrainSpec::default(), 96.24, 44.59, 42);
        let b = AnalyticTerrain::from_spec(&TerrainSpec::default(), 96.24, 44.59, 42);
        let c = AnalyticTerrain::from_spec(&TerrainSpec::default(), 96.24, 44.59, 43);
        assert_eq!(a.height_en(123.0, -456.0), b.height_en(123.0, -456.0));
        assert_ne!(a.height_en(123.0, -456.0), c.height_en(123.0, -456.0));
    }

    #[test]
    fn default_slopes_stay_moderate() {
        // DEM accuracy checks exclude steep ground; the default scene should
        // not produce any.
        let t = AnalyticTerrain::from_spec(&TerrainSpec::default(), 96.24, 44.59, 11);
        let mut max_slope: f64 = 0.0;
        for i in -40..=40 {
            for j in -40..=40 {
                let (lon, lat) = t.lonlat(i as f64 * 100.0, j as f64 * 100.0);
                max_slope = max_slope.max(t.slope_deg(lon, lat));
            }
        }
        assert!(max_slope < 30.0, "max slope {max_slope}");
        assert!(max_slope > 1.0, "terrain should not be flat, {max_slope}");
    }
}
