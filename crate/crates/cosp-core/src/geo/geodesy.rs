//! Geodetic and Earth-centered Earth-fixed coordinates on the WGS84 ellipsoid.

use serde::{Deserialize, Serialize};

use super::{GeoError, WGS84_A, WGS84_B, WGS84_E2};

/// A point in geodetic coordinates: longitude and latitude in degrees,
/// ellipsoidal height in meters.
///
/// The longitude is normalized to `(-180, 180]` on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    /// Longitude in degrees, in `(-180, 180]`.
    pub lon: f64,
    /// Latitude in degrees, in `[-90, 90]`.
    pub lat: f64,
    /// Height above the ellipsoid in meters.
    pub h: f64,
}

impl GeodeticPoint {
    pub fn new(lon: f64, lat: f64, h: f64) -> Self {
        assert!(
            lat.is_finite() && (-90.0..=90.0).contains(&lat),
            "latitude {lat} out of [-90, 90]"
        );
        assert!(lon.is_finite() && h.is_finite());
        Self {
            lon: normalize_lon(lon),
            lat,
            h,
        }
    }
}

/// A point in Earth-centered Earth-fixed Cartesian coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcefPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: nalgebra::Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Normalize a longitude in degrees to `(-180, 180]`.
pub fn normalize_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l == -180.0 {
        l = 180.0;
    }
    l
}

/// Prime vertical radius of curvature at a given geodetic latitude (radians).
fn prime_vertical_radius(lat_rad: f64) -> f64 {
    WGS84_A / (1.0 - WGS84_E2 * lat_rad.sin().powi(2)).sqrt()
}

/// Metres per degree of longitude and latitude at a given latitude, from the
/// prime-vertical and meridional curvature radii. Good for small offsets
/// around the evaluation point.
pub fn meters_per_degree(lat_deg: f64) -> (f64, f64) {
    let phi = lat_deg.to_radians();
    let w2 = 1.0 - WGS84_E2 * phi.sin().powi(2);
    let n_radius = WGS84_A / w2.sqrt();
    let m_radius = WGS84_A * (1.0 - WGS84_E2) / (w2 * w2.sqrt());
    let deg = std::f64::consts::PI / 180.0;
    (n_radius * phi.cos() * deg, m_radius * deg)
}

/// Convert a geodetic point to ECEF coordinates.
pub fn geodetic_to_ecef(p: GeodeticPoint) -> EcefPoint {
    let lon = p.lon.to_radians();
    let lat = p.lat.to_radians();
    let n = prime_vertical_radius(lat);
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    EcefPoint {
        x: (n + p.h) * cos_lat * cos_lon,
        y: (n + p.h) * cos_lat * sin_lon,
        z: (n * (1.0 - WGS84_E2) + p.h) * sin_lat,
    }
}

/// Convert an ECEF point to geodetic coordinates.
///
/// Uses a Bowring-style closed-form start refined by a few fixed-point
/// iterations; closes the round trip with [`geodetic_to_ecef`] to well below
/// a micrometer for heights in `[-500, 300000]` m.
///
/// Points within 1 km of the Earth center are rejected.
pub fn ecef_to_geodetic(p: EcefPoint) -> Result<GeodeticPoint, GeoError> {
    if p.norm() < 1_000.0 {
        return Err(GeoError::NearEarthCenter(1_000.0));
    }
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    let lon = if rho > 0.0 { p.y.atan2(p.x) } else { 0.0 };

    // Bowring's approximation as the starting latitude.
    let e2p = WGS84_E2 / (1.0 - WGS84_E2); // second eccentricity squared
    let theta = (p.z * WGS84_A).atan2(rho * WGS84_B);
    let (sin_t, cos_t) = theta.sin_cos();
    let mut lat = (p.z + e2p * WGS84_B * sin_t.powi(3)).atan2(rho - WGS84_E2 * WGS84_A * cos_t.powi(3));
    let mut h = 0.0;

    for _ in 0..5 {
        let n = prime_vertical_radius(lat);
        let (sin_lat, cos_lat) = lat.sin_cos();
        h = if cos_lat.abs() > 0.5 {
            rho / cos_lat - n
        } else {
            p.z / sin_lat - n * (1.0 - WGS84_E2)
        };
        let next = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + h)));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }

    Ok(GeodeticPoint {
        lon: normalize_lon(lon.to_degrees()),
        lat: lat.to_degrees().clamp(-90.0, 90.0),
        h,
    })
}
