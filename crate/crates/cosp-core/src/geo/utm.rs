//! Universal Transverse Mercator projection on WGS84.
//!
//! Forward and inverse mappings use the exponential-of-conformal-latitude
//! series carried to sixth order in the third flattening, good to well below
//! a millimeter anywhere inside a zone.

use serde::{Deserialize, Serialize};

use super::{WGS84_A, WGS84_E2, WGS84_F};

const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtmZone {
    pub zone: u8,
    pub north: bool,
}

/// Series coefficients, computed once per process.
struct Series {
    /// Rectifying radius.
    a_cap: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

fn series() -> &'static Series {
    use std::sync::OnceLock;
    static S: OnceLock<Series> = OnceLock::new();
    S.get_or_init(|| {
        let n = WGS84_F / (2.0 - WGS84_F);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        Series {
            a_cap: WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0),
            alpha: [
                n / 2.0 - 2.0 / 3.0 * n2 + 5.0 / 16.0 * n3 + 41.0 / 180.0 * n4
                    - 127.0 / 288.0 * n5
                    + 7891.0 / 37800.0 * n6,
                13.0 / 48.0 * n2 - 3.0 / 5.0 * n3 + 557.0 / 1440.0 * n4 + 281.0 / 630.0 * n5
                    - 1_983_433.0 / 1_935_360.0 * n6,
                61.0 / 240.0 * n3 - 103.0 / 140.0 * n4 + 15061.0 / 26880.0 * n5
                    + 167_603.0 / 181_440.0 * n6,
                49561.0 / 161_280.0 * n4 - 179.0 / 168.0 * n5 + 6_601_661.0 / 7_257_600.0 * n6,
                34729.0 / 80640.0 * n5 - 3_418_889.0 / 1_995_840.0 * n6,
                212_378_941.0 / 319_334_400.0 * n6,
            ],
            beta: [
                n / 2.0 - 2.0 / 3.0 * n2 + 37.0 / 96.0 * n3 - n4 / 360.0 - 81.0 / 512.0 * n5
                    + 96199.0 / 604_800.0 * n6,
                n2 / 48.0 + n3 / 15.0 - 437.0 / 1440.0 * n4 + 46.0 / 105.0 * n5
                    - 1_118_711.0 / 3_870_720.0 * n6,
                17.0 / 480.0 * n3 - 37.0 / 840.0 * n4 - 209.0 / 4480.0 * n5
                    + 5569.0 / 90720.0 * n6,
                4397.0 / 161_280.0 * n4 - 11.0 / 504.0 * n5 - 830_251.0 / 7_257_600.0 * n6,
                4583.0 / 161_280.0 * n5 - 108_847.0 / 3_991_680.0 * n6,
                20_648_693.0 / 638_668_800.0 * n6,
            ],
        }
    })
}

impl UtmZone {
    /// The zone containing a geodetic position (degrees). The polar zone
    /// exceptions of the civilian grid are not applied.
    pub fn for_point(lon: f64, lat: f64) -> Self {
        let z = (((lon + 180.0) / 6.0).floor() as i32 + 1).clamp(1, 60) as u8;
        Self {
            zone: z,
            north: lat >= 0.0,
        }
    }

    pub fn epsg(&self) -> u16 {
        if self.north {
            32600 + self.zone as u16
        } else {
            32700 + self.zone as u16
        }
    }

    pub fn crs(&self) -> String {
        format!("EPSG:{}", self.epsg())
    }

    pub fn from_crs(crs: &str) -> Option<Self> {
        let code: u16 = crs.strip_prefix("EPSG:")?.parse().ok()?;
        match code {
            32601..=32660 => Some(Self { zone: (code - 32600) as u8, north: true }),
            32701..=32760 => Some(Self { zone: (code - 32700) as u8, north: false }),
            _ => None,
        }
    }

    pub fn central_meridian(&self) -> f64 {
        -183.0 + 6.0 * self.zone as f64
    }

    /// Geodetic (degrees) to easting/northing in meters.
    pub fn forward(&self, lon: f64, lat: f64) -> (f64, f64) {
        let s = series();
        let e = WGS84_E2.sqrt();
        let phi = lat.to_radians();
        let lam = (lon - self.central_meridian()).to_radians();

        let t = (phi.tan().asinh() - e * (e * phi.sin()).atanh()).sinh();
        let xi_p = t.atan2(lam.cos());
        let eta_p = (lam.sin() / (t * t + lam.cos() * lam.cos()).sqrt()).asinh();

        let mut xi = xi_p;
        let mut eta = eta_p;
        for (j, a) in s.alpha.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
            eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
        }
        let easting = FALSE_EASTING + K0 * s.a_cap * eta;
        let mut northing = K0 * s.a_cap * xi;
        if !self.north {
            northing += FALSE_NORTHING_SOUTH;
        }
        (easting, northing)
    }

    /// Easting/northing in meters to geodetic degrees.
    pub fn inverse(&self, easting: f64, northing: f64) -> (f64, f64) {
        let s = series();
        let e = WGS84_E2.sqrt();
        let n = if self.north {
            northing
        } else {
            northing - FALSE_NORTHING_SOUTH
        };
        let xi = n / (K0 * s.a_cap);
        let eta = (easting - FALSE_EASTING) / (K0 * s.a_cap);

        let mut xi_p = xi;
        let mut eta_p = eta;
        for (j, b) in s.beta.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            xi_p -= b * (k * xi).sin() * (k * eta).cosh();
            eta_p -= b * (k * xi).cos() * (k * eta).sinh();
        }

        let t = xi_p.sin() / (eta_p.sinh().powi(2) + xi_p.cos().powi(2)).sqrt();
        let lam = eta_p.sinh().atan2(xi_p.cos());

        // Invert the conformal-latitude map by Newton iteration.
        let mut phi = t.atan();
        for _ in 0..6 {
            let psi = phi.tan().asinh() - e * (e * phi.sin()).atanh();
            let f = psi.sinh() - t;
            let dpsi = 1.0 / phi.cos() - WGS84_E2 * phi.cos() / (1.0 - WGS84_E2 * phi.sin().powi(2));
            let step = f / (psi.cosh() * dpsi);
            phi -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        (self.central_meridian() + lam.to_degrees(), phi.to_degrees())
    }
}
