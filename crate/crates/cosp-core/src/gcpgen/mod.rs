//! Ground-control generation against a georeferenced reference basemap.
//!
//! Feature matching itself runs out of process: this module plans matching
//! tiles between the panoramic image and the reference imagery, writes the
//! tile manifest the matcher consumes, reads the match files it produces,
//! refines the image footprint from coarse matches and finally attaches
//! reference DEM heights to turn matches into ground control points.
//!
//! The flow is coarse to fine. A first pass tiles the image at a strongly
//! reduced scale with reference windows padded by the footprint uncertainty,
//! which can reach 100 km for orbit-derived estimates. The matches from that
//! pass pin the footprint down, and a second pass plans native-resolution
//! tiles over much smaller search areas.
//!
//! A bundled mock matcher (phase correlation plus normalized cross
//! correlation) stands in for the external one so end-to-end tests run
//! hermetically.

mod assemble;
mod matches;
mod mock;
mod refine;
mod tiles;

pub use assemble::{assemble_gcps, GcpAssembly};
pub use matches::{GroundMatch, MatchSet, MAX_MATCHES_PER_TILE, MIN_CONFIDENCE};
pub use mock::{mock_match_tiles, MockMatchOptions};
pub use refine::{refine_footprint, MIN_REFINE_MATCHES};
pub use tiles::{plan_tiles, TileManifest, TileMode, TileSpec, COARSE_WINDOW, MATCHER_DIMS};

use serde::{Deserialize, Serialize};

use crate::geo::{meters_per_degree, GeoError, GeodeticPoint};
use crate::imgproc::ImageError;
use crate::pancam::PixelPoint;

#[derive(Debug, thiserror::Error)]
pub enum GcpError {
    #[error("footprint corners do not form a simple quadrilateral")]
    MalformedFootprint,
    #[error("footprint uncertainty must be positive and finite, got {0} km")]
    BadUncertainty(f64),
    #[error("footprint with {pad_km} km search pad lies outside the reference raster")]
    FootprintOutsideReference { pad_km: f64 },
    #[error("reference raster must be geographic (EPSG:4326), got {0}")]
    ReferenceNotGeographic(String),
    #[error("{found} usable matches, at least {needed} required")]
    InsufficientMatches { needed: usize, found: usize },
    #[error("fit residual 95th percentile {residual_km:.3} km exceeds the prior uncertainty {prior_km:.3} km")]
    ResidualTooLarge { residual_km: f64, prior_km: f64 },
    #[error("match references undeclared tile {0}")]
    UnknownTile(String),
    #[error("match at ({col:.1}, {row:.1}) lies outside its tile {tile_id}")]
    MatchOutsideTile {
        tile_id: String,
        col: f64,
        row: f64,
    },
    #[error("bad match record: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Where the image sits on the ground, with how far off that guess may be.
///
/// The corners are the ground positions of the four image corners in scan
/// order `(0,0), (W,0), (W,H), (0,H)`. Orbit-derived estimates carry
/// uncertainties of several kilometres up to about 100 km; refinement from
/// coarse matches shrinks the radius to the fit residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FootprintEstimate {
    pub corners: [GeodeticPoint; 4],
    /// Search radius covering the corner position error, kilometres.
    pub uncertainty_km: f64,
}

impl FootprintEstimate {
    pub fn new(corners: [GeodeticPoint; 4], uncertainty_km: f64) -> Result<Self, GcpError> {
        let fp = FootprintEstimate {
            corners,
            uncertainty_km,
        };
        fp.validate()?;
        Ok(fp)
    }

    /// Check the type invariants: positive uncertainty and corners forming a
    /// simple (non-self-intersecting, non-degenerate) quadrilateral.
    pub fn validate(&self) -> Result<(), GcpError> {
        if !(self.uncertainty_km > 0.0) || !self.uncertainty_km.is_finite() {
            return Err(GcpError::BadUncertainty(self.uncertainty_km));
        }
        let en = self.corners_en();
        // Shoelace area; zero means collinear or coincident corners.
        let mut area = 0.0;
        for i in 0..4 {
            let (x0, y0) = en[i];
            let (x1, y1) = en[(i + 1) % 4];
            area += x0 * y1 - x1 * y0;
        }
        if area.abs() < 1.0 {
            return Err(GcpError::MalformedFootprint);
        }
        // A simple quadrilateral has no crossing between opposite edges.
        if segments_cross(en[0], en[1], en[2], en[3])
            || segments_cross(en[1], en[2], en[3], en[0])
        {
            return Err(GcpError::MalformedFootprint);
        }
        Ok(())
    }

    /// Mean of the corner coordinates, degrees.
    pub fn center(&self) -> (f64, f64) {
        let lon = self.corners.iter().map(|c| c.lon).sum::<f64>() / 4.0;
        let lat = self.corners.iter().map(|c| c.lat).sum::<f64>() / 4.0;
        (lon, lat)
    }

    /// Corners in a local east-north frame (metres) about the center.
    pub fn corners_en(&self) -> [(f64, f64); 4] {
        let (clon, clat) = self.center();
        let (m_lon, m_lat) = meters_per_degree(clat);
        self.corners
            .map(|c| ((c.lon - clon) * m_lon, (c.lat - clat) * m_lat))
    }

    /// Map an image pixel to the ground by bilinear interpolation of the
    /// corner coordinates. Exact when the true image-to-ground mapping is
    /// affine; a controlled approximation otherwise.
    pub fn pixel_to_lonlat(&self, dims: (u32, u32), p: PixelPoint) -> (f64, f64) {
        let u = p.col / f64::from(dims.0);
        let v = p.row / f64::from(dims.1);
        let lerp = |f: fn(&GeodeticPoint) -> f64| {
            let c = &self.corners;
            (1.0 - u) * (1.0 - v) * f(&c[0])
                + u * (1.0 - v) * f(&c[1])
                + u * v * f(&c[2])
                + (1.0 - u) * v * f(&c[3])
        };
        (lerp(|c| c.lon), lerp(|c| c.lat))
    }

    /// Invert [`pixel_to_lonlat`](Self::pixel_to_lonlat) by Newton iteration
    /// on the bilinear map. `None` when the iteration leaves the image area
    /// by more than one image extent (the point is not under this footprint).
    pub fn lonlat_to_pixel(&self, dims: (u32, u32), lon: f64, lat: f64) -> Option<PixelPoint> {
        let c = &self.corners;
        // Work in the local metric frame for conditioning.
        let (clon, clat) = self.center();
        let (m_lon, m_lat) = meters_per_degree(clat);
        let en = |lo: f64, la: f64| ((lo - clon) * m_lon, (la - clat) * m_lat);
        let p = en(lon, lat);
        let q: Vec<(f64, f64)> = c.iter().map(|g| en(g.lon, g.lat)).collect();

        let value = |u: f64, v: f64| -> (f64, f64) {
            (
                (1.0 - u) * (1.0 - v) * q[0].0
                    + u * (1.0 - v) * q[1].0
                    + u * v * q[2].0
                    + (1.0 - u) * v * q[3].0,
                (1.0 - u) * (1.0 - v) * q[0].1
                    + u * (1.0 - v) * q[1].1
                    + u * v * q[2].1
                    + (1.0 - u) * v * q[3].1,
            )
        };
        // Start from the affine part spanned by the first three corners.
        let (ex, ey) = (q[1].0 - q[0].0, q[1].1 - q[0].1);
        let (fx, fy) = (q[3].0 - q[0].0, q[3].1 - q[0].1);
        let det0 = ex * fy - ey * fx;
        if det0.abs() < 1e-9 {
            return None;
        }
        let (dx, dy) = (p.0 - q[0].0, p.1 - q[0].1);
        let mut u = (dx * fy - dy * fx) / det0;
        let mut v = (ex * dy - ey * dx) / det0;
        for _ in 0..25 {
            let (x, y) = value(u, v);
            let rx = p.0 - x;
            let ry = p.1 - y;
            if rx.abs() < 1e-9 && ry.abs() < 1e-9 {
                break;
            }
            let ju = (
                -(1.0 - v) * q[0].0 + (1.0 - v) * q[1].0 + v * q[2].0 - v * q[3].0,
                -(1.0 - v) * q[0].1 + (1.0 - v) * q[1].1 + v * q[2].1 - v * q[3].1,
            );
            let jv = (
                -(1.0 - u) * q[0].0 - u * q[1].0 + u * q[2].0 + (1.0 - u) * q[3].0,
                -(1.0 - u) * q[0].1 - u * q[1].1 + u * q[2].1 + (1.0 - u) * q[3].1,
            );
            let det = ju.0 * jv.1 - ju.1 * jv.0;
            if det.abs() < 1e-12 {
                return None;
            }
            u += (rx * jv.1 - ry * jv.0) / det;
            v += (ju.0 * ry - ju.1 * rx) / det;
            if !(-1.0..=2.0).contains(&u) || !(-1.0..=2.0).contains(&v) {
                return None;
            }
        }
        Some(PixelPoint::new(
            u * f64::from(dims.0),
            v * f64::from(dims.1),
        ))
    }

    /// Approximate ground size of one image pixel, metres, from the mean
    /// corner edge lengths.
    pub fn mean_gsd_m(&self, dims: (u32, u32)) -> f64 {
        let en = self.corners_en();
        let len = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
        let gx = 0.5 * (len(en[0], en[1]) + len(en[3], en[2])) / f64::from(dims.0);
        let gy = 0.5 * (len(en[0], en[3]) + len(en[1], en[2])) / f64::from(dims.1);
        0.5 * (gx + gy)
    }
}

/// Proper crossing test between segments `ab` and `cd` (shared endpoints do
/// not count).
fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let side = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    };
    let d1 = side(a, b, c);
    let d2 = side(a, b, d);
    let d3 = side(c, d, a);
    let d4 = side(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(corners: [(f64, f64); 4]) -> [GeodeticPoint; 4] {
        corners.map(|(lon, lat)| GeodeticPoint::new(lon, lat, 1000.0))
    }

    fn simple() -> FootprintEstimate {
        FootprintEstimate::new(
            quad([(96.0, 44.0), (96.5, 44.05), (96.45, 44.4), (95.95, 44.35)]),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_footprints() {
        // Bowtie: corners 2 and 3 swapped makes opposite edges cross.
        let bow = FootprintEstimate::new(
            quad([(96.0, 44.0), (96.5, 44.05), (95.95, 44.35), (96.45, 44.4)]),
            10.0,
        );
        assert!(matches!(bow, Err(GcpError::MalformedFootprint)));

        let line = FootprintEstimate::new(
            quad([(96.0, 44.0), (96.1, 44.0), (96.2, 44.0), (96.3, 44.0)]),
            10.0,
        );
        assert!(matches!(line, Err(GcpError::MalformedFootprint)));

        let bad_r = FootprintEstimate::new(
            quad([(96.0, 44.0), (96.5, 44.05), (96.45, 44.4), (95.95, 44.35)]),
            0.0,
        );
        assert!(matches!(bad_r, Err(GcpError::BadUncertainty(_))));
    }

    #[test]
    fn corner_interpolation_hits_the_corners_and_center() {
        let fp = simple();
        let dims = (1000, 800);
        let checks = [
            ((0.0, 0.0), 0),
            ((1000.0, 0.0), 1),
            ((1000.0, 800.0), 2),
            ((0.0, 800.0), 3),
        ];
        for ((col, row), i) in checks {
            let (lon, lat) = fp.pixel_to_lonlat(dims, PixelPoint::new(col, row));
            assert!((lon - fp.corners[i].lon).abs() < 1e-12);
            assert!((lat - fp.corners[i].lat).abs() < 1e-12);
        }
        let (lon, lat) = fp.pixel_to_lonlat(dims, PixelPoint::new(500.0, 400.0));
        let (clon, clat) = fp.center();
        assert!((lon - clon).abs() < 1e-12 && (lat - clat).abs() < 1e-12);
    }

    #[test]
    fn inverse_mapping_round_trips() {
        let fp = simple();
        let dims = (1000, 800);
        for &(col, row) in &[(0.0, 0.0), (333.3, 95.2), (990.0, 780.0), (120.7, 640.0)] {
            let (lon, lat) = fp.pixel_to_lonlat(dims, PixelPoint::new(col, row));
            let p = fp.lonlat_to_pixel(dims, lon, lat).unwrap();
            assert!((p.col - col).abs() < 1e-6, "col {} vs {col}", p.col);
            assert!((p.row - row).abs() < 1e-6, "row {} vs {row}", p.row);
        }
        // A point far outside the footprint is refused.
        assert!(fp.lonlat_to_pixel(dims, 99.0, 47.0).is_none());
    }

    #[test]
    fn mean_gsd_reflects_the_ground_extent() {
        // 0.5 deg of longitude at ~44.2 deg latitude is about 39.9 km; over
        // 1000 px that is about 39.9 m per pixel, averaged with the ~39 km
        // cross extent over 800 px.
        let fp = simple();
        let g = fp.mean_gsd_m((1000, 800));
        assert!((30.0..60.0).contains(&g), "gsd {g}");
    }
}
