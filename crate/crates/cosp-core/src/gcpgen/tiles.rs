//! Matching-tile layout between the panoramic image and reference imagery.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FootprintEstimate, GcpError};
use crate::geo::{meters_per_degree, RasterGrid};
use crate::pancam::PixelPoint;

/// Image size the external matcher expects per tile.
pub const MATCHER_DIMS: (u32, u32) = (1920, 1440);
/// Native window size of a coarse tile; downscaled to [`MATCHER_DIMS`].
pub const COARSE_WINDOW: (u32, u32) = (10_600, 8_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileMode {
    /// Strongly downscaled windows searched over the full footprint
    /// uncertainty; locates the image.
    Coarse,
    /// Native-resolution windows over the refined footprint; produces the
    /// measurement-grade matches.
    Fine,
}

impl std::fmt::Display for TileMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TileMode::Coarse => "coarse",
            TileMode::Fine => "fine",
        })
    }
}

/// One matching tile: a window of the panoramic image and the geographic
/// area of reference imagery to search it in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tile_id: String,
    /// Native-resolution pixel window `(col, row, width, height)`.
    pub corona_window: (u32, u32, u32, u32),
    /// Reference search area `(lon_min, lat_min, lon_max, lat_max)`, degrees.
    pub reference_window: (f64, f64, f64, f64),
    /// Panoramic pixels covering the ground of one reference pixel.
    pub scale: f64,
}

impl TileSpec {
    pub fn contains(&self, p: PixelPoint) -> bool {
        let (c0, r0, w, h) = self.corona_window;
        p.col >= f64::from(c0)
            && p.col <= f64::from(c0 + w)
            && p.row >= f64::from(r0)
            && p.row <= f64::from(r0 + h)
    }
}

/// The file handed to the external matcher: every tile plus the resampling
/// rule for bringing windows to matcher scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileManifest {
    pub mode: TileMode,
    /// Tile size at matcher input, `(width, height)`.
    pub matcher_dims: (u32, u32),
    /// Downscale filter for native windows; always area averaging.
    pub resample: String,
    pub tiles: Vec<TileSpec>,
}

impl TileManifest {
    pub fn new(mode: TileMode, tiles: Vec<TileSpec>) -> Self {
        TileManifest {
            mode,
            matcher_dims: MATCHER_DIMS,
            resample: "area".into(),
            tiles,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), GcpError> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn read(path: &Path) -> Result<Self, GcpError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Evenly spread `ceil(extent / window)` start offsets so the windows cover
/// `[0, extent]` without gaps; the ceiling slack becomes overlap.
fn spread_starts(extent: u32, window: u32) -> Vec<u32> {
    let n = extent.div_ceil(window).max(1);
    if n == 1 {
        return vec![0];
    }
    let step = f64::from(extent - window) / f64::from(n - 1);
    (0..n).map(|i| (f64::from(i) * step).round() as u32).collect()
}

/// Lay out matching tiles over the image.
///
/// Coarse mode cuts [`COARSE_WINDOW`] pieces (clamped to the image) for
/// matching at a strongly reduced scale; fine mode cuts native
/// [`MATCHER_DIMS`] pieces. Either way the reference search window of a tile
/// is its footprint-mapped ground area padded by the footprint uncertainty
/// on every side, clamped to the reference raster. The reference raster must
/// be geographic (EPSG:4326).
pub fn plan_tiles(
    footprint: &FootprintEstimate,
    corona_dims: (u32, u32),
    reference: &RasterGrid,
    mode: TileMode,
) -> Result<Vec<TileSpec>, GcpError> {
    footprint.validate()?;
    if reference.crs != "EPSG:4326" {
        return Err(GcpError::ReferenceNotGeographic(reference.crs.clone()));
    }
    let (img_w, img_h) = corona_dims;
    assert!(img_w > 0 && img_h > 0, "empty image");
    let nominal = match mode {
        TileMode::Coarse => COARSE_WINDOW,
        TileMode::Fine => MATCHER_DIMS,
    };
    let win_w = nominal.0.min(img_w);
    let win_h = nominal.1.min(img_h);

    let (_, clat) = footprint.center();
    let (m_lon, m_lat) = meters_per_degree(clat);
    let pad_km = footprint.uncertainty_km;
    let pad_lon = pad_km * 1000.0 / m_lon;
    let pad_lat = pad_km * 1000.0 / m_lat;
    let (ref_x0, ref_y0, ref_x1, ref_y1) = reference.bounds();

    // Native ground size of one reference cell, for the relative scale.
    let ref_gsd = 0.5
        * (reference.geotransform[1].hypot(reference.geotransform[4]) * m_lon
            + reference.geotransform[2].hypot(reference.geotransform[5]) * m_lat);
    let corona_gsd = footprint.mean_gsd_m(corona_dims);
    let scale = ref_gsd / corona_gsd;

    let mut tiles = Vec::new();
    for (ri, &row0) in spread_starts(img_h, win_h).iter().enumerate() {
        for (ci, &col0) in spread_starts(img_w, win_w).iter().enumerate() {
            let mut lon_min = f64::INFINITY;
            let mut lon_max = f64::NEG_INFINITY;
            let mut lat_min = f64::INFINITY;
            let mut lat_max = f64::NEG_INFINITY;
            for (dc, dr) in [(0, 0), (win_w, 0), (win_w, win_h), (0, win_h)] {
                let p = PixelPoint::new(f64::from(col0 + dc), f64::from(row0 + dr));
                let (lon, lat) = footprint.pixel_to_lonlat(corona_dims, p);
                lon_min = lon_min.min(lon);
                lon_max = lon_max.max(lon);
                lat_min = lat_min.min(lat);
                lat_max = lat_max.max(lat);
            }
            lon_min -= pad_lon;
            lon_max += pad_lon;
            lat_min -= pad_lat;
            lat_max += pad_lat;
            if lon_min >= ref_x1 || lon_max <= ref_x0 || lat_min >= ref_y1 || lat_max <= ref_y0 {
                return Err(GcpError::FootprintOutsideReference { pad_km });
            }
            tiles.push(TileSpec {
                tile_id: format!("{mode}-{ci:02}-{ri:02}"),
                corona_window: (col0, row0, win_w, win_h),
                reference_window: (
                    lon_min.max(ref_x0),
                    lat_min.max(ref_y0),
                    lon_max.min(ref_x1),
                    lat_max.min(ref_y1),
                ),
                scale,
            });
        }
    }
    Ok(tiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeodeticPoint;

    /// A footprint whose image-to-ground map is an exact similarity:
    /// `gsd_m` metres per pixel, rows running south.
    fn footprint_for(dims: (u32, u32), gsd_m: f64, uncertainty_km: f64) -> FootprintEstimate {
        let (clon, clat) = (96.2, 44.6);
        let (m_lon, m_lat) = meters_per_degree(clat);
        let en_corner = |c: f64, r: f64| {
            let e = (c - f64::from(dims.0) / 2.0) * gsd_m;
            let n = (f64::from(dims.1) / 2.0 - r) * gsd_m;
            GeodeticPoint::new(clon + e / m_lon, clat + n / m_lat, 1200.0)
        };
        FootprintEstimate::new(
            [
                en_corner(0.0, 0.0),
                en_corner(f64::from(dims.0), 0.0),
                en_corner(f64::from(dims.0), f64::from(dims.1)),
                en_corner(0.0, f64::from(dims.1)),
            ],
            uncertainty_km,
        )
        .unwrap()
    }

    fn wide_reference(cell_deg: f64) -> RasterGrid {
        // A broad geographic raster around the test footprints.
        let w = (8.0 / cell_deg).ceil() as usize;
        let h = (6.0 / cell_deg).ceil() as usize;
        RasterGrid::north_up(w, h, 92.0, 48.0, cell_deg, cell_deg, -9999.0, "EPSG:4326").unwrap()
    }

    #[test]
    fn fine_tiling_of_a_full_film_strip() {
        let dims = (106_000, 7_900);
        let fp = footprint_for(dims, 2.0, 3.0);
        let reference = wide_reference(0.01);
        let tiles = plan_tiles(&fp, dims, &reference, TileMode::Fine).unwrap();
        // ceil(106000 / 1920) = 56 per row, ceil(7900 / 1440) = 6 rows.
        assert_eq!(tiles.len(), 56 * 6);
        for t in &tiles {
            assert_eq!((t.corona_window.2, t.corona_window.3), (1920, 1440));
        }
        // Gap-free cover of the full image in both axes.
        let mut col_starts: Vec<u32> = tiles.iter().map(|t| t.corona_window.0).collect();
        col_starts.sort_unstable();
        col_starts.dedup();
        assert_eq!(col_starts.len(), 56);
        assert_eq!(*col_starts.first().unwrap(), 0);
        assert_eq!(*col_starts.last().unwrap(), 106_000 - 1920);
        for w in col_starts.windows(2) {
            assert!(w[1] - w[0] <= 1920, "gap between {} and {}", w[0], w[1]);
        }
        let mut row_starts: Vec<u32> = tiles.iter().map(|t| t.corona_window.1).collect();
        row_starts.sort_unstable();
        row_starts.dedup();
        assert_eq!(row_starts.len(), 6);
        assert_eq!(*row_starts.last().unwrap(), 7_900 - 1440);
    }

    #[test]
    fn coarse_tiling_cuts_ten_windows_per_row() {
        let dims = (106_000, 7_900);
        let fp = footprint_for(dims, 2.0, 50.0);
        let reference = wide_reference(0.01);
        let tiles = plan_tiles(&fp, dims, &reference, TileMode::Coarse).unwrap();
        // ceil(106000 / 10600) = 10 windows per row; the window height clamps
        // to the 7900 px image, one band.
        assert_eq!(tiles.len(), 10);
        for t in &tiles {
            assert_eq!((t.corona_window.2, t.corona_window.3), (10_600, 7_900));
            assert!(t.tile_id.starts_with("coarse-"));
        }
    }

    #[test]
    fn reference_windows_pad_by_the_uncertainty_radius() {
        let dims = (10_000, 7_900);
        let uncertainty_km = 100.0;
        let fp = footprint_for(dims, 2.0, uncertainty_km);
        // Big enough that no clamping hides the pad.
        let reference = wide_reference(0.02);
        let tiles = plan_tiles(&fp, dims, &reference, TileMode::Coarse).unwrap();
        assert_eq!(tiles.len(), 1);
        let t = &tiles[0];
        let (_, clat) = fp.center();
        let (m_lon, m_lat) = meters_per_degree(clat);
        // Unpadded window = the footprint corners themselves.
        let lon_lo: f64 = fp.corners.iter().map(|c| c.lon).fold(f64::INFINITY, f64::min);
        let lon_hi: f64 = fp.corners.iter().map(|c| c.lon).fold(f64::NEG_INFINITY, f64::max);
        let lat_lo: f64 = fp.corners.iter().map(|c| c.lat).fold(f64::INFINITY, f64::min);
        let lat_hi: f64 = fp.corners.iter().map(|c| c.lat).fold(f64::NEG_INFINITY, f64::max);
        let (w0, s0, e0, n0) = t.reference_window;
        assert!(((lon_lo - w0) * m_lon - 100_000.0).abs() < 1.0);
        assert!(((e0 - lon_hi) * m_lon - 100_000.0).abs() < 1.0);
        assert!(((lat_lo - s0) * m_lat - 100_000.0).abs() < 1.0);
        assert!(((n0 - lat_hi) * m_lat - 100_000.0).abs() < 1.0);
    }

    #[test]
    fn relative_scale_compares_ground_sample_distances() {
        let dims = (10_000, 7_900);
        let fp = footprint_for(dims, 2.0, 5.0);
        // 0.02 deg cells are about 1590 m east-west and 2225 m north-south
        // at 44.6 deg; the mean against 2 m panoramic pixels gives ~954.
        let reference = wide_reference(0.02);
        let tiles = plan_tiles(&fp, dims, &reference, TileMode::Fine).unwrap();
        let scale = tiles[0].scale;
        assert!((scale - 954.0).abs() < 25.0, "scale {scale}");
    }

    #[test]
    fn footprint_off_the_reference_is_refused() {
        let dims = (10_000, 7_900);
        let fp = footprint_for(dims, 2.0, 1.0);
        let far = RasterGrid::north_up(100, 100, 150.0, 10.0, 0.01, 0.01, -9999.0, "EPSG:4326")
            .unwrap();
        match plan_tiles(&fp, dims, &far, TileMode::Fine) {
            Err(GcpError::FootprintOutsideReference { pad_km }) => {
                assert_eq!(pad_km, 1.0);
            }
            other => panic!("expected footprint error, got {other:?}"),
        }
        let utm = RasterGrid::north_up(100, 100, 400_000.0, 5_000_000.0, 30.0, 30.0, -9999.0,
            "EPSG:32646").unwrap();
        assert!(matches!(
            plan_tiles(&fp, dims, &utm, TileMode::Fine),
            Err(GcpError::ReferenceNotGeographic(_))
        ));
    }

    #[test]
    fn manifest_round_trips_and_names_the_resampling() {
        let dims = (5_000, 4_000);
        let fp = footprint_for(dims, 2.0, 2.0);
        let reference = wide_reference(0.01);
        let tiles = plan_tiles(&fp, dims, &reference, TileMode::Fine).unwrap();
        let manifest = TileManifest::new(TileMode::Fine, tiles.clone());
        assert_eq!(manifest.resample, "area");
        assert_eq!(manifest.matcher_dims, MATCHER_DIMS);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiles.json");
        manifest.write(&path).unwrap();
        let back = TileManifest::read(&path).unwrap();
        assert_eq!(back.mode, TileMode::Fine);
        assert_eq!(back.tiles, tiles);
    }

    #[test]
    fn small_images_become_a_single_clamped_tile() {
        let dims = (520, 400);
        let fp = footprint_for(dims, 2.0, 0.5);
        let reference = wide_reference(0.001);
        for mode in [TileMode::Coarse, TileMode::Fine] {
            let tiles = plan_tiles(&fp, dims, &reference, mode).unwrap();
            assert_eq!(tiles.len(), 1);
            assert_eq!(tiles[0].corona_window, (0, 0, 520, 400));
        }
    }
}
