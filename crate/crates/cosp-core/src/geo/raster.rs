//! Single-band float rasters with an affine geotransform.
//!
//! Pixel coordinates follow the corner convention: integer coordinates sit at
//! pixel corners, so the center of cell `(col, row)` is at pixel coordinate
//! `(col + 0.5, row + 0.5)`. The geotransform maps pixel to world coordinates
//! as `x = g0 + g1*px + g2*py`, `y = g3 + g4*px + g5*py`.

use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GeoError;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub width: usize,
    pub height: usize,
    pub geotransform: [f64; 6],
    pub nodata: f32,
    /// Coordinate system tag, e.g. `EPSG:4326` or `EPSG:32642`.
    pub crs: String,
    data: Vec<f32>,
}

/// Sidecar metadata stored next to flat binary rasters.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    width: usize,
    height: usize,
    geotransform: [f64; 6],
    nodata: f32,
    crs: String,
}

impl RasterGrid {
    /// A grid filled with the nodata value.
    pub fn filled(
        width: usize,
        height: usize,
        geotransform: [f64; 6],
        nodata: f32,
        crs: impl Into<String>,
    ) -> Result<Self, GeoError> {
        Self::from_data(
            width,
            height,
            geotransform,
            nodata,
            crs,
            vec![nodata; width * height],
        )
    }

    pub fn from_data(
        width: usize,
        height: usize,
        geotransform: [f64; 6],
        nodata: f32,
        crs: impl Into<String>,
        data: Vec<f32>,
    ) -> Result<Self, GeoError> {
        if data.len() != width * height {
            return Err(GeoError::DimensionMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        let det = geotransform[1] * geotransform[5] - geotransform[2] * geotransform[4];
        if det.abs() < 1e-30 || !det.is_finite() {
            return Err(GeoError::SingularGeotransform(geotransform));
        }
        Ok(Self {
            width,
            height,
            geotransform,
            nodata,
            crs: crs.into(),
            data,
        })
    }

    /// North-up grid from an origin (upper-left corner) and cell sizes.
    /// `dy` is the positive cell height; rows advance southward.
    pub fn north_up(
        width: usize,
        height: usize,
        x0: f64,
        y0: f64,
        dx: f64,
        dy: f64,
        nodata: f32,
        crs: impl Into<String>,
    ) -> Result<Self, GeoError> {
        Self::filled(width, height, [x0, dx, 0.0, y0, 0.0, -dy], nodata, crs)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    #[inline]
    pub fn is_nodata(&self, v: f32) -> bool {
        v.is_nan() || v == self.nodata
    }

    /// Cell value, or `None` when out of bounds or nodata.
    #[inline]
    pub fn value(&self, col: i64, row: i64) -> Option<f32> {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return None;
        }
        let v = self.get(col as usize, row as usize);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn pixel_to_geo(&self, px: f64, py: f64) -> (f64, f64) {
        let g = &self.geotransform;
        (g[0] + g[1] * px + g[2] * py, g[3] + g[4] * px + g[5] * py)
    }

    pub fn geo_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let g = &self.geotransform;
        let det = g[1] * g[5] - g[2] * g[4];
        let dx = x - g[0];
        let dy = y - g[3];
        ((g[5] * dx - g[2] * dy) / det, (g[1] * dy - g[4] * dx) / det)
    }

    /// World coordinate of a cell center.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        self.pixel_to_geo(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Axis-aligned world bounds `(xmin, ymin, xmax, ymax)` over the four
    /// grid corners.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let corners = [
            self.pixel_to_geo(0.0, 0.0),
            self.pixel_to_geo(self.width as f64, 0.0),
            self.pixel_to_geo(0.0, self.height as f64),
            self.pixel_to_geo(self.width as f64, self.height as f64),
        ];
        let mut b = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (x, y) in corners {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }

    /// Bilinear sample at a world coordinate. `None` if the four surrounding
    /// cell centers are not all valid.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        self.sample_with_gradient(x, y).map(|(v, _, _)| v)
    }

    /// Bilinear sample plus the gradient of the interpolated surface with
    /// respect to the world coordinates.
    pub fn sample_with_gradient(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        let (px, py) = self.geo_to_pixel(x, y);
        let cx = px - 0.5;
        let cy = py - 0.5;
        let i0 = cx.floor();
        let j0 = cy.floor();
        let fx = cx - i0;
        let fy = cy - j0;
        let (i0, j0) = (i0 as i64, j0 as i64);
        let v00 = self.value(i0, j0)? as f64;
        let v10 = self.value(i0 + 1, j0)? as f64;
        let v01 = self.value(i0, j0 + 1)? as f64;
        let v11 = self.value(i0 + 1, j0 + 1)? as f64;
        let v = v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy;
        let dv_dpx = (v10 - v00) * (1.0 - fy) + (v11 - v01) * fy;
        let dv_dpy = (v01 - v00) * (1.0 - fx) + (v11 - v10) * fx;
        // Chain through the inverse geotransform.
        let g = &self.geotransform;
        let det = g[1] * g[5] - g[2] * g[4];
        let dv_dx = (dv_dpx * g[5] - dv_dpy * g[4]) / det;
        let dv_dy = (-dv_dpx * g[2] + dv_dpy * g[1]) / det;
        Some((v, dv_dx, dv_dy))
    }

    /// Fraction of cells holding a valid value.
    pub fn coverage(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let n = self.data.iter().filter(|v| !self.is_nodata(**v)).count();
        n as f64 / self.data.len() as f64
    }

    /// Write to disk; the format follows the extension. `.tif`/`.tiff` uses
    /// GeoTIFF, anything else a flat little-endian f32 dump with a JSON
    /// sidecar at `<path>.json`.
    pub fn write(&self, path: &Path) -> Result<(), GeoError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tif") | Some("tiff") => super::geotiff::write_geotiff(self, path),
            _ => self.write_flat(path),
        }
    }

    pub fn read(path: &Path) -> Result<Self, GeoError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tif") | Some("tiff") => super::geotiff::read_geotiff(path),
            _ => Self::read_flat(path),
        }
    }

    fn write_flat(&self, path: &Path) -> Result<(), GeoError> {
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        let sidecar = Sidecar {
            width: self.width,
            height: self.height,
            geotransform: self.geotransform,
            nodata: self.nodata,
            crs: self.crs.clone(),
        };
        let mut sp = path.as_os_str().to_owned();
        sp.push(".json");
        std::fs::write(sp, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    fn read_flat(path: &Path) -> Result<Self, GeoError> {
        let mut sp = path.as_os_str().to_owned();
        sp.push(".json");
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sp)?)?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() != sidecar.width * sidecar.height * 4 {
            return Err(GeoError::DimensionMismatch {
                width: sidecar.width,
                height: sidecar.height,
                len: bytes.len() / 4,
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_data(
            sidecar.width,
            sidecar.height,
            sidecar.geotransform,
            sidecar.nodata,
            sidecar.crs,
            data,
        )
    }
}
