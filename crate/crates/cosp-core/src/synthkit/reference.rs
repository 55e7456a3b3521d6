//! Reference rasters derived from a synthetic scene.
//!
//! Ground-control generation matches film imagery against georeferenced
//! reference data. For hermetic tests those references are rendered from the
//! same analytic terrain and texture the scene is built on: an orthophoto of
//! the ground albedo and a height grid, both on north-up geographic grids,
//! plus the exact ground footprint of a camera.

use rayon::prelude::*;

use super::SyntheticScene;
use crate::geo::{meters_per_degree, GeodeticPoint, RasterGrid};
use crate::pancam::{PanoramicCamera, PixelPoint};
use crate::synthkit::render::intersect_ray_terrain;

/// Ground points seen by the four film corners, in scan order
/// `(0,0), (W,0), (W,H), (0,H)`. `None` when a corner ray misses the ground.
pub fn camera_footprint(
    scene: &SyntheticScene,
    cam: &PanoramicCamera,
) -> Option<[GeodeticPoint; 4]> {
    let w = cam.width_px() as f64;
    let h = cam.height_px() as f64;
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let mut out = [GeodeticPoint::new(0.0, 0.0, 0.0); 4];
    for (slot, &(c, r)) in out.iter_mut().zip(&corners) {
        let (origin, dir) = cam.backproject(cam.pixel_to_mm(PixelPoint::new(c, r)));
        *slot = intersect_ray_terrain(&scene.terrain, origin, dir)?;
    }
    Some(out)
}

/// North-up geographic grid covering the footprints of both cameras plus
/// `pad_m` on each side, with cells of roughly `gsd_m` ground size.
fn reference_grid(scene: &SyntheticScene, gsd_m: f64, pad_m: f64) -> RasterGrid {
    assert!(gsd_m > 0.0 && pad_m >= 0.0);
    let mut emin = f64::INFINITY;
    let mut emax = f64::NEG_INFINITY;
    let mut nmin = f64::INFINITY;
    let mut nmax = f64::NEG_INFINITY;
    for cam in scene.cameras() {
        let corners = camera_footprint(scene, cam).expect("camera sees no ground");
        for g in corners {
            let (e, n) = scene.terrain.local_en(g.lon, g.lat);
            emin = emin.min(e);
            emax = emax.max(e);
            nmin = nmin.min(n);
            nmax = nmax.max(n);
        }
    }
    emin -= pad_m;
    emax += pad_m;
    nmin -= pad_m;
    nmax += pad_m;

    let (origin_lon, origin_lat) = scene.terrain.origin();
    let (m_lon, m_lat) = meters_per_degree(origin_lat);
    let width = ((emax - emin) / gsd_m).ceil() as usize;
    let height = ((nmax - nmin) / gsd_m).ceil() as usize;
    RasterGrid::north_up(
        width.max(1),
        height.max(1),
        origin_lon + emin / m_lon,
        origin_lat + nmax / m_lat,
        gsd_m / m_lon,
        gsd_m / m_lat,
        -9999.0,
        "EPSG:4326",
    )
    .expect("valid grid")
}

fn fill_grid(scene: &SyntheticScene, mut grid: RasterGrid, f: impl Fn(f64, f64) -> f32 + Sync) -> RasterGrid {
    let width = grid.width;
    let gt = grid.geotransform;
    grid.data_mut()
        .par_chunks_exact_mut(width)
        .enumerate()
        .for_each(|(row, line)| {
            for (col, px) in line.iter_mut().enumerate() {
                let x = gt[0] + gt[1] * (col as f64 + 0.5) + gt[2] * (row as f64 + 0.5);
                let y = gt[3] + gt[4] * (col as f64 + 0.5) + gt[5] * (row as f64 + 0.5);
                let (e, n) = scene.terrain.local_en(x, y);
                *px = f(e, n);
            }
        });
    grid
}

/// Orthophoto of the scene texture: the albedo every camera pixel ultimately
/// observes, resampled onto a geographic grid.
pub fn render_reference_image(scene: &SyntheticScene, gsd_m: f64, pad_m: f64) -> RasterGrid {
    let grid = reference_grid(scene, gsd_m, pad_m);
    fill_grid(scene, grid, |e, n| scene.texture.value(e, n) as f32)
}

/// Terrain heights on the same kind of grid, playing the part of the
/// reference elevation model ground control heights are read from.
pub fn render_reference_dem(scene: &SyntheticScene, gsd_m: f64, pad_m: f64) -> RasterGrid {
    let grid = reference_grid(scene, gsd_m, pad_m);
    fill_grid(scene, grid, |e, n| scene.terrain.height_en(e, n) as f32)
}
