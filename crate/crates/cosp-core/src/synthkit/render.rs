//! Observation and image rendering from a synthetic scene.
//!
//! Images are rendered by inverse projection: every pixel ray is intersected
//! with the analytic terrain and the ground texture is sampled there. Point
//! observations are generated the opposite way, by projecting terrain points
//! through the true cameras, so images and observations are consistent by
//! construction.

use nalgebra::Vector3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalyticTerrain, BendingSpec, SyntheticScene};
use crate::adjust::{GcpRecord, GcpRole, TiePoint};
use crate::geo::{ecef_to_geodetic, geodetic_to_ecef, EcefPoint, GeodeticPoint};
use crate::imgproc::GrayImage;
use crate::pancam::{PanoramicCamera, PixelPoint};

/// Where a pixel ray meets the terrain, found to within 1e-5 m of height.
///
/// Marches outward from an initial guess until the ray is below the surface,
/// then closes in with bisection tightened by secant steps. Returns `None`
/// for rays that never descend to the terrain.
pub fn intersect_ray_terrain(
    terrain: &AnalyticTerrain,
    origin: EcefPoint,
    dir: Vector3<f64>,
) -> Option<GeodeticPoint> {
    let o = origin.to_vector();
    // Height above terrain along the ray.
    let clearance = |s: f64| -> Option<f64> {
        let g = ecef_to_geodetic(EcefPoint::from_vector(o + dir * s)).ok()?;
        Some(g.h - terrain.height_at(g.lon, g.lat))
    };
    let start = ecef_to_geodetic(origin).ok()?;
    let f0 = start.h - terrain.height_at(start.lon, start.lat);
    if f0 <= 0.0 {
        return None; // origin below the surface
    }
    // Descent rate of the ray at the origin; rays pointing up or grazing
    // never reach the ground.
    let up = geodetic_to_ecef(GeodeticPoint::new(start.lon, start.lat, start.h + 1.0)).to_vector()
        - o;
    let rate = -dir.dot(&up.normalize());
    if rate < 1e-3 {
        return None;
    }
    let mut s_lo = 0.0;
    let mut f_lo = f0;
    let mut s_hi = f0 / rate;
    let mut f_hi = clearance(s_hi)?;
    let mut expansions = 0;
    while f_hi > 0.0 {
        expansions += 1;
        if expansions > 60 {
            return None;
        }
        s_lo = s_hi;
        f_lo = f_hi;
        s_hi += (f_hi / rate).max(1.0) * 1.5;
        f_hi = clearance(s_hi)?;
    }
    for _ in 0..200 {
        // Secant estimate, kept safely inside the bracket.
        let width = s_hi - s_lo;
        let mut s = s_lo + f_lo * width / (f_lo - f_hi);
        if !(s > s_lo + 1e-3 * width && s < s_hi - 1e-3 * width) {
            s = 0.5 * (s_lo + s_hi);
        }
        let f = clearance(s)?;
        if f.abs() < 1e-5 {
            let g = ecef_to_geodetic(EcefPoint::from_vector(o + dir * s)).ok()?;
            // Snap onto the analytic surface exactly.
            return Some(terrain.surface_point(g.lon, g.lat));
        }
        if f > 0.0 {
            s_lo = s;
            f_lo = f;
        } else {
            s_hi = s;
            f_hi = f;
        }
    }
    None
}

fn shade(scene: &SyntheticScene, lon: f64, lat: f64) -> f32 {
    let (e, n) = scene.terrain.local_en(lon, lat);
    scene.texture.value(e, n) as f32
}

/// Render one camera's view of the scene. With a bending spec the film
/// content is shifted vertically by the column-dependent amount, as a bent
/// film would be.
pub fn render_image(
    scene: &SyntheticScene,
    cam: &PanoramicCamera,
    bending: Option<&BendingSpec>,
) -> GrayImage {
    let w = cam.width_px();
    let h = cam.height_px();
    let mut img = GrayImage::new(w, h);
    let width = w;
    img.data_mut()
        .par_chunks_exact_mut(width)
        .enumerate()
        .for_each(|(row, line)| {
            for (col, px) in line.iter_mut().enumerate() {
                let mut r = row as f64 + 0.5;
                let c = col as f64 + 0.5;
                if let Some(b) = bending {
                    r -= b.row_shift(c);
                }
                let mm = cam.pixel_to_mm(PixelPoint::new(c, r));
                let (origin, dir) = cam.backproject(mm);
                *px = match intersect_ray_terrain(&scene.terrain, origin, dir) {
                    Some(g) => shade(scene, g.lon, g.lat),
                    None => f32::NAN,
                };
            }
        });
    img
}

/// Controls for [`render_observations`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationOptions {
    pub gcp_count: usize,
    pub tie_count: usize,
    /// Gaussian pixel noise added to every measurement.
    pub noise_sigma_px: f64,
    /// A-priori sigma recorded on the GCPs (the weight the adjustment sees).
    pub gcp_sigma_px: f64,
    pub tie_sigma_px: f64,
    /// Fraction of GCPs marked as check points.
    pub check_fraction: f64,
    pub bending: Option<BendingSpec>,
    pub render_images: bool,
    /// Points project at least this far from the film edge, pixels.
    pub margin_px: f64,
}

impl Default for ObservationOptions {
    fn default() -> Self {
        ObservationOptions {
            gcp_count: 120,
            tie_count: 80,
            noise_sigma_px: 0.0,
            gcp_sigma_px: 1.0,
            tie_sigma_px: 1.0,
            check_fraction: 0.0,
            bending: None,
            render_images: false,
            margin_px: 8.0,
        }
    }
}

/// Exact answers the pipeline is later compared against. Nothing here may
/// feed back into processing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationTruth {
    pub gcp_ground: Vec<GeodeticPoint>,
    pub tie_ground: Vec<EcefPoint>,
    pub bending: Option<BendingSpec>,
}

#[derive(Debug, Clone)]
pub struct RenderedObservations {
    pub gcps: Vec<GcpRecord>,
    pub ties: Vec<TiePoint>,
    /// Fore and aft images when requested.
    pub images: Option<(GrayImage, GrayImage)>,
    pub truth: ObservationTruth,
}

/// East-north box (metres) seen by both cameras, shrunk a little.
fn common_footprint(scene: &SyntheticScene) -> Option<(f64, f64, f64, f64)> {
    let mut box_ = (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for cam in scene.cameras() {
        let w = cam.width_px() as f64;
        let h = cam.height_px() as f64;
        let mut emin = f64::INFINITY;
        let mut emax = f64::NEG_INFINITY;
        let mut nmin = f64::INFINITY;
        let mut nmax = f64::NEG_INFINITY;
        for &(c, r) in &[
            (0.0, 0.0),
            (w / 2.0, 0.0),
            (w, 0.0),
            (0.0, h / 2.0),
            (w, h / 2.0),
            (0.0, h),
            (w / 2.0, h),
            (w, h),
        ] {
            let (origin, dir) = cam.backproject(cam.pixel_to_mm(PixelPoint::new(c, r)));
            let g = intersect_ray_terrain(&scene.terrain, origin, dir)?;
            let (e, n) = scene.terrain.local_en(g.lon, g.lat);
            emin = emin.min(e);
            emax = emax.max(e);
            nmin = nmin.min(n);
            nmax = nmax.max(n);
        }
        box_.0 = box_.0.max(emin);
        box_.1 = box_.1.min(emax);
        box_.2 = box_.2.max(nmin);
        box_.3 = box_.3.min(nmax);
    }
    let (emin, emax, nmin, nmax) = box_;
    if emin >= emax || nmin >= nmax {
        return None;
    }
    let de = 0.05 * (emax - emin);
    let dn = 0.05 * (nmax - nmin);
    Some((emin + de, emax - de, nmin + dn, nmax - dn))
}

/// Generate matched observations (and optionally images) for the pair.
///
/// Ground points are drawn uniformly over the common footprint, projected
/// through the true cameras, then bent and perturbed as configured. Every
/// GCP is observed in both images; ties carry no ground coordinates, their
/// truth goes to the sidecar only.
pub fn render_observations(
    scene: &SyntheticScene,
    opts: &ObservationOptions,
) -> RenderedObservations {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x6f62_7365_7276_6500);
    let noise = Normal::new(0.0, opts.noise_sigma_px.max(f64::MIN_POSITIVE)).unwrap();
    let (emin, emax, nmin, nmax) =
        common_footprint(scene).expect("cameras see no common ground");
    let margin_mm = opts.margin_px * scene.config.pixel_pitch_mm;

    let sample_pair = |rng: &mut ChaCha8Rng| -> (GeodeticPoint, EcefPoint, [PixelPoint; 2]) {
        for _ in 0..10_000 {
            let e = rng.random_range(emin..emax);
            let n = rng.random_range(nmin..nmax);
            let (lon, lat) = scene.terrain.lonlat(e, n);
            let geo = scene.terrain.surface_point(lon, lat);
            let ecef = geodetic_to_ecef(geo);
            let mut pixels = [PixelPoint::new(0.0, 0.0); 2];
            let mut ok = true;
            for (i, cam) in scene.cameras().iter().enumerate() {
                match cam.project(ecef) {
                    Ok(p) if cam.contains_mm(p.mm, margin_mm) => {
                        pixels[i] = cam.mm_to_pixel(p.mm);
                    }
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return (geo, ecef, pixels);
            }
        }
        panic!("could not place a point visible in both cameras");
    };

    let measure = |rng: &mut ChaCha8Rng, p: PixelPoint| -> PixelPoint {
        let mut col = p.col;
        let mut row = p.row;
        if let Some(b) = &opts.bending {
            row += b.row_shift(col);
        }
        if opts.noise_sigma_px > 0.0 {
            col += noise.sample(rng);
            row += noise.sample(rng);
        }
        PixelPoint::new(col, row)
    };

    let ids = ["fore", "aft"];
    let mut gcps = Vec::with_capacity(2 * opts.gcp_count);
    let mut gcp_ground = Vec::with_capacity(opts.gcp_count);
    for _ in 0..opts.gcp_count {
        let (geo, ecef, pixels) = sample_pair(&mut rng);
        let role = if rng.random::<f64>() < opts.check_fraction {
            GcpRole::Check
        } else {
            GcpRole::Control
        };
        gcp_ground.push(geo);
        for (i, id) in ids.iter().enumerate() {
            gcps.push(GcpRecord {
                image_id: (*id).into(),
                pixel: measure(&mut rng, pixels[i]),
                ground: ecef,
                sigma_px: opts.gcp_sigma_px,
                role,
            });
        }
    }

    let mut ties = Vec::with_capacity(opts.tie_count);
    let mut tie_ground = Vec::with_capacity(opts.tie_count);
    for k in 0..opts.tie_count {
        let (_, ecef, pixels) = sample_pair(&mut rng);
        tie_ground.push(ecef);
        ties.push(TiePoint {
            id: format!("t{k:04}"),
            observations: ids
                .iter()
                .enumerate()
                .map(|(i, id)| ((*id).into(), measure(&mut rng, pixels[i])))
                .collect(),
            sigma_px: opts.tie_sigma_px,
            ground: None,
        });
    }

    let images = opts.render_images.then(|| {
        (
            render_image(scene, &scene.fore, opts.bending.as_ref()),
            render_image(scene, &scene.aft, opts.bending.as_ref()),
        )
    });

    RenderedObservations {
        gcps,
        ties,
        images,
        truth: ObservationTruth {
            gcp_ground,
            tie_ground,
            bending: opts.bending,
        },
    }
}
