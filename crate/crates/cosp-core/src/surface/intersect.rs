//! Forward intersection of two slit-camera observations.

use nalgebra::{Matrix3, Vector3};

use crate::geo::EcefPoint;
use crate::pancam::{ImagePointMM, PanoramicCamera};

use super::SurfaceError;

/// Ray miss distance beyond which the observation pair is rejected as
/// inconsistent rather than intersected.
pub const DIVERGENCE_THRESHOLD_M: f64 = 100.0;

/// Eigenvalue ratio below which the 3x3 normal matrix counts as rank
/// deficient (rays parallel or identical).
const PARALLEL_EIGENVALUE_RATIO: f64 = 1e-10;

/// Builds the two linear rows one observation contributes to the ground
/// coordinates. With n = R(t) (X - P(t)), the slit geometry requires
/// n_x + tan(alpha) n_z = 0 and n_y + q n_z = 0 where
/// q = (y + y_imc) / (f cos(alpha)). Scan time and angle follow directly
/// from the observed x coordinate, so both rows are linear in X.
fn observation_rows(cam: &PanoramicCamera, p: ImagePointMM) -> [(Vector3<f64>, f64); 2] {
    let t = cam.scan_time(p.x);
    let alpha = cam.scan_angle(p.x);
    let (pos, rot) = cam.eo_at(t);
    let q = (p.y + cam.imc_shift(alpha)) / (cam.focal_mm * alpha.cos());
    let a1 = rot.row(0) + alpha.tan() * rot.row(2);
    let a2 = rot.row(1) + q * rot.row(2);
    [(a1, a1.dot(&pos)), (a2, a2.dot(&pos))]
}

/// Least-squares intersection of two observations of the same ground
/// point. Returns the ECEF solution and the closest-approach distance
/// of the two viewing rays as a consistency metric (zero for noiseless
/// observations).
pub fn triangulate(
    cam_a: &PanoramicCamera,
    cam_b: &PanoramicCamera,
    p_a: ImagePointMM,
    p_b: ImagePointMM,
) -> Result<(EcefPoint, f64), SurfaceError> {
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (cam, p) in [(cam_a, p_a), (cam_b, p_b)] {
        for (a, b) in observation_rows(cam, p) {
            normal += a * a.transpose();
            rhs += a * b;
        }
    }

    let eig = normal.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if !(min > PARALLEL_EIGENVALUE_RATIO * max) {
        return Err(SurfaceError::NearParallelRays);
    }
    let mut inv_l = eig.eigenvalues;
    inv_l.apply(|l| *l = 1.0 / *l);
    let x = eig.eigenvectors * inv_l.component_mul(&(eig.eigenvectors.transpose() * rhs));

    let miss = ray_closest_approach(cam_a, cam_b, p_a, p_b)?;
    if miss > DIVERGENCE_THRESHOLD_M {
        return Err(SurfaceError::DivergentPoint);
    }
    Ok((EcefPoint::new(x.x, x.y, x.z), miss))
}

/// Distance between the two viewing rays at their closest approach.
/// Errors if the closest approach lies behind either camera.
fn ray_closest_approach(
    cam_a: &PanoramicCamera,
    cam_b: &PanoramicCamera,
    p_a: ImagePointMM,
    p_b: ImagePointMM,
) -> Result<f64, SurfaceError> {
    let (oa, da) = cam_a.backproject(p_a);
    let (ob, db) = cam_b.backproject(p_b);
    let oa = Vector3::new(oa.x, oa.y, oa.z);
    let ob = Vector3::new(ob.x, ob.y, ob.z);
    let w = oa - ob;
    let b = da.dot(&db);
    let denom = 1.0 - b * b;
    if denom < 1e-12 {
        return Err(SurfaceError::NearParallelRays);
    }
    let d = da.dot(&w);
    let e = db.dot(&w);
    let sa = (b * e - d) / denom;
    let sb = (e - b * d) / denom;
    if sa <= 0.0 || sb <= 0.0 {
        return Err(SurfaceError::DivergentPoint);
    }
    Ok(((oa + sa * da) - (ob + sb * db)).norm())
}
