//! Analytic projection derivatives.
//!
//! The slit time of a projected point is itself a function of the unknowns
//! through the fixed-point condition `slit_x(t) = x_p(params, t)`. The
//! implicit function theorem turns the partials at fixed `t` into total
//! derivatives: `dt/dq = (dx_p/dq) / (2L - dx_p/dt)` and the observed film
//! coordinates pick up the corresponding motion terms.

use nalgebra::{Matrix3, Vector3};

use crate::geo::{euler_to_rotation_partials, EcefPoint};

use super::{CameraError, PanoramicCamera, ProjectedPoint, PARAM_COUNT};

#[derive(Debug, Clone)]
pub struct ProjectionJacobian {
    pub point: ProjectedPoint,
    /// Rows: film `x`, film `y` (mm). Columns: the flattened parameters.
    pub d_params: [[f64; PARAM_COUNT]; 2],
    /// Rows: film `x`, film `y` (mm). Columns: ground ECEF `x`, `y`, `z` (m).
    pub d_ground: [[f64; 3]; 2],
}

pub fn project_with_jacobian(
    cam: &PanoramicCamera,
    ground: EcefPoint,
) -> Result<ProjectionJacobian, CameraError> {
    let (t, n, _) = cam.solve_scan_time(ground)?;
    let point = cam.finish_projection(t, n);

    let p = &cam.params;
    let f = cam.focal_mm;
    let base = cam.base().0;
    let (pos, r) = cam.eo_at(t);
    let d = ground.to_vector() - pos;

    let euler = euler_to_rotation_partials(
        p.angles[0] + t * p.rates[0],
        p.angles[1] + t * p.rates[1],
        p.angles[2] + t * p.rates[2],
    );
    let dr: [Matrix3<f64>; 3] = [euler[0] * base, euler[1] * base, euler[2] * base];

    let (nx, ny, nz) = (n.x, n.y, n.z);
    let denom_a = nx * nx + nz * nz;
    let (sa, ca) = point.alpha.sin_cos();
    let (sw0, cw0) = p.angles[0].sin_cos();

    // Partials of the film coordinates at fixed scan time, given the
    // camera-frame vector perturbation plus any direct terms.
    let from_dn = |dn: Vector3<f64>, d_imc: f64, d_omega0: f64| -> (f64, f64) {
        let dalpha = (-nz * dn.x + nx * dn.z) / denom_a;
        let dy_imc = -p.imc * f * ca * cw0 * dalpha - f * sa * cw0 * d_imc
            + p.imc * f * sa * sw0 * d_omega0;
        let dx = f * dalpha;
        let dy = -dy_imc + f * sa * dalpha * (ny / nz) - f * ca * (dn.y * nz - ny * dn.z) / (nz * nz);
        (dx, dy)
    };

    let col = |m: &Matrix3<f64>, j: usize| Vector3::new(m[(0, j)], m[(1, j)], m[(2, j)]);
    let velocity = Vector3::new(p.velocity[0], p.velocity[1], p.velocity[2]);
    let r_dot = dr[0] * p.rates[0] + dr[1] * p.rates[1] + dr[2] * p.rates[2];
    let dn_dt = r_dot * d - r.0 * velocity;
    let (dxp_dt, dyp_dt) = from_dn(dn_dt, 0.0, 0.0);
    let denom_t = 2.0 * cam.half_width_mm - dxp_dt;

    let total = |fixed: (f64, f64)| -> (f64, f64) {
        let dt = fixed.0 / denom_t;
        (fixed.0 + dxp_dt * dt, fixed.1 + dyp_dt * dt)
    };

    let mut d_params = [[0.0; PARAM_COUNT]; 2];
    for j in 0..3 {
        let (jx, jy) = total(from_dn(-col(&r.0, j), 0.0, 0.0));
        d_params[0][j] = jx;
        d_params[1][j] = jy;

        let (jx, jy) = total(from_dn(-t * col(&r.0, j), 0.0, 0.0));
        d_params[0][3 + j] = jx;
        d_params[1][3 + j] = jy;

        let d_omega0 = if j == 0 { 1.0 } else { 0.0 };
        let (jx, jy) = total(from_dn(dr[j] * d, 0.0, d_omega0));
        d_params[0][6 + j] = jx;
        d_params[1][6 + j] = jy;

        let (jx, jy) = total(from_dn(t * (dr[j] * d), 0.0, 0.0));
        d_params[0][9 + j] = jx;
        d_params[1][9 + j] = jy;
    }
    let (jx, jy) = total(from_dn(Vector3::zeros(), 1.0, 0.0));
    d_params[0][12] = jx;
    d_params[1][12] = jy;

    let mut d_ground = [[0.0; 3]; 2];
    for j in 0..3 {
        let (jx, jy) = total(from_dn(col(&r.0, j), 0.0, 0.0));
        d_ground[0][j] = jx;
        d_ground[1][j] = jy;
    }

    Ok(ProjectionJacobian {
        point,
        d_params,
        d_ground,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{geodetic_to_ecef, GeodeticPoint};
    use crate::pancam::testcams;
    use crate::pancam::CameraParams;

    fn fd_param(
        cam: &PanoramicCamera,
        ground: EcefPoint,
        j: usize,
        h: f64,
    ) -> (f64, f64) {
        let mut lo = cam.clone();
        let mut hi = cam.clone();
        let mut a = cam.params.to_array();
        a[j] -= h;
        lo.params = CameraParams::from_array(&a);
        a[j] += 2.0 * h;
        hi.params = CameraParams::from_array(&a);
        let pl = lo.project(ground).unwrap();
        let ph = hi.project(ground).unwrap();
        (
            (ph.mm.x - pl.mm.x) / (2.0 * h),
            (ph.mm.y - pl.mm.y) / (2.0 * h),
        )
    }

    fn check_close(analytic: f64, fd: f64, what: &str) {
        let tol = 1e-5 * analytic.abs().max(1.0);
        assert!(
            (analytic - fd).abs() < tol,
            "{what}: analytic {analytic} vs finite difference {fd}"
        );
    }

    #[test]
    fn parameter_jacobian_matches_finite_differences() {
        for fore in [true, false] {
            let cam = testcams::moving(fore);
            for (dlon, dlat, h) in [(0.0, 0.0, 250.0), (1.7, 0.3, 900.0), (-2.2, -0.25, 0.0)] {
                let g = geodetic_to_ecef(GeodeticPoint::new(96.24 + dlon, 44.59 + dlat, h));
                let jac = project_with_jacobian(&cam, g).unwrap();
                let steps = [
                    0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 1e-7, 1e-7, 1e-7, 1e-7, 1e-7, 1e-7, 1e-8,
                ];
                for j in 0..PARAM_COUNT {
                    let (fx, fy) = fd_param(&cam, g, j, steps[j]);
                    check_close(jac.d_params[0][j], fx, &format!("x wrt param {j}"));
                    check_close(jac.d_params[1][j], fy, &format!("y wrt param {j}"));
                }
            }
        }
    }

    #[test]
    fn ground_jacobian_matches_finite_differences() {
        let cam = testcams::moving(true);
        let g = geodetic_to_ecef(GeodeticPoint::new(97.4, 44.8, 600.0));
        let jac = project_with_jacobian(&cam, g).unwrap();
        let h = 0.05;
        for j in 0..3 {
            let mut lo = g;
            let mut hi = g;
            match j {
                0 => {
                    lo.x -= h;
                    hi.x += h;
                }
                1 => {
                    lo.y -= h;
                    hi.y += h;
                }
                _ => {
                    lo.z -= h;
                    hi.z += h;
                }
            }
            let pl = cam.project(lo).unwrap();
            let ph = cam.project(hi).unwrap();
            let fx = (ph.mm.x - pl.mm.x) / (2.0 * h);
            let fy = (ph.mm.y - pl.mm.y) / (2.0 * h);
            check_close(jac.d_ground[0][j], fx, &format!("x wrt ground {j}"));
            check_close(jac.d_ground[1][j], fy, &format!("y wrt ground {j}"));
        }
    }

    #[test]
    fn jacobian_point_agrees_with_projection() {
        let cam = testcams::moving(false);
        let g = geodetic_to_ecef(GeodeticPoint::new(95.6, 44.3, 150.0));
        let jac = project_with_jacobian(&cam, g).unwrap();
        let p = cam.project(g).unwrap();
        assert!((jac.point.mm.x - p.mm.x).abs() < 1e-12);
        assert!((jac.point.mm.y - p.mm.y).abs() < 1e-12);
        assert!((jac.point.t - p.t).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_propagates() {
        let cam = testcams::full_format(true);
        let (pos, _) = cam.eo_at(0.5);
        let above = EcefPoint::from_vector(pos * 1.1);
        assert!(project_with_jacobian(&cam, above).is_err());
    }
}
