//! Rotation matrices for the omega-phi-kappa Euler convention used by the
//! camera model.
//!
//! The composed matrix is `R = Pz(kappa) * Py(phi) * Px(omega)` where each
//! elementary factor is a passive (coordinate-frame) rotation. Rows of `R`
//! are the camera basis vectors expressed in the world frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// A 3x3 rotation matrix with row accessors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation3(pub Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn row(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.0[(i, 0)], self.0[(i, 1)], self.0[(i, 2)])
    }

    /// Apply to a world vector, producing camera-frame coordinates.
    pub fn apply(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    /// Largest absolute deviation of `R * R^T` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.0 * self.0.transpose() - Matrix3::identity();
        d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Recover `(omega, phi, kappa)` in radians. `phi` is returned in
    /// `[-pi/2, pi/2]`; at gimbal lock (`|phi| = pi/2`) kappa absorbs the
    /// free angle and omega is set to zero.
    pub fn euler_angles(&self) -> (f64, f64, f64) {
        let r = &self.0;
        let sp = r[(2, 0)].clamp(-1.0, 1.0);
        let phi = sp.asin();
        if sp.abs() < 1.0 - 1e-12 {
            let omega = (-r[(2, 1)]).atan2(r[(2, 2)]);
            let kappa = (-r[(1, 0)]).atan2(r[(0, 0)]);
            (omega, phi, kappa)
        } else {
            // cos(phi) = 0: only omega +/- kappa is determined.
            let kappa = r[(0, 1)].atan2(r[(1, 1)]);
            (0.0, phi, kappa)
        }
    }
}

/// Build the rotation matrix for angles in radians.
pub fn euler_to_rotation(omega: f64, phi: f64, kappa: f64) -> Rotation3 {
    let (so, co) = omega.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sk, ck) = kappa.sin_cos();
    Rotation3(Matrix3::new(
        ck * cp,
        ck * sp * so + sk * co,
        -ck * sp * co + sk * so,
        -sk * cp,
        -sk * sp * so + ck * co,
        sk * sp * co + ck * so,
        sp,
        -cp * so,
        cp * co,
    ))
}

/// Partial derivatives of the rotation matrix with respect to each angle.
pub fn euler_to_rotation_partials(omega: f64, phi: f64, kappa: f64) -> [Matrix3<f64>; 3] {
    let (so, co) = omega.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sk, ck) = kappa.sin_cos();
    let d_omega = Matrix3::new(
        0.0,
        ck * sp * co - sk * so,
        ck * sp * so + sk * co,
        0.0,
        -sk * sp * co - ck * so,
        -sk * sp * so + ck * co,
        0.0,
        -cp * co,
        -cp * so,
    );
    let d_phi = Matrix3::new(
        -ck * sp,
        ck * cp * so,
        -ck * cp * co,
        sk * sp,
        -sk * cp * so,
        sk * cp * co,
        cp,
        sp * so,
        -sp * co,
    );
    let d_kappa = Matrix3::new(
        -sk * cp,
        -sk * sp * so + ck * co,
        sk * sp * co + ck * so,
        -ck * cp,
        -ck * sp * so - sk * co,
        ck * sp * co - sk * so,
        0.0,
        0.0,
        0.0,
    );
    [d_omega, d_phi, d_kappa]
}
