//! Interpolated image-residual fields.

use crate::geo::RasterGrid;

use super::{ObservationKind, ObservationResidual};

pub const RESIDUAL_NODATA: f32 = -9999.0;

/// Inverse-distance-weighted interpolation of one image's GCP residual
/// vectors over a regular pixel grid. Returns `(dx, dy)` grids in pixels;
/// cells farther than `cutoff_px` from every GCP stay nodata. Rejected
/// observations and tie points do not contribute.
pub fn residual_field(
    residuals: &[ObservationResidual],
    image_id: &str,
    width_px: usize,
    height_px: usize,
    grid_step_px: f64,
    cutoff_px: f64,
) -> (RasterGrid, RasterGrid) {
    let pts: Vec<(f64, f64, f64, f64)> = residuals
        .iter()
        .filter(|r| {
            r.image_id == image_id
                && !r.rejected
                && matches!(r.kind, ObservationKind::Gcp { .. })
                && r.vx_px.is_finite()
                && r.vy_px.is_finite()
        })
        .map(|r| (r.pixel.col, r.pixel.row, r.vx_px, r.vy_px))
        .collect();

    let cols = (width_px as f64 / grid_step_px).ceil().max(1.0) as usize;
    let rows = (height_px as f64 / grid_step_px).ceil().max(1.0) as usize;
    // Grid coordinates are plain pixels: x = col, y = row, rows downward.
    let gt = [0.0, grid_step_px, 0.0, 0.0, 0.0, grid_step_px];
    let mut dx = RasterGrid::filled(cols, rows, gt, RESIDUAL_NODATA, "image").unwrap();
    let mut dy = dx.clone();

    for row in 0..rows {
        for col in 0..cols {
            let cx = (col as f64 + 0.5) * grid_step_px;
            let cy = (row as f64 + 0.5) * grid_step_px;
            let mut wsum = 0.0;
            let mut vx = 0.0;
            let mut vy = 0.0;
            let mut dmin2 = f64::INFINITY;
            let mut exact = None;
            for &(px, py, rx, ry) in &pts {
                let d2 = (px - cx).powi(2) + (py - cy).powi(2);
                dmin2 = dmin2.min(d2);
                if d2 < 1e-12 {
                    exact = Some((rx, ry));
                    break;
                }
                let w = 1.0 / d2;
                wsum += w;
                vx += w * rx;
                vy += w * ry;
            }
            let value = match exact {
                Some(v) => Some(v),
                None if dmin2.sqrt() <= cutoff_px && wsum > 0.0 => {
                    Some((vx / wsum, vy / wsum))
                }
                _ => None,
            };
            if let Some((x, y)) = value {
                dx.set(col, row, x as f32);
                dy.set(col, row, y as f32);
            }
        }
    }
    (dx, dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjust::GcpRole;
    use crate::pancam::PixelPoint;

    fn gcp_residual(col: f64, row: f64, vx: f64, vy: f64) -> ObservationResidual {
        ObservationResidual {
            image_id: "fore".into(),
            kind: ObservationKind::Gcp {
                index: 0,
                role: GcpRole::Control,
            },
            pixel: PixelPoint::new(col, row),
            vx_px: vx,
            vy_px: vy,
            weight: 1.0,
            rejected: false,
        }
    }

    #[test]
    fn uniform_residuals_interpolate_to_a_constant_field() {
        let residuals: Vec<_> = (0..12)
            .map(|k| gcp_residual(40.0 + 30.0 * (k % 4) as f64, 25.0 + 35.0 * (k / 4) as f64, 0.7, -0.3))
            .collect();
        let (dx, dy) = residual_field(&residuals, "fore", 160, 120, 10.0, 500.0);
        for v in dx.data() {
            assert!((*v - 0.7).abs() < 1e-5, "dx cell {v}");
        }
        for v in dy.data() {
            assert!((*v + 0.3).abs() < 1e-5, "dy cell {v}");
        }
    }

    #[test]
    fn lone_point_supports_only_its_neighborhood() {
        let residuals = vec![gcp_residual(50.0, 50.0, 1.5, 0.0)];
        let (dx, _) = residual_field(&residuals, "fore", 200, 200, 10.0, 30.0);
        let near = dx.value(5, 5).unwrap();
        assert!((near - 1.5).abs() < 1e-6);
        assert!(dx.value(19, 19).is_none(), "far corner must stay nodata");
        let valid = dx.data().iter().filter(|v| !dx.is_nodata(**v)).count();
        assert!(valid > 0 && valid < dx.width * dx.height / 2);
    }

    #[test]
    fn other_images_and_rejected_points_are_ignored() {
        let mut other = gcp_residual(50.0, 50.0, 9.0, 9.0);
        other.image_id = "aft".into();
        let mut rejected = gcp_residual(52.0, 50.0, -9.0, -9.0);
        rejected.rejected = true;
        let residuals = vec![gcp_residual(50.0, 50.0, 1.0, 2.0), other, rejected];
        let (dx, dy) = residual_field(&residuals, "fore", 100, 100, 5.0, 400.0);
        for (x, y) in dx.data().iter().zip(dy.data()) {
            assert!((*x - 1.0).abs() < 1e-6 && (*y - 2.0).abs() < 1e-6);
        }
    }
}
