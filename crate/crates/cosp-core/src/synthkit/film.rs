//! Synthetic film scans: textured exposed area, edge reference stripes,
//! optional bending, and splitting into overlapping scanner parts.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BendingSpec, TextureField};
use crate::imgproc::GrayImage;

/// Geometry of a synthetic film scan, pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilmLayout {
    pub width: usize,
    pub height: usize,
    /// Nominal row of the upper reference stripe.
    pub top_stripe_row: f64,
    /// Nominal row of the lower reference stripe.
    pub bottom_stripe_row: f64,
    /// Gaussian half-thickness of the stripe lines.
    pub stripe_sigma_px: f64,
    /// Rows between `exposed_top` and `exposed_bottom` carry image texture.
    pub exposed_top: f64,
    pub exposed_bottom: f64,
}

impl Default for FilmLayout {
    fn default() -> Self {
        FilmLayout {
            width: 2000,
            height: 700,
            top_stripe_row: 52.0,
            bottom_stripe_row: 648.0,
            stripe_sigma_px: 1.4,
            exposed_top: 80.0,
            exposed_bottom: 620.0,
        }
    }
}

/// Render a film scan. The unexposed margins are dark, the exposed band is
/// filled with procedural texture, and two bright reference lines run along
/// the edges. A bending spec shifts all content of a column vertically,
/// stripes included, exactly as a deformed film would be scanned.
pub fn make_synthetic_film(
    layout: &FilmLayout,
    seed: u64,
    bending: Option<&BendingSpec>,
) -> GrayImage {
    // Pixel-scale texture: coarsest wavelength of 9 px with finer octaves.
    let texture = TextureField::new(seed ^ 0x66_69_6c_6d, 9.0);
    let mut img = GrayImage::new(layout.width, layout.height);
    for row in 0..layout.height {
        for col in 0..layout.width {
            let c = col as f64 + 0.5;
            let shift = bending.map_or(0.0, |b| b.row_shift(c));
            // Row in the undeformed film frame.
            let r = row as f64 + 0.5 - shift;
            let mut v = 0.05
                + if r >= layout.exposed_top && r <= layout.exposed_bottom {
                    0.15 + 0.65 * texture.value(c, r)
                } else {
                    0.0
                };
            for stripe_row in [layout.top_stripe_row, layout.bottom_stripe_row] {
                let d = r - stripe_row;
                v += 0.8 * (-d * d / (2.0 * layout.stripe_sigma_px * layout.stripe_sigma_px)).exp();
            }
            img.set(col, row, v.min(1.0) as f32);
        }
    }
    img
}

/// Rigid placement of one scan part: part pixel coordinates map to film
/// coordinates by a rotation about the part center plus a translation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RigidTruth {
    pub rotation_rad: f64,
    pub tx: f64,
    pub ty: f64,
    /// Column in film coordinates where this part's window starts.
    pub window_start_col: f64,
}

impl RigidTruth {
    /// Map part pixel coordinates to full-film pixel coordinates.
    pub fn part_to_film(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation_rad.sin_cos();
        (
            c * x - s * y + self.tx + self.window_start_col,
            s * x + c * y + self.ty,
        )
    }
}

/// Cut a film into four parts with the given overlap, each perturbed by a
/// small random rigid motion (the scanner placement error stitching must
/// undo). Returns the parts and the true placements.
pub fn split_into_scan_parts(
    film: &GrayImage,
    overlap_px: usize,
    seed: u64,
) -> (Vec<GrayImage>, Vec<RigidTruth>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x73_63_61_6e);
    let n = 4;
    let w = film.width;
    let part_w = (w + (n - 1) * overlap_px).div_ceil(n);
    let mut parts = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for i in 0..n {
        let start = i * (part_w - overlap_px);
        let start = start.min(w.saturating_sub(part_w));
        let truth = if i == 0 {
            // The first part anchors the film frame.
            RigidTruth { rotation_rad: 0.0, tx: 0.0, ty: 0.0, window_start_col: start as f64 }
        } else {
            RigidTruth {
                rotation_rad: rng.random_range(-3e-3..3e-3),
                tx: rng.random_range(-5.0..5.0),
                ty: rng.random_range(-5.0..5.0),
                window_start_col: start as f64,
            }
        };
        let mut part = GrayImage::new(part_w, film.height);
        for row in 0..film.height {
            for col in 0..part_w {
                let (fx, fy) = truth.part_to_film(col as f64 + 0.5, row as f64 + 0.5);
                part.set(col, row, film.sample(fx, fy).unwrap_or(f32::NAN));
            }
        }
        parts.push(part);
        truths.push(truth);
    }
    (parts, truths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn film_has_stripes_at_the_nominal_rows() {
        let layout = FilmLayout::default();
        let film = make_synthetic_film(&layout, 5, None);
        // The stripe row is the brightest in its column neighbourhood.
        for col in [100usize, 900, 1700] {
            for nominal in [layout.top_stripe_row, layout.bottom_stripe_row] {
                let r0 = nominal as usize;
                let peak = film.get(col, r0);
                assert!(peak > 0.7, "stripe should be bright, got {peak}");
                assert!(peak > film.get(col, r0 - 6) + 0.3);
                assert!(peak > film.get(col, r0 + 6) + 0.3);
            }
        }
    }

    #[test]
    fn bending_moves_stripes_by_the_requested_amount() {
        let layout = FilmLayout::default();
        let bend = BendingSpec { amplitude_px: 5.0, wavelength_px: 700.0, phase_rad: 0.0 };
        let film = make_synthetic_film(&layout, 5, Some(&bend));
        // At the quarter wavelength the shift is the full amplitude.
        let col = 175usize;
        let expected = layout.top_stripe_row + 5.0;
        let mut best_row = 0;
        let mut best = 0.0f32;
        for r in 20..90 {
            let v = film.get(col, r);
            if v > best {
                best = v;
                best_row = r;
            }
        }
        assert!(
            (best_row as f64 + 0.5 - expected).abs() <= 1.0,
            "stripe at {best_row}, expected near {expected}"
        );
    }

    #[test]
    fn scan_parts_overlap_and_map_back_to_the_film() {
        let layout = FilmLayout { width: 1200, height: 300, ..FilmLayout::default() };
        let film = make_synthetic_film(&layout, 9, None);
        let (parts, truths) = split_into_scan_parts(&film, 120, 9);
        assert_eq!(parts.len(), 4);
        assert_eq!(truths[0].rotation_rad, 0.0);
        // Interior samples of each part equal the film at the mapped spot.
        for (part, truth) in parts.iter().zip(&truths) {
            let mut compared = 0;
            for &(x, y) in &[(40.5, 80.5), (150.25, 150.75), (200.5, 220.25)] {
                let (fx, fy) = truth.part_to_film(x, y);
                if let (Some(a), Some(b)) = (part.sample(x, y), film.sample(fx, fy)) {
                    assert!((a - b).abs() < 5e-3, "{a} vs {b}");
                    compared += 1;
                }
            }
            assert!(compared > 0);
        }
        // Consecutive windows share columns.
        for pair in truths.windows(2) {
            let end = pair[0].window_start_col + parts[0].width as f64;
            assert!(pair[1].window_start_col < end, "parts should overlap");
        }
    }

    #[test]
    fn split_is_reproducible() {
        let film = make_synthetic_film(&FilmLayout { width: 800, height: 200, ..Default::default() }, 3, None);
        let (pa, ta) = split_into_scan_parts(&film, 80, 77);
        let (pb, tb) = split_into_scan_parts(&film, 80, 77);
        for (a, b) in pa.iter().zip(&pb) {
            // Bit-level comparison; edge pixels are NaN and NaN != NaN.
            let bits = |img: &GrayImage| -> Vec<u32> {
                img.data().iter().map(|v| v.to_bits()).collect()
            };
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(
            serde_json::to_string(&ta).unwrap(),
            serde_json::to_string(&tb).unwrap()
        );
    }
}
