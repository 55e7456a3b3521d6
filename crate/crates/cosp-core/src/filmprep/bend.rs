//! Column-wise bending correction and final trimming of a film raster.

use serde::{Deserialize, Serialize};

use super::{FilmprepError, StripeSide, StripeTrace};
use crate::imgproc::{warp_into, GrayImage};
use crate::pancam::PixelPoint;

/// Longest invalid trace run that is still bridged by interpolation.
pub const MAX_TRACE_GAP_COLS: usize = 64;

/// The per-column row mapping that straightens the traced stripes.
///
/// Between the stripes the film is stretched linearly in row so both traces
/// land on their mean row; beyond them the same per-column affine map is
/// extrapolated. Besides resampling the raster, the model corrects point
/// measurements taken on the uncorrected film via [`correct_point`]
/// (BendingModel::correct_point).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BendingModel {
    top: Vec<f64>,
    bottom: Vec<f64>,
    pub target_top: f64,
    pub target_bottom: f64,
}

impl BendingModel {
    /// Build the mapping from the two stripe traces. Only measured columns
    /// are trusted; the rest are bridged linearly from their neighbors, up
    /// to [`MAX_TRACE_GAP_COLS`] for interior runs. The tracer's own
    /// median fill spans half the film and can sit a pixel off the local
    /// trend right where a trace ends.
    pub fn from_traces(top: &StripeTrace, bottom: &StripeTrace) -> Result<Self, FilmprepError> {
        let measured = |t: &StripeTrace| -> Vec<f64> {
            t.positions
                .iter()
                .zip(&t.observed)
                .map(|(p, &o)| if o { *p } else { f64::NAN })
                .collect()
        };
        let top_filled = fill_gaps(&measured(top), top.side)?;
        let bottom_filled = fill_gaps(&measured(bottom), bottom.side)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let model = BendingModel {
            target_top: mean(&top_filled),
            target_bottom: mean(&bottom_filled),
            top: top_filled,
            bottom: bottom_filled,
        };
        debug_assert!(model.target_bottom > model.target_top + 1.0);
        Ok(model)
    }

    fn trace_at(trace: &[f64], x: f64) -> f64 {
        let i0 = ((x - 0.5).floor() as i64).clamp(0, trace.len() as i64 - 2) as usize;
        let f = x - 0.5 - i0 as f64;
        trace[i0] * (1.0 - f) + trace[i0 + 1] * f
    }

    /// Row in the uncorrected film that a corrected-film row pulls from.
    pub fn source_row(&self, x: f64, row: f64) -> f64 {
        let t = Self::trace_at(&self.top, x);
        let b = Self::trace_at(&self.bottom, x);
        t + (row - self.target_top) * (b - t) / (self.target_bottom - self.target_top)
    }

    /// Corrected-film row of a point measured on the uncorrected film.
    pub fn corrected_row(&self, x: f64, row: f64) -> f64 {
        let t = Self::trace_at(&self.top, x);
        let b = Self::trace_at(&self.bottom, x);
        self.target_top + (row - t) * (self.target_bottom - self.target_top) / (b - t)
    }

    /// Map a point measurement from the uncorrected to the corrected film.
    pub fn correct_point(&self, p: PixelPoint) -> PixelPoint {
        PixelPoint::new(p.col, self.corrected_row(p.col, p.row))
    }
}

fn fill_gaps(positions: &[f64], side: StripeSide) -> Result<Vec<f64>, FilmprepError> {
    let n = positions.len();
    let mut filled = positions.to_vec();
    let mut col = 0usize;
    while col < n {
        if filled[col].is_finite() {
            col += 1;
            continue;
        }
        let start = col;
        while col < n && !filled[col].is_finite() {
            col += 1;
        }
        let len = col - start;
        let left = start.checked_sub(1).map(|i| filled[i]);
        let right = (col < n).then(|| filled[col]);
        match (left, right) {
            // Interior gaps are bridged linearly, but only over a span the
            // neighborhood can still vouch for.
            (Some(l), Some(r)) => {
                if len > MAX_TRACE_GAP_COLS {
                    return Err(FilmprepError::TraceGap { side, start_col: start, len });
                }
                for (k, f) in filled[start..col].iter_mut().enumerate() {
                    let t = (k + 1) as f64 / (len + 1) as f64;
                    *f = l * (1.0 - t) + r * t;
                }
            }
            // Runs touching the trace ends lie beyond the film (blank
            // canvas); extend the nearest measured row.
            (Some(l), None) => filled[start..col].fill(l),
            (None, Some(r)) => filled[start..col].fill(r),
            (None, None) => {
                return Err(FilmprepError::TraceGap { side, start_col: 0, len: n })
            }
        }
    }
    Ok(filled)
}

/// Straighten a bent film raster using the traced reference stripes.
///
/// Every column is resampled vertically so the stripe traces become two
/// straight, mutually parallel lines at their mean rows. Returns the
/// corrected raster together with the model, which is also needed to move
/// point measurements into the corrected frame.
pub fn correct_bending(
    film: &GrayImage,
    top: &StripeTrace,
    bottom: &StripeTrace,
) -> Result<(GrayImage, BendingModel), FilmprepError> {
    let model = BendingModel::from_traces(top, bottom)?;
    let corrected = warp_into(film, film.width, film.height, |x, y| {
        Some((x, model.source_row(x, y)))
    });
    Ok((corrected, model))
}

/// Pixels to cut from each film end: 1.5 cm at the given scan resolution.
pub fn clip_columns(pixel_pitch_mm: f64) -> usize {
    (15.0 / pixel_pitch_mm).round() as usize
}

/// Clip the unusable 1.5 cm at both film ends and bring the scan into fore
/// orientation: aft film is exposed upside down relative to fore, so aft
/// scans are rotated by 180 degrees.
pub fn finalize(film: &GrayImage, fore: bool, pixel_pitch_mm: f64) -> GrayImage {
    let clip = clip_columns(pixel_pitch_mm);
    assert!(film.width > 2 * clip, "film narrower than the two clip margins");
    let w = film.width - 2 * clip;
    if fore {
        film.crop(clip as i64, 0, w, film.height)
    } else {
        GrayImage::from_fn(w, film.height, |c, r| {
            film.get(film.width - clip - 1 - c, film.height - 1 - r)
        })
    }
}
