//! Tracing the two bright reference stripes along the film edges.

use serde::{Deserialize, Serialize};

use super::{align, FilmprepError};
use crate::imgproc::{gaussian_blur, sliding_median, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StripeSide {
    Top,
    Bottom,
}

impl std::fmt::Display for StripeSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StripeSide::Top => "top",
            StripeSide::Bottom => "bottom",
        })
    }
}

/// Subpixel stripe center per film column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StripeTrace {
    pub side: StripeSide,
    /// Stripe row per column in pixel coordinates; `NaN` where unknown.
    pub positions: Vec<f64>,
    /// Whether the column's position was measured there, as opposed to
    /// being filled in from the neighborhood median.
    pub observed: Vec<bool>,
}

impl StripeTrace {
    /// Fraction of columns with a directly measured stripe position.
    pub fn observed_fraction(&self) -> f64 {
        if self.observed.is_empty() {
            return 0.0;
        }
        self.observed.iter().filter(|&&o| o).count() as f64 / self.observed.len() as f64
    }
}

/// Vertical smoothing applied before peak detection.
const SMOOTH_SIGMA_PX: f64 = 2.0;
/// Half-width of the sliding median used to screen the raw trace; the full
/// window spans 501 columns, long enough to vote down speck clusters while
/// leaving the slow film bend untouched.
const MEDIAN_HALF_WINDOW: usize = 250;
/// Raw positions further than this many window NMADs from the local median
/// are replaced. The scale adapts to the bend: where the stripe curves the
/// window median lags behind and plain distance would reject good columns.
const OUTLIER_NMAD_FACTOR: f64 = 3.0;
/// Lower bound on the rejection distance, pixels, so noise-free traces do
/// not reject themselves.
const OUTLIER_FLOOR_PX: f64 = 0.5;
/// Required fraction of measured (not median-filled) columns per stripe.
const MIN_OBSERVED_FRACTION: f64 = 0.95;
/// A stripe peak must rise this far above its surroundings 5 rows away.
const MIN_PEAK_CONTRAST: f32 = 0.08;

/// Follow the upper and lower reference stripes across all film columns.
///
/// Each column is smoothed vertically, the exposed band is located as the
/// longest run of above-threshold rows, and the stripe is the brightest
/// peak in the margin outside the band, refined to subpixel by the zero
/// crossing of the vertical intensity gradient. Raw positions are screened
/// against a 501-column sliding median; columns that disagree by more than
/// three window NMADs take the median value instead and count as
/// unobserved.
pub fn trace_stripes(film: &GrayImage) -> Result<(StripeTrace, StripeTrace), FilmprepError> {
    let threshold = align::exposure_threshold(film)?;
    let blurred = gaussian_blur(film, SMOOTH_SIGMA_PX);

    let mut raw_top = vec![f64::NAN; film.width];
    let mut raw_bottom = vec![f64::NAN; film.width];
    let mut film_cols = 0usize;
    for col in 0..film.width {
        if let Some((band_lo, band_hi)) = exposed_band(&blurred, col, threshold) {
            film_cols += 1;
            raw_top[col] = stripe_peak(&blurred, col, 1, band_lo.saturating_sub(2));
            raw_bottom[col] = stripe_peak(&blurred, col, band_hi + 3, film.height - 1);
        }
    }

    // Columns with no film at all (blank canvas around a rotated or
    // stitched scan) do not count against the stripe coverage.
    let build = |raw: Vec<f64>, side: StripeSide| -> Result<StripeTrace, FilmprepError> {
        let median = sliding_median(&raw, MEDIAN_HALF_WINDOW);
        let deviation: Vec<f64> =
            raw.iter().zip(&median).map(|(r, m)| (r - m).abs()).collect();
        let spread = sliding_median(&deviation, MEDIAN_HALF_WINDOW);
        let mut positions = Vec::with_capacity(raw.len());
        let mut observed = Vec::with_capacity(raw.len());
        for ((r, m), s) in raw.iter().zip(&median).zip(&spread) {
            let limit = (OUTLIER_NMAD_FACTOR * 1.4826 * s).max(OUTLIER_FLOOR_PX);
            let keep = r.is_finite() && m.is_finite() && (r - m).abs() <= limit;
            positions.push(if keep { *r } else { *m });
            observed.push(keep);
        }
        let trace = StripeTrace { side, positions, observed };
        let measured = trace.observed.iter().filter(|&&o| o).count();
        if film_cols == 0 || (measured as f64) < MIN_OBSERVED_FRACTION * film_cols as f64 {
            return Err(FilmprepError::StripesNotFound { side });
        }
        Ok(trace)
    };

    Ok((build(raw_top, StripeSide::Top)?, build(raw_bottom, StripeSide::Bottom)?))
}

/// Longest run of above-threshold rows in a column: the exposed band.
fn exposed_band(blurred: &GrayImage, col: usize, threshold: f32) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut run_start: Option<usize> = None;
    for row in 0..=blurred.height {
        let on = row < blurred.height && {
            let v = blurred.get(col, row);
            v.is_finite() && v >= threshold
        };
        match (on, run_start) {
            (true, None) => run_start = Some(row),
            (false, Some(s)) => {
                if best.is_none_or(|(b0, b1)| row - s > b1 - b0) {
                    best = Some((s, row - 1));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    best
}

/// Subpixel position of the brightest sufficiently contrasted peak in the
/// row range `[lo, hi)` of one column, `NaN` when there is none.
fn stripe_peak(blurred: &GrayImage, col: usize, lo: usize, hi: usize) -> f64 {
    let hi = hi.min(blurred.height - 1);
    if lo + 1 >= hi {
        return f64::NAN;
    }
    let value = |row: usize| blurred.get(col, row);

    let mut peak: Option<(usize, f32)> = None;
    for row in lo..hi {
        let v = value(row);
        if v.is_finite() && peak.is_none_or(|(_, pv)| v > pv) {
            peak = Some((row, v));
        }
    }
    let Some((r, v)) = peak else { return f64::NAN };

    // The peak must stand clear of its neighborhood on both sides, and the
    // smoothing support around it must be real film: near the film
    // boundary the normalized blur loses one side and the peak comes out
    // biased.
    if r < lo + 5 || r + 5 >= hi + 1 {
        return f64::NAN;
    }
    let support = 8; // blur radius plus safety margin
    if r < support || r + support >= blurred.height {
        return f64::NAN;
    }
    if (r - support..=r + support).any(|rr| !value(rr).is_finite()) {
        return f64::NAN;
    }
    if v - value(r - 5) < MIN_PEAK_CONTRAST || v - value(r + 5) < MIN_PEAK_CONTRAST {
        return f64::NAN;
    }

    // Zero crossing of the centered vertical gradient around the peak.
    let grad = |row: usize| (value(row + 1) - value(row - 1)) as f64 / 2.0;
    for r0 in [r - 1, r] {
        let g0 = grad(r0);
        let g1 = grad(r0 + 1);
        if g0.is_finite() && g1.is_finite() && g0 >= 0.0 && g1 < 0.0 && g0 - g1 > 0.0 {
            return r0 as f64 + 0.5 + g0 / (g0 - g1);
        }
    }
    f64::NAN
}
