//! Skew removal: rotate a film scan so the exposed band runs along rows.

use super::FilmprepError;
use crate::imgproc::{warp_into, GrayImage};

/// A de-skewed film raster plus how it was obtained.
#[derive(Debug)]
pub struct AlignedFilm {
    pub image: GrayImage,
    /// The skew that was measured and removed, radians. Positive means the
    /// film's long axis was tilted toward increasing row with column.
    pub rotation_rad: f64,
    /// Intensity separating exposed film from the unexposed margin.
    pub threshold: f32,
    /// Centroid of the exposed area in the input, the rotation pivot.
    pub centroid: [f64; 2],
}

const BINS: usize = 256;

/// The histogram valley at the threshold must be at most this fraction of
/// the smaller mode peak, otherwise the histogram counts as unimodal.
const MAX_VALLEY_RATIO: f64 = 0.5;

/// Measure the principal-axis skew of the exposed (bright) area and rotate
/// the scan about the area's centroid so that axis runs along rows.
///
/// The exposed area is separated from the dark margins by the threshold
/// that maximizes the between-class variance of the intensity histogram.
/// Pixels outside the scan (`NaN`) are ignored throughout.
pub fn align_exposed_area(film: &GrayImage) -> Result<AlignedFilm, FilmprepError> {
    let threshold = exposure_threshold(film)?;

    // Second-order moments of the thresholded area.
    let (mut n, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    for (row, line) in film.rows().enumerate() {
        for (col, &v) in line.iter().enumerate() {
            if v.is_finite() && v >= threshold {
                n += 1.0;
                sx += col as f64 + 0.5;
                sy += row as f64 + 0.5;
            }
        }
    }
    let (cx, cy) = (sx / n, sy / n);
    let (mut mxx, mut myy, mut mxy) = (0.0f64, 0.0f64, 0.0f64);
    for (row, line) in film.rows().enumerate() {
        for (col, &v) in line.iter().enumerate() {
            if v.is_finite() && v >= threshold {
                let dx = col as f64 + 0.5 - cx;
                let dy = row as f64 + 0.5 - cy;
                mxx += dx * dx;
                myy += dy * dy;
                mxy += dx * dy;
            }
        }
    }
    let rotation_rad = 0.5 * (2.0 * mxy).atan2(mxx - myy);

    let (s, c) = rotation_rad.sin_cos();
    let image = warp_into(film, film.width, film.height, |x, y| {
        let dx = x - cx;
        let dy = y - cy;
        Some((cx + c * dx - s * dy, cy + s * dx + c * dy))
    });

    Ok(AlignedFilm { image, rotation_rad, threshold, centroid: [cx, cy] })
}

/// Otsu threshold over the finite pixels, refused when the histogram shows
/// no two-mode structure.
pub(super) fn exposure_threshold(film: &GrayImage) -> Result<f32, FilmprepError> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in film.data() {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(hi - lo).is_finite() || hi - lo < 1e-6 {
        return Err(FilmprepError::ThresholdNotFound);
    }

    let scale = (BINS as f32 - 1e-3) / (hi - lo);
    let mut hist = [0.0f64; BINS];
    let mut total = 0.0f64;
    for &v in film.data() {
        if v.is_finite() {
            hist[((v - lo) * scale) as usize] += 1.0;
            total += 1.0;
        }
    }

    let grand_sum: f64 = hist.iter().enumerate().map(|(i, h)| i as f64 * h).sum();
    let (mut best_var, mut best_bin) = (-1.0f64, 0usize);
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    for (i, &h) in hist.iter().enumerate().take(BINS - 1) {
        w0 += h;
        sum0 += i as f64 * h;
        let w1 = total - w0;
        if w0 < total * 0.02 || w1 < total * 0.02 {
            continue;
        }
        let gap = sum0 / w0 - (grand_sum - sum0) / w1;
        let var = w0 * w1 * gap * gap;
        if var > best_var {
            best_var = var;
            best_bin = i;
        }
    }
    if best_var <= 0.0 {
        return Err(FilmprepError::ThresholdNotFound);
    }

    // Bimodality check: lightly smoothed counts must dip at the threshold
    // well below both mode peaks.
    let smooth = |i: usize| -> f64 {
        let a = i.saturating_sub(2);
        let b = (i + 2).min(BINS - 1);
        hist[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
    };
    let valley = (best_bin.saturating_sub(8)..=(best_bin + 8).min(BINS - 1))
        .map(smooth)
        .fold(f64::INFINITY, f64::min);
    let peak_lo = (0..=best_bin).map(smooth).fold(0.0f64, f64::max);
    let peak_hi = (best_bin + 1..BINS).map(smooth).fold(0.0f64, f64::max);
    if valley > MAX_VALLEY_RATIO * peak_lo.min(peak_hi) {
        return Err(FilmprepError::ThresholdNotFound);
    }

    Ok(lo + (best_bin as f32 + 1.0) / scale)
}
