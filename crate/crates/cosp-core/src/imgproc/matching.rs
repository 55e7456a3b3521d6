//! Normalized cross-correlation template matching.

use super::{GrayImage, ImageError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccMatch {
    /// Column of the template origin in the search image, subpixel.
    pub x: f64,
    /// Row of the template origin in the search image, subpixel.
    pub y: f64,
    /// Peak correlation coefficient in `[-1, 1]`.
    pub score: f64,
}

/// Slide `template` over every integer position inside `search` and return
/// the position with the highest normalized cross-correlation, refined to
/// subpixel by a parabola fit over the score surface.
///
/// Windows touching `NaN` pixels are skipped; `None` is returned when no
/// valid window exists or the best window has no contrast.
pub fn ncc_match(template: &GrayImage, search: &GrayImage) -> Result<Option<NccMatch>, ImageError> {
    let (tw, th) = (template.width, template.height);
    if tw > search.width || th > search.height {
        return Err(ImageError::TemplateTooLarge(
            tw,
            th,
            search.width,
            search.height,
        ));
    }

    let mut t_sum = 0.0f64;
    let mut t_sq = 0.0f64;
    for &v in template.data() {
        if !v.is_finite() {
            return Ok(None);
        }
        t_sum += v as f64;
        t_sq += (v as f64) * (v as f64);
    }
    let n = (tw * th) as f64;
    let t_mean = t_sum / n;
    let t_var = t_sq / n - t_mean * t_mean;
    if t_var <= 1e-12 {
        return Ok(None);
    }

    let cols = search.width - tw + 1;
    let rows = search.height - th + 1;
    let mut scores = vec![f64::NEG_INFINITY; cols * rows];
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for oy in 0..rows {
        for ox in 0..cols {
            let mut s_sum = 0.0f64;
            let mut s_sq = 0.0f64;
            let mut cross = 0.0f64;
            let mut valid = true;
            'win: for r in 0..th {
                for c in 0..tw {
                    let sv = search.get(ox + c, oy + r) as f64;
                    if !sv.is_finite() {
                        valid = false;
                        break 'win;
                    }
                    let tv = template.get(c, r) as f64;
                    s_sum += sv;
                    s_sq += sv * sv;
                    cross += sv * tv;
                }
            }
            if !valid {
                continue;
            }
            let s_mean = s_sum / n;
            let s_var = s_sq / n - s_mean * s_mean;
            if s_var <= 1e-12 {
                continue;
            }
            let score = (cross / n - t_mean * s_mean) / (t_var * s_var).sqrt();
            scores[oy * cols + ox] = score;
            if score > best.2 {
                best = (ox, oy, score);
            }
        }
    }
    if !best.2.is_finite() {
        return Ok(None);
    }

    let subpixel = |m1: f64, c0: f64, p1: f64| {
        if !m1.is_finite() || !p1.is_finite() {
            return 0.0;
        }
        let denom = m1 - 2.0 * c0 + p1;
        if denom.abs() < 1e-12 {
            0.0
        } else {
            (0.5 * (m1 - p1) / denom).clamp(-0.5, 0.5)
        }
    };
    let (bx, by, score) = best;
    let sx = if bx > 0 && bx + 1 < cols {
        subpixel(scores[by * cols + bx - 1], score, scores[by * cols + bx + 1])
    } else {
        0.0
    };
    let sy = if by > 0 && by + 1 < rows {
        subpixel(scores[(by - 1) * cols + bx], score, scores[(by + 1) * cols + bx])
    } else {
        0.0
    };
    Ok(Some(NccMatch {
        x: bx as f64 + sx,
        y: by as f64 + sy,
        score,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(w: usize, h: usize) -> GrayImage {
        crate::imgproc::testutil::hash_noise(w, h, 11)
    }

    #[test]
    fn finds_exact_integer_location() {
        let search = scene(64, 48);
        let template = search.crop(21, 13, 16, 16);
        let m = ncc_match(&template, &search).unwrap().unwrap();
        assert!((m.x - 21.0).abs() < 0.05, "x {}", m.x);
        assert!((m.y - 13.0).abs() < 0.05, "y {}", m.y);
        assert!(m.score > 0.999);
    }

    #[test]
    fn finds_subpixel_location() {
        let search = scene(64, 64);
        // Template sampled at a fractional offset of the same scene.
        let (fx, fy) = (18.3, 22.6);
        let template = GrayImage::from_fn(16, 16, |c, r| {
            search
                .sample(fx + c as f64 + 0.5, fy + r as f64 + 0.5)
                .unwrap()
        });
        let m = ncc_match(&template, &search).unwrap().unwrap();
        assert!((m.x - fx).abs() < 0.2, "x {}", m.x);
        assert!((m.y - fy).abs() < 0.2, "y {}", m.y);
    }

    #[test]
    fn flat_inputs_yield_none() {
        let flat = GrayImage::from_fn(16, 16, |_, _| 0.5);
        let search = scene(32, 32);
        assert!(ncc_match(&flat, &search).unwrap().is_none());
    }

    #[test]
    fn nan_windows_are_skipped() {
        let mut search = scene(40, 40);
        let template = search.crop(10, 10, 12, 12);
        // Poison the true location; the matcher must settle elsewhere.
        search.set(15, 15, f32::NAN);
        let m = ncc_match(&template, &search).unwrap().unwrap();
        let d = ((m.x - 10.0).powi(2) + (m.y - 10.0).powi(2)).sqrt();
        assert!(d > 1.0, "should have been pushed off the poisoned window");
    }

    #[test]
    fn oversized_template_errors() {
        let t = GrayImage::new(20, 20);
        let s = GrayImage::new(16, 16);
        assert!(ncc_match(&t, &s).is_err());
    }
}
