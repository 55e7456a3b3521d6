//! Separable smoothing and robust 1-D filtering.

use super::GrayImage;

/// Separable Gaussian blur with kernel radius `ceil(3 sigma)`. `NaN` pixels
/// stay `NaN` and are excluded from neighboring averages (normalized
/// convolution), so film edges do not bleed inward.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp() as f32)
        .collect();

    let pass = |src: &GrayImage, horizontal: bool| -> GrayImage {
        GrayImage::from_fn(src.width, src.height, |c, r| {
            if src.get(c, r).is_nan() {
                return f32::NAN;
            }
            let mut acc = 0.0f32;
            let mut wsum = 0.0f32;
            for (k, &w) in kernel.iter().enumerate() {
                let off = k as i64 - radius;
                let (cc, rr) = if horizontal {
                    (c as i64 + off, r as i64)
                } else {
                    (c as i64, r as i64 + off)
                };
                if cc < 0 || rr < 0 || cc >= src.width as i64 || rr >= src.height as i64 {
                    continue;
                }
                let v = src.get(cc as usize, rr as usize);
                if v.is_finite() {
                    acc += w * v;
                    wsum += w;
                }
            }
            acc / wsum
        })
    };
    let h = pass(img, true);
    pass(&h, false)
}

/// Downscale by box (area) averaging: output cell `(i, j)` is the mean of
/// the source rectangle `[i*fx, (i+1)*fx) x [j*fy, (j+1)*fy)`. The factors
/// may be fractional; partial source pixels contribute proportionally to
/// their overlap. `NaN` source pixels are excluded, and an output cell with
/// no finite coverage comes out `NaN`. Factors must be at least 1.
pub fn area_downscale(src: &GrayImage, fx: f64, fy: f64) -> GrayImage {
    assert!(fx >= 1.0 && fy >= 1.0, "area averaging only shrinks");
    let wo = ((src.width as f64 / fx).ceil() as usize).max(1);
    let ho = ((src.height as f64 / fy).ceil() as usize).max(1);
    let mut acc = vec![0.0f64; wo * ho];
    let mut wsum = vec![0.0f64; wo * ho];

    // A source pixel spans less than one output cell, so it lands in at most
    // two cells per axis; weights are its overlap fractions.
    let split = |p: usize, f: f64, n: usize| -> [(usize, f64); 2] {
        let lo = p as f64 / f;
        let hi = (p + 1) as f64 / f;
        let i0 = (lo.floor() as usize).min(n - 1);
        let boundary = (i0 + 1) as f64;
        if hi <= boundary || i0 + 1 >= n {
            [(i0, 1.0), (i0, 0.0)]
        } else {
            let first = (boundary - lo) / (hi - lo);
            [(i0, first), (i0 + 1, 1.0 - first)]
        }
    };

    for r in 0..src.height {
        let rows = split(r, fy, ho);
        for c in 0..src.width {
            let v = src.get(c, r);
            if !v.is_finite() {
                continue;
            }
            for &(oi, wx) in &split(c, fx, wo) {
                for &(oj, wy) in &rows {
                    let w = wx * wy;
                    if w > 0.0 {
                        acc[oj * wo + oi] += v as f64 * w;
                        wsum[oj * wo + oi] += w;
                    }
                }
            }
        }
    }
    let data = acc
        .iter()
        .zip(&wsum)
        .map(|(a, w)| if *w > 1e-12 { (a / w) as f32 } else { f32::NAN })
        .collect();
    GrayImage::from_data(wo, ho, data).expect("sized to match")
}

/// Sliding-window median of a 1-D signal. The window spans
/// `[i - half, i + half]` clipped to the signal; `NaN` entries are excluded
/// from each window and produce `NaN` only where the whole window is empty.
pub fn sliding_median(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut window: Vec<f64> = Vec::with_capacity(2 * half + 2);
    let mut out = Vec::with_capacity(n);

    let insert = |w: &mut Vec<f64>, v: f64| {
        if v.is_finite() {
            let pos = w.partition_point(|x| *x < v);
            w.insert(pos, v);
        }
    };
    let remove = |w: &mut Vec<f64>, v: f64| {
        if v.is_finite() {
            let pos = w.partition_point(|x| *x < v);
            debug_assert!(pos < w.len() && w[pos] == v);
            w.remove(pos);
        }
    };

    for v in values.iter().take((half + 1).min(n)) {
        insert(&mut window, *v);
    }
    for i in 0..n {
        out.push(match window.len() {
            0 => f64::NAN,
            m if m % 2 == 1 => window[m / 2],
            m => 0.5 * (window[m / 2 - 1] + window[m / 2]),
        });
        // Slide: add the element entering on the right, drop the one leaving
        // on the left.
        if i + half + 1 < n {
            insert(&mut window, values[i + half + 1]);
        }
        if i >= half {
            remove(&mut window, values[i - half]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constant() {
        let img = GrayImage::from_fn(16, 12, |_, _| 0.7);
        let out = gaussian_blur(&img, 2.0);
        for &v in out.data() {
            assert!((v - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_reduces_variance() {
        let img = GrayImage::from_fn(32, 32, |c, r| if (c + r) % 2 == 0 { 1.0 } else { 0.0 });
        let out = gaussian_blur(&img, 1.5);
        let (_, s_in) = img.mean_std();
        let (_, s_out) = out.mean_std();
        assert!(s_out < 0.2 * s_in);
    }

    #[test]
    fn blur_keeps_nan_islands() {
        let mut img = GrayImage::from_fn(9, 9, |_, _| 1.0);
        img.set(4, 4, f32::NAN);
        let out = gaussian_blur(&img, 1.0);
        assert!(out.get(4, 4).is_nan());
        // Neighbors renormalize instead of absorbing the NaN.
        assert!((out.get(3, 4) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn downscale_preserves_constant_and_block_means() {
        let flat = GrayImage::from_fn(10, 8, |_, _| 0.4);
        let out = area_downscale(&flat, 2.0, 2.0);
        assert_eq!((out.width, out.height), (5, 4));
        for &v in out.data() {
            assert!((v - 0.4).abs() < 1e-6);
        }

        let ramp = GrayImage::from_fn(4, 4, |c, r| (r * 4 + c) as f32);
        let out = area_downscale(&ramp, 2.0, 2.0);
        assert_eq!(out.get(0, 0), 2.5); // mean of 0, 1, 4, 5
        assert_eq!(out.get(1, 1), 12.5); // mean of 10, 11, 14, 15
    }

    #[test]
    fn downscale_handles_fractional_factors() {
        // v(c) = c as a step function; compare against the exact integral
        // over each output span.
        let img = GrayImage::from_fn(10, 1, |c, _| c as f32);
        let out = area_downscale(&img, 2.5, 1.0);
        assert_eq!(out.width, 4);
        // Span [0, 2.5): (0*1 + 1*1 + 2*0.5) / 2.5 = 0.8.
        assert!((out.get(0, 0) - 0.8).abs() < 1e-6, "{}", out.get(0, 0));
        // Span [2.5, 5.0): (2*0.5 + 3*1 + 4*1) / 2.5 = 3.2.
        assert!((out.get(1, 0) - 3.2).abs() < 1e-6, "{}", out.get(1, 0));
    }

    #[test]
    fn downscale_skips_nan_and_covers_partial_cells() {
        let mut img = GrayImage::from_fn(4, 3, |c, r| (r * 4 + c) as f32);
        img.set(0, 0, f32::NAN);
        let out = area_downscale(&img, 2.0, 2.0);
        assert_eq!((out.width, out.height), (2, 2));
        // Block (0,0) averages the three finite survivors 1, 4, 5.
        assert!((out.get(0, 0) - 10.0 / 3.0).abs() < 1e-6);
        // The bottom row cells only cover source row 2.
        assert_eq!(out.get(0, 1), 8.5);
        assert_eq!(out.get(1, 1), 10.5);

        let hole = GrayImage::from_fn(4, 4, |c, r| {
            if c < 2 && r < 2 { f32::NAN } else { 1.0 }
        });
        assert!(area_downscale(&hole, 2.0, 2.0).get(0, 0).is_nan());
    }

    #[test]
    fn sliding_median_removes_impulses() {
        let mut v: Vec<f64> = (0..50).map(|i| i as f64).collect();
        v[20] = 500.0;
        v[21] = -300.0;
        let f = sliding_median(&v, 5);
        for i in 10..40 {
            assert!((f[i] - i as f64).abs() <= 1.0, "at {i}: {}", f[i]);
        }
    }

    #[test]
    fn sliding_median_window_edges() {
        let v = [5.0, 1.0, 9.0];
        // i=0 window [5,1] -> 3; i=1 window [5,1,9] -> 5; i=2 window [1,9] -> 5.
        assert_eq!(sliding_median(&v, 1), vec![3.0, 5.0, 5.0]);
    }

    #[test]
    fn sliding_median_skips_nan() {
        let v = [1.0, f64::NAN, 3.0, 4.0, 5.0];
        let f = sliding_median(&v, 1);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 2.0);
        assert_eq!(f[2], 3.5);
    }
}
