//! Robust summary statistics.

use super::GeoError;

/// Median of the finite values in `data`. Non-finite entries are skipped.
/// For an even count the two central values are averaged.
pub fn median(data: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = data.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Normalized median absolute deviation: `1.4826 * median(|x - median(x)|)`.
///
/// The scale factor makes the estimate consistent with the standard deviation
/// under a normal distribution. Requires at least two finite values.
pub fn nmad(data: &[f64]) -> Result<f64, GeoError> {
    let finite: Vec<f64> = data.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.len() < 2 {
        return Err(GeoError::InsufficientData {
            needed: 2,
            got: finite.len(),
        });
    }
    let med = median(&finite).unwrap();
    let dev: Vec<f64> = finite.iter().map(|x| (x - med).abs()).collect();
    Ok(1.4826 * median(&dev).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN, 5.0]), Some(5.0));
        assert_eq!(median(&[f64::NAN]), None);
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn nmad_hand_computed() {
        // median = 3, |dev| = [2, 1, 0, 1, 97], MAD = 1.
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert!((nmad(&v).unwrap() - 1.4826).abs() < 1e-12);
    }

    #[test]
    fn nmad_rejects_degenerate_input() {
        assert!(nmad(&[1.0]).is_err());
        assert!(nmad(&[1.0, f64::NAN]).is_err());
        assert!(nmad(&[]).is_err());
    }

    #[test]
    fn nmad_ignores_nan() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0, f64::NAN];
        let w = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(nmad(&v).unwrap(), nmad(&w).unwrap());
    }

    proptest! {
        /// NMAD is translation invariant and scales with |c|.
        #[test]
        fn nmad_affine_equivariance(
            mut v in proptest::collection::vec(-1e3f64..1e3, 2..40),
            shift in -1e3f64..1e3,
            scale in -10.0f64..10.0,
        ) {
            let base = nmad(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            prop_assert!((nmad(&shifted).unwrap() - base).abs() < 1e-9);
            v.iter_mut().for_each(|x| *x *= scale);
            prop_assert!((nmad(&v).unwrap() - scale.abs() * base).abs() < 1e-9 * (1.0 + base));
        }
    }
}
