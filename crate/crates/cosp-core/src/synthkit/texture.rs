//! Deterministic procedural ground texture.
//!
//! Multi-octave value noise on a hashed lattice. The field is smooth (C1
//! from smoothstep interpolation), broadband enough for correlation and
//! census matching, and depends only on `(seed, coordinates)` so the two
//! images of a stereo pair observe exactly the same ground albedo.

use serde::{Deserialize, Serialize};

/// splitmix64 finalizer; decorrelates lattice coordinates.
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// A scalar noise field over ground coordinates in metres.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextureField {
    seed: u64,
    /// Wavelength of the coarsest octave, metres.
    pub base_wavelength_m: f64,
    pub octaves: u32,
}

impl TextureField {
    pub fn new(seed: u64, base_wavelength_m: f64) -> Self {
        TextureField { seed, base_wavelength_m, octaves: 5 }
    }

    fn lattice(&self, ix: i64, iy: i64, octave: u32) -> f64 {
        let h = mix64(
            (ix as u64)
                .wrapping_mul(0x8535_7d4b_9261_3c2d)
                .wrapping_add((iy as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
                .wrapping_add((octave as u64) << 56)
                ^ self.seed,
        );
        // 53 high bits to a float in [0, 1).
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn octave_value(&self, x: f64, y: f64, octave: u32) -> f64 {
        let ix = x.floor();
        let iy = y.floor();
        let fx = smoothstep(x - ix);
        let fy = smoothstep(y - iy);
        let (ix, iy) = (ix as i64, iy as i64);
        let v00 = self.lattice(ix, iy, octave);
        let v10 = self.lattice(ix + 1, iy, octave);
        let v01 = self.lattice(ix, iy + 1, octave);
        let v11 = self.lattice(ix + 1, iy + 1, octave);
        let a = v00 + (v10 - v00) * fx;
        let b = v01 + (v11 - v01) * fx;
        a + (b - a) * fy
    }

    /// Albedo in `[0, 1]` at local east-north metres.
    pub fn value(&self, east: f64, north: f64) -> f64 {
        let mut freq = 1.0 / self.base_wavelength_m;
        let mut amp = 1.0;
        let mut total = 0.0;
        let mut norm = 0.0;
        for octave in 0..self.octaves {
            total += amp * self.octave_value(east * freq, north * freq, octave);
            norm += amp;
            // Non-integer lacunarity avoids lattice alignment across octaves.
            freq *= 1.97;
            amp *= 0.55;
        }
        // Keep a little headroom so additive noise rarely clips.
        0.06 + 0.88 * (total / norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_are_deterministic_and_bounded() {
        let t = TextureField::new(99, 200.0);
        let u = TextureField::new(99, 200.0);
        let w = TextureField::new(100, 200.0);
        let mut differs = false;
        for i in 0..500 {
            let x = i as f64 * 13.7 - 3000.0;
            let y = i as f64 * 7.3 - 1500.0;
            let v = t.value(x, y);
            assert!((0.0..=1.0).contains(&v), "{v}");
            assert_eq!(v, u.value(x, y));
            differs |= v != w.value(x, y);
        }
        assert!(differs, "different seeds should give different fields");
    }

    #[test]
    fn field_is_continuous() {
        let t = TextureField::new(7, 150.0);
        // Steps of 1 cm across lattice boundaries should move the value very
        // little; a jump would break subpixel matching.
        for i in 0..2000 {
            let x = -100.0 + i as f64 * 0.01;
            let a = t.value(x, 35.0);
            let b = t.value(x + 0.01, 35.0);
            assert!((a - b).abs() < 5e-3, "jump at {x}: {a} vs {b}");
        }
    }

    #[test]
    fn field_has_variation_at_metre_scale() {
        // Matching needs local contrast: the spread over a 60 m window must
        // be well above the noise floor.
        let t = TextureField::new(3, 180.0);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..60 {
            for j in 0..60 {
                let v = t.value(i as f64, j as f64);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert!(hi - lo > 0.05, "window contrast {}", hi - lo);
    }
}
