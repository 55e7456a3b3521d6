//! Inverse-mapped image resampling.

use rayon::prelude::*;

use super::GrayImage;

/// Fill an output image of the given size by pulling each output pixel from
/// the source through `map`, which takes output pixel-center coordinates and
/// returns source pixel coordinates. Unmapped pixels become `NaN`.
///
/// Rows are processed in parallel; the result does not depend on the thread
/// count because each output pixel is written exactly once.
pub fn warp_into<F>(src: &GrayImage, out_width: usize, out_height: usize, map: F) -> GrayImage
where
    F: Fn(f64, f64) -> Option<(f64, f64)> + Sync,
{
    let mut out = GrayImage::new(out_width, out_height);
    out.data_mut()
        .par_chunks_exact_mut(out_width)
        .enumerate()
        .for_each(|(row, line)| {
            let y = row as f64 + 0.5;
            for (col, px) in line.iter_mut().enumerate() {
                let x = col as f64 + 0.5;
                *px = map(x, y)
                    .and_then(|(sx, sy)| src.sample(sx, sy))
                    .unwrap_or(f32::NAN);
            }
        });
    out
}
