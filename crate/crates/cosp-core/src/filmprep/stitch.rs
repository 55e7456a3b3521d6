//! Rigid mosaicking of the four overlapping scanner parts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FilmprepError, Rigid2D};
use crate::imgproc::GrayImage;

/// One correspondence across a seam, in pixel coordinates of the two parts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeamMatch {
    /// Point in the left (earlier) part.
    pub left: [f64; 2],
    /// The same film feature in the right (later) part.
    pub right: [f64; 2],
}

impl SeamMatch {
    pub fn new(left: [f64; 2], right: [f64; 2]) -> Self {
        SeamMatch { left, right }
    }
}

/// Correspondences for the three seams of a four-part scan.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StitchMatches {
    pub ab: Vec<SeamMatch>,
    pub bc: Vec<SeamMatch>,
    pub cd: Vec<SeamMatch>,
}

/// Result of [`stitch`]: the mosaic plus the recovered part placements.
#[derive(Debug)]
pub struct StitchedFilm {
    pub film: GrayImage,
    /// Part-to-film transforms for parts a..d. Part a anchors the frame.
    pub transforms: [Rigid2D; 4],
    /// RMS inlier residual per estimated seam: a-b, c-d, ab-cd.
    pub seam_rms_px: [f64; 3],
}

/// Width of the linear blending ramp along part borders, pixels.
const FEATHER_PX: f64 = 40.0;

/// Matches worse than three times the median residual are dropped and the
/// fit repeated; the floor keeps noise-free data from rejecting itself.
const REJECT_FLOOR_PX: f64 = 1e-6;

/// Smallest principal spread (pixels) below which the match set counts as
/// collinear.
const MIN_PRINCIPAL_SPREAD_PX: f64 = 0.5;

/// Least-squares rigid motion mapping `right` points onto `left` points,
/// with three rounds of residual-based outlier rejection. Returns the
/// transform and the RMS residual of the surviving matches.
fn fit_rigid(pairs: &[SeamMatch], seam: &str) -> Result<(Rigid2D, f64), FilmprepError> {
    let insufficient = |found: usize| FilmprepError::InsufficientMatches {
        seam: seam.to_string(),
        found,
    };
    if pairs.len() < 3 {
        return Err(insufficient(pairs.len()));
    }

    let solve = |keep: &[SeamMatch]| -> Rigid2D {
        let n = keep.len() as f64;
        let (mut pc, mut qc) = ([0.0f64; 2], [0.0f64; 2]);
        for m in keep {
            pc[0] += m.right[0];
            pc[1] += m.right[1];
            qc[0] += m.left[0];
            qc[1] += m.left[1];
        }
        pc = [pc[0] / n, pc[1] / n];
        qc = [qc[0] / n, qc[1] / n];
        let (mut dot, mut cross) = (0.0f64, 0.0f64);
        for m in keep {
            let p = [m.right[0] - pc[0], m.right[1] - pc[1]];
            let q = [m.left[0] - qc[0], m.left[1] - qc[1]];
            dot += p[0] * q[0] + p[1] * q[1];
            cross += p[0] * q[1] - p[1] * q[0];
        }
        let rotation_rad = cross.atan2(dot);
        let (s, c) = rotation_rad.sin_cos();
        Rigid2D {
            rotation_rad,
            tx: qc[0] - (c * pc[0] - s * pc[1]),
            ty: qc[1] - (s * pc[0] + c * pc[1]),
        }
    };
    let residual = |t: &Rigid2D, m: &SeamMatch| -> f64 {
        let (x, y) = t.apply(m.right[0], m.right[1]);
        ((x - m.left[0]).powi(2) + (y - m.left[1]).powi(2)).sqrt()
    };

    let mut keep: Vec<SeamMatch> = pairs.to_vec();
    let mut transform = solve(&keep);
    for _ in 0..3 {
        let mut res: Vec<f64> = keep.iter().map(|m| residual(&transform, m)).collect();
        res.sort_by(f64::total_cmp);
        let median = res[res.len() / 2];
        let threshold = (3.0 * median).max(REJECT_FLOOR_PX);
        let next: Vec<SeamMatch> = pairs
            .iter()
            .filter(|m| residual(&transform, m) <= threshold)
            .copied()
            .collect();
        if next.len() < 3 {
            return Err(insufficient(next.len()));
        }
        keep = next;
        transform = solve(&keep);
    }

    // A rigid fit from collinear points is formally determined but has no
    // redundancy across the seam, so it is refused.
    let n = keep.len() as f64;
    let mc = keep.iter().fold([0.0f64; 2], |a, m| [a[0] + m.right[0] / n, a[1] + m.right[1] / n]);
    let (mut sxx, mut syy, mut sxy) = (0.0f64, 0.0, 0.0);
    for m in &keep {
        let dx = m.right[0] - mc[0];
        let dy = m.right[1] - mc[1];
        sxx += dx * dx / n;
        syy += dy * dy / n;
        sxy += dx * dy / n;
    }
    let half_gap = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    let lambda_min = ((sxx + syy) / 2.0 - half_gap).max(0.0);
    if lambda_min.sqrt() < MIN_PRINCIPAL_SPREAD_PX {
        return Err(FilmprepError::DegenerateGeometry { seam: seam.to_string() });
    }

    let sse: f64 = keep.iter().map(|m| residual(&transform, m).powi(2)).sum();
    Ok((transform, (sse / keep.len() as f64).sqrt()))
}

/// Merge four overlapping scan parts into one film raster.
///
/// The two outer pairs are stitched first (a with b, c with d), then the
/// two half-mosaics are joined through the b-c correspondences; the joins
/// happen in transform space, so every pixel is resampled exactly once when
/// the mosaic is rendered. Part a anchors the film frame. Overlaps are
/// blended with a linear feather toward each part's border.
pub fn stitch(parts: &[GrayImage; 4], matches: &StitchMatches) -> Result<StitchedFilm, FilmprepError> {
    let (t_ab, rms_ab) = fit_rigid(&matches.ab, "a-b")?;
    let (t_cd, rms_cd) = fit_rigid(&matches.cd, "c-d")?;

    // Lift the b-c matches into the frames of the two half-mosaics: the b
    // side through a-b, the c side unchanged (c anchors the cd half).
    let lifted: Vec<SeamMatch> = matches
        .bc
        .iter()
        .map(|m| {
            let (x, y) = t_ab.apply(m.left[0], m.left[1]);
            SeamMatch::new([x, y], m.right)
        })
        .collect();
    let (t_c, rms_join) = fit_rigid(&lifted, "ab-cd")?;

    let transforms = [Rigid2D::identity(), t_ab, t_c, t_c.compose(&t_cd)];

    let (mut max_x, mut max_y) = (0.0f64, 0.0f64);
    for (part, t) in parts.iter().zip(&transforms) {
        let (w, h) = (part.width as f64, part.height as f64);
        for (x, y) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let (fx, fy) = t.apply(x, y);
            max_x = max_x.max(fx);
            max_y = max_y.max(fy);
        }
    }
    let out_w = max_x.ceil() as usize;
    let out_h = max_y.ceil() as usize;

    let inverses: Vec<Rigid2D> = transforms.iter().map(Rigid2D::inverse).collect();
    let mut film = GrayImage::new(out_w, out_h);
    film.data_mut()
        .par_chunks_exact_mut(out_w)
        .enumerate()
        .for_each(|(row, line)| {
            let y = row as f64 + 0.5;
            for (col, px) in line.iter_mut().enumerate() {
                let x = col as f64 + 0.5;
                let mut acc = 0.0f64;
                let mut wsum = 0.0f64;
                for (part, inv) in parts.iter().zip(&inverses) {
                    let (sx, sy) = inv.apply(x, y);
                    if let Some(v) = part.sample(sx, sy) {
                        let edge = sx
                            .min(part.width as f64 - sx)
                            .min(sy)
                            .min(part.height as f64 - sy);
                        let w = (edge / FEATHER_PX).clamp(0.0, 1.0).max(1e-6);
                        acc += w * v as f64;
                        wsum += w;
                    }
                }
                *px = if wsum > 0.0 { (acc / wsum) as f32 } else { f32::NAN };
            }
        });

    Ok(StitchedFilm { film, transforms, seam_rms_px: [rms_ab, rms_cd, rms_join] })
}
