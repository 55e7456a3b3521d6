//! End-to-end film geometry recovery on synthetic scans: stitch, align,
//! trace, straighten, clip, and the effect of the correction on bundle
//! adjustment noise.

use cosp_core::adjust::{bundle_adjust, AdjustmentConfig};
use cosp_core::filmprep::{
    align_exposed_area, clip_columns, correct_bending, finalize, stitch, trace_stripes,
    SeamMatch, StitchMatches,
};
use cosp_core::imgproc::warp_into;
use cosp_core::synthkit::{
    make_stereo_scene, make_synthetic_film, render_observations, split_into_scan_parts,
    BendingSpec, FilmLayout, ObservationOptions, RigidTruth,
};
use cosp_core::{GrayImage, SceneConfig};

/// Exact seam correspondences on a grid over the overlap of parts k, k+1.
fn seam_grid(truths: &[RigidTruth], parts: &[GrayImage], k: usize) -> Vec<SeamMatch> {
    let to_part = |t: &RigidTruth, fx: f64, fy: f64| {
        let (s, c) = t.rotation_rad.sin_cos();
        let dx = fx - t.tx - t.window_start_col;
        let dy = fy - t.ty;
        (c * dx + s * dy, -s * dx + c * dy)
    };
    let col_lo = truths[k + 1].window_start_col + 8.0;
    let col_hi = truths[k].window_start_col + parts[k].width as f64 - 8.0;
    let mut out = Vec::new();
    let mut x = col_lo;
    while x < col_hi {
        let mut y = 40.0;
        while y < parts[k].height as f64 - 40.0 {
            let (lx, ly) = to_part(&truths[k], x, y);
            let (rx, ry) = to_part(&truths[k + 1], x, y);
            out.push(SeamMatch::new([lx, ly], [rx, ry]));
            y += 14.0;
        }
        x += 9.0;
    }
    out
}

/// Rotate film content counterclockwise inside a padded canvas.
fn skewed_scan(img: &GrayImage, phi: f64) -> GrayImage {
    let pad = 60usize;
    let (w, h) = (img.width + 2 * pad, img.height + 2 * pad);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (s, c) = phi.sin_cos();
    warp_into(img, w, h, |x, y| {
        let dx = x - cx;
        let dy = y - cy;
        Some((cx + c * dx + s * dy - pad as f64, cy - s * dx + c * dy - pad as f64))
    })
}

fn exposed_mean(img: &GrayImage, row_lo: usize, row_hi: usize) -> f64 {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for row in row_lo..row_hi {
        for col in 0..img.width {
            let v = img.get(col, row);
            if v.is_finite() {
                sum += v as f64;
                n += 1;
            }
        }
    }
    sum / n as f64
}

#[test]
fn scan_parts_come_out_straight_and_clipped() {
    let layout = FilmLayout::default();
    let bend = BendingSpec { amplitude_px: 5.0, wavelength_px: 2000.0, phase_rad: 1.1 };
    let film = make_synthetic_film(&layout, 71, Some(&bend));
    let (parts, truths) = split_into_scan_parts(&film, 120, 71);

    let matches = StitchMatches {
        ab: seam_grid(&truths, &parts, 0),
        bc: seam_grid(&truths, &parts, 1),
        cd: seam_grid(&truths, &parts, 2),
    };
    let parts4: &[GrayImage; 4] = parts.as_slice().try_into().unwrap();
    let stitched = stitch(parts4, &matches).unwrap();

    // The scanner also left the whole film slightly skewed.
    let deg = std::f64::consts::PI / 180.0;
    let scan = skewed_scan(&stitched.film, 1.2 * deg);

    // The bent band biases the moment-based skew estimate a little; the
    // leftover tilt is a slow trend in the traces and rides out with the
    // bending correction below.
    let aligned = align_exposed_area(&scan).unwrap();
    assert!(
        (aligned.rotation_rad - 1.2 * deg).abs() < 0.2 * deg,
        "align measured {} deg",
        aligned.rotation_rad / deg
    );

    let (top, bottom) = trace_stripes(&aligned.image).unwrap();
    let (corrected, _model) = correct_bending(&aligned.image, &top, &bottom).unwrap();

    // Straightness: re-tracing the corrected film gives two flat lines.
    let (top2, bottom2) = trace_stripes(&corrected).unwrap();
    for trace in [&top2, &bottom2] {
        let observed: Vec<f64> = trace
            .positions
            .iter()
            .zip(&trace.observed)
            .filter(|(_, &o)| o)
            .map(|(p, _)| *p)
            .collect();
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        let worst = observed.iter().map(|p| (p - mean).abs()).fold(0.0, f64::max);
        assert!(worst < 0.2, "{} stripe straightness {worst}", trace.side);
    }

    // Radiometry: the exposed band keeps its mean intensity through the
    // whole stitch, align and resample chain.
    let before = exposed_mean(&film, 150, 550);
    let band_lo = 60 + 150; // canvas pad plus band offset
    let after = exposed_mean(&corrected, band_lo, band_lo + 400);
    assert!(
        (before - after).abs() / before < 0.005,
        "exposed mean went from {before} to {after}"
    );

    // Clipping: 1.5 cm off both ends (the miniature film is scanned at a
    // coarse 0.1 mm here), aft rotated by 180 degrees.
    let fore = finalize(&corrected, true, 0.1);
    assert_eq!(fore.width, corrected.width - 2 * clip_columns(0.1));
    let aft = finalize(&corrected, false, 0.1);
    assert_eq!(aft.width, fore.width);
    // Probe the rotation in the exposed band where pixels are finite.
    let (c, r) = (fore.width / 3, fore.height / 2);
    assert_eq!(
        aft.get(c, r),
        fore.get(fore.width - 1 - c, fore.height - 1 - r)
    );
}

#[test]
fn bending_correction_restores_the_adjustment_noise_level() {
    // Observations measured on a bent film carry a systematic row error of
    // up to 5 px on top of 1 px of noise. Correcting them with the model
    // traced from the matching film raster must bring sigma0 back down.
    let config = SceneConfig::default().full_format();
    let scene = make_stereo_scene(&config, 77);
    let bend = BendingSpec { amplitude_px: 5.0, wavelength_px: 20_000.0, phase_rad: 0.4 };
    let opts = ObservationOptions {
        gcp_count: 140,
        tie_count: 80,
        noise_sigma_px: 1.0,
        bending: Some(bend.clone()),
        margin_px: 16.0,
        ..ObservationOptions::default()
    };
    let obs = render_observations(&scene, &opts);
    let cameras = vec![scene.fore.clone(), scene.aft.clone()];
    let adj = AdjustmentConfig::default();

    let (_, _, without) =
        bundle_adjust(&cameras, &obs.gcps, &obs.ties, &adj).expect("uncorrected run");

    // The film raster shares the scan geometry of the images, so its
    // traced bending model applies directly to the measurements.
    let layout = FilmLayout { width: config.width_px as usize, ..FilmLayout::default() };
    let film = make_synthetic_film(&layout, 77, Some(&bend));
    let (top, bottom) = trace_stripes(&film).unwrap();
    let (_, model) = correct_bending(&film, &top, &bottom).unwrap();

    let mut gcps = obs.gcps.clone();
    for g in &mut gcps {
        g.pixel = model.correct_point(g.pixel);
    }
    let mut ties = obs.ties.clone();
    for t in &mut ties {
        for (_, p) in &mut t.observations {
            *p = model.correct_point(*p);
        }
    }
    let (_, _, with) = bundle_adjust(&cameras, &gcps, &ties, &adj).expect("corrected run");

    assert!(
        with.sigma0_px <= 0.9 * without.sigma0_px,
        "sigma0 {} with correction vs {} without",
        with.sigma0_px,
        without.sigma0_px
    );
    assert!(
        (with.sigma0_px - 1.0).abs() < 0.15,
        "corrected sigma0 {} should sit near the 1 px noise floor",
        with.sigma0_px
    );
}
