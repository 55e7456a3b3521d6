//! Levenberg-style bundle solver with iterative outlier reweighting.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::geo::{ecef_to_geodetic, EcefPoint, UtmZone};
use crate::pancam::{PanoramicCamera, PixelPoint};
use crate::surface;

use super::problem::{Problem, Target};
use super::{
    AdjustError, AdjustmentConfig, AdjustmentReport, GcpRecord, GcpRole, ObservationKind,
    ObservationResidual, TiePoint,
};

const LAMBDA_INIT: f64 = 1e-4;
const LAMBDA_MAX: f64 = 1e10;
/// Below this sigma0 the outlier scan is pointless (noise-free data);
/// without a floor every machine-epsilon residual would be "3 sigma out".
const SIGMA0_FLOOR_PX: f64 = 1e-6;

/// Adjusts camera parameters and tie-point positions to the observed
/// image measurements. Control points enter the normal equations with
/// weight `1/sigma_px^2`; check points are held out and only audited in
/// the reported RMSE. Observations whose normalized residual exceeds
/// `outlier_factor * sigma0` are progressively down-weighted and, if
/// they persist through every reweighting round, rejected outright.
pub fn bundle_adjust(
    cameras: &[PanoramicCamera],
    gcps: &[GcpRecord],
    tiepoints: &[TiePoint],
    config: &AdjustmentConfig,
) -> Result<(Vec<PanoramicCamera>, Vec<TiePoint>, AdjustmentReport), AdjustError> {
    let mut prob = Problem::build(cameras, gcps, tiepoints, config.multi_pair)?;
    check_redundancy(&prob)?;

    // Structural rank check at the starting point, undamped: Levenberg
    // damping would otherwise paper over a deficient system.
    let eval0 = prob.evaluate(true)?;
    if !eval0.sse.is_finite() {
        return Err(AdjustError::DivergingResiduals { iteration: 0 });
    }
    prob.verify_rank(&prob.assemble(&eval0))?;

    let mut sse_history = Vec::new();
    let mut iterations = 0u32;
    let mut round = 0u32;
    loop {
        let (_, iters) = run_lm(&mut prob, config, &mut sse_history)?;
        iterations += iters;
        if config.reweight_rounds == 0 {
            break;
        }
        let eval = prob.evaluate(true)?;
        let sigma0 = (eval.sse / prob.redundancy()).sqrt();
        let threshold = config.outlier_factor * sigma0.max(SIGMA0_FLOOR_PX);
        let mut flagged = Vec::new();
        for (i, (o, ev)) in prob.obs.iter().zip(&eval.per_obs).enumerate() {
            if !o.active() {
                continue;
            }
            let Some(ev) = ev else { continue };
            let nr = (ev.r.norm_squared() / 2.0).sqrt() / o.sigma_px;
            if nr > threshold {
                flagged.push((i, nr));
            }
        }
        if flagged.is_empty() {
            break;
        }
        round += 1;
        if round <= config.reweight_rounds {
            // IRLS-style: every active observation gets its weight
            // recomputed from the current residual, so points recovered
            // by a better solution regain full weight.
            for (o, ev) in prob.obs.iter_mut().zip(&eval.per_obs) {
                if !o.active() {
                    continue;
                }
                let Some(ev) = ev else { continue };
                let nr = (ev.r.norm_squared() / 2.0).sqrt() / o.sigma_px;
                let scale = if nr > threshold { (threshold / nr).powi(2) } else { 1.0 };
                o.weight = o.base_weight * scale;
            }
        } else {
            for (i, _) in &flagged {
                prob.obs[*i].rejected = true;
                prob.obs[*i].weight = 0.0;
            }
            deactivate_starved_ties(&mut prob);
            check_redundancy(&prob)?;
            let (_, iters) = run_lm(&mut prob, config, &mut sse_history)?;
            iterations += iters;
            break;
        }
    }

    let eval = prob.evaluate(false)?;
    let redundancy = prob.redundancy();
    let sigma0_px = (eval.sse / redundancy).sqrt();
    let rmse_xyz_m = checkpoint_rmse(&prob, config);

    let mut residuals = Vec::with_capacity(prob.obs.len());
    let mut rejected_observations = 0;
    for (o, ev) in prob.obs.iter().zip(&eval.per_obs) {
        if o.rejected {
            rejected_observations += 1;
        }
        let (vx, vy) = match ev {
            Some(ev) => (ev.r.x, ev.r.y),
            None => (f64::NAN, f64::NAN),
        };
        residuals.push(ObservationResidual {
            image_id: prob.cams[o.cam].id.clone(),
            kind: o.kind.clone(),
            pixel: PixelPoint::new(o.px.x, o.px.y),
            vx_px: vx,
            vy_px: vy,
            weight: o.weight,
            rejected: o.rejected,
        });
    }

    let mut ties_out = tiepoints.to_vec();
    for (tp, ground) in ties_out.iter_mut().zip(&prob.ties) {
        tp.ground = Some(EcefPoint::from_vector(*ground));
    }
    let report = AdjustmentReport {
        sigma0_px,
        rmse_xyz_m,
        residuals,
        converged: true,
        iterations,
        redundancy,
        rejected_observations,
        sse_history,
    };
    Ok((prob.cams, ties_out, report))
}

fn check_redundancy(prob: &Problem) -> Result<(), AdjustError> {
    if prob.redundancy() <= 0.0 {
        return Err(AdjustError::Underdetermined {
            unknowns: crate::pancam::PARAM_COUNT * prob.cams.len() + 3 * prob.active_ties(),
            observations: 2 * prob.active_obs(),
        });
    }
    Ok(())
}

/// A tie point whose observations were rejected down to fewer than two
/// no longer supports its three unknowns; drop it from the system.
fn deactivate_starved_ties(prob: &mut Problem) {
    let mut counts = vec![0usize; prob.ties.len()];
    for o in &prob.obs {
        if let Target::Tie(j) = o.target {
            if o.active() {
                counts[j] += 1;
            }
        }
    }
    for (j, count) in counts.iter().enumerate() {
        if *count < 2 && prob.tie_active[j] {
            prob.tie_active[j] = false;
            for o in prob.obs.iter_mut() {
                if matches!(o.target, Target::Tie(k) if k == j) {
                    o.rejected = true;
                    o.weight = 0.0;
                }
            }
        }
    }
}

/// One Levenberg descent to convergence with the current weights.
fn run_lm(
    prob: &mut Problem,
    config: &AdjustmentConfig,
    history: &mut Vec<f64>,
) -> Result<(bool, u32), AdjustError> {
    let mut lambda = LAMBDA_INIT;
    let mut eval = prob.evaluate(true)?;
    if !eval.sse.is_finite() {
        return Err(AdjustError::DivergingResiduals { iteration: 0 });
    }
    history.push(eval.sse);
    for iter in 1..=config.max_iterations {
        let normals = prob.assemble(&eval);
        loop {
            let step = prob.solve(&normals, lambda)?;
            let step_norm = step.norm();
            let snap = prob.snapshot();
            prob.apply_step(&step);
            let trial = prob.evaluate(false)?;
            if trial.sse.is_finite() && trial.sse <= eval.sse * (1.0 + 1e-14) {
                let rel = if eval.sse > 0.0 {
                    (eval.sse - trial.sse) / eval.sse
                } else {
                    0.0
                };
                eval = trial;
                history.push(eval.sse);
                lambda = (lambda / 3.0).max(1e-12);
                if rel < config.rel_sse_tol || step_norm < config.step_tol {
                    return Ok((true, iter));
                }
                break;
            }
            prob.restore(&snap);
            if step_norm < config.step_tol {
                // The damped step is already negligible: stationary point
                // that floating-point noise keeps from "improving".
                history.push(eval.sse);
                return Ok((true, iter));
            }
            lambda *= 4.0;
            if lambda > LAMBDA_MAX {
                return Err(AdjustError::DivergingResiduals { iteration: iter });
            }
        }
    }
    Err(AdjustError::NoConvergence {
        iterations: config.max_iterations,
    })
}

/// Check points sharing (to 0.1 mm) the same ground coordinates are one
/// physical point; its position is re-derived from the adjusted cameras
/// and compared against the known ground in the configured UTM frame.
fn checkpoint_rmse(prob: &Problem, config: &AdjustmentConfig) -> Option<[f64; 3]> {
    let mut groups: BTreeMap<(i64, i64, i64), (Vector3<f64>, Vec<usize>)> = BTreeMap::new();
    for (i, o) in prob.obs.iter().enumerate() {
        let ObservationKind::Gcp {
            role: GcpRole::Check,
            ..
        } = o.kind
        else {
            continue;
        };
        let Target::Fixed(g) = o.target else { continue };
        let key = (
            (g.x * 1e4).round() as i64,
            (g.y * 1e4).round() as i64,
            (g.z * 1e4).round() as i64,
        );
        groups.entry(key).or_insert_with(|| (g, Vec::new())).1.push(i);
    }
    if groups.is_empty() {
        return None;
    }

    let zone = config.utm.unwrap_or_else(|| {
        let (g, _) = groups.values().next().unwrap();
        let geo = ecef_to_geodetic(EcefPoint::from_vector(*g)).unwrap();
        UtmZone::for_point(geo.lon, geo.lat)
    });

    let (mut se, mut sn, mut su, mut count) = (0.0, 0.0, 0.0, 0usize);
    for (truth, idxs) in groups.values() {
        let Some(est) = estimate_checkpoint(prob, idxs) else {
            continue;
        };
        let Ok(gt) = ecef_to_geodetic(EcefPoint::from_vector(*truth)) else {
            continue;
        };
        let Ok(ge) = ecef_to_geodetic(EcefPoint::from_vector(est)) else {
            continue;
        };
        let (et, nt) = zone.forward(gt.lon, gt.lat);
        let (ee, ne) = zone.forward(ge.lon, ge.lat);
        se += (ee - et).powi(2);
        sn += (ne - nt).powi(2);
        su += (ge.h - gt.h).powi(2);
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let n = count as f64;
    Some([(se / n).sqrt(), (sn / n).sqrt(), (su / n).sqrt()])
}

/// Ground estimate for one check point: intersect the first two rays
/// from distinct images, or project the truth onto a single ray.
fn estimate_checkpoint(prob: &Problem, idxs: &[usize]) -> Option<Vector3<f64>> {
    let first = &prob.obs[idxs[0]];
    let second = idxs[1..]
        .iter()
        .map(|i| &prob.obs[*i])
        .find(|o| o.cam != first.cam);
    let mm_of = |o: &super::problem::Obs| {
        prob.cams[o.cam].pixel_to_mm(PixelPoint::new(o.px.x, o.px.y))
    };
    match second {
        Some(second) => {
            let (p, _) = surface::triangulate(
                &prob.cams[first.cam],
                &prob.cams[second.cam],
                mm_of(first),
                mm_of(second),
            )
            .ok()?;
            Some(p.to_vector())
        }
        None => {
            let Target::Fixed(truth) = first.target else {
                return None;
            };
            let (o, d) = prob.cams[first.cam].backproject(mm_of(first));
            let o = o.to_vector();
            let s = (truth - o).dot(&d).max(0.0);
            Some(o + s * d)
        }
    }
}
