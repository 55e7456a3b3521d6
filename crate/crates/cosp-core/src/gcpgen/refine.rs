//! Footprint refinement from screened matches.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FootprintEstimate, GcpError, MatchSet};
use crate::geo::{meters_per_degree, GeodeticPoint};
use crate::pancam::PixelPoint;

/// Fewer screened matches than this cannot support a refinement.
pub const MIN_REFINE_MATCHES: usize = 10;

const LMEDS_ITERS: usize = 256;
/// Residuals below this never count as outliers (metres); keeps the inlier
/// cut sane when the matches are nearly perfect.
const CUT_FLOOR_M: f64 = 0.05;

/// Plane similarity `z -> a z + b` over east/north treated as complex
/// numbers; rotation plus uniform scale plus shift.
#[derive(Debug, Clone, Copy)]
struct Similarity {
    a: (f64, f64),
    b: (f64, f64),
}

impl Similarity {
    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.a.0 * p.0 - self.a.1 * p.1 + self.b.0,
            self.a.0 * p.1 + self.a.1 * p.0 + self.b.1,
        )
    }

    /// Exact fit through two point pairs.
    fn from_two(p: [(f64, f64); 2], o: [(f64, f64); 2]) -> Option<Similarity> {
        let dp = (p[1].0 - p[0].0, p[1].1 - p[0].1);
        let den = dp.0 * dp.0 + dp.1 * dp.1;
        if den < 1e-12 {
            return None;
        }
        let do_ = (o[1].0 - o[0].0, o[1].1 - o[0].1);
        let a = (
            (do_.0 * dp.0 + do_.1 * dp.1) / den,
            (do_.1 * dp.0 - do_.0 * dp.1) / den,
        );
        let b = (
            o[0].0 - (a.0 * p[0].0 - a.1 * p[0].1),
            o[0].1 - (a.0 * p[0].1 + a.1 * p[0].0),
        );
        Some(Similarity { a, b })
    }

    /// Least-squares fit over the indexed pairs.
    fn fit(pred: &[(f64, f64)], obs: &[(f64, f64)], idx: &[usize]) -> Option<Similarity> {
        let n = idx.len() as f64;
        if idx.len() < 2 {
            return None;
        }
        let mut pc = (0.0, 0.0);
        let mut oc = (0.0, 0.0);
        for &i in idx {
            pc.0 += pred[i].0 / n;
            pc.1 += pred[i].1 / n;
            oc.0 += obs[i].0 / n;
            oc.1 += obs[i].1 / n;
        }
        let mut num = (0.0, 0.0);
        let mut den = 0.0;
        for &i in idx {
            let p = (pred[i].0 - pc.0, pred[i].1 - pc.1);
            let o = (obs[i].0 - oc.0, obs[i].1 - oc.1);
            num.0 += o.0 * p.0 + o.1 * p.1;
            num.1 += o.1 * p.0 - o.0 * p.1;
            den += p.0 * p.0 + p.1 * p.1;
        }
        if den < 1e-12 {
            return None;
        }
        let a = (num.0 / den, num.1 / den);
        let b = (
            oc.0 - (a.0 * pc.0 - a.1 * pc.1),
            oc.1 - (a.0 * pc.1 + a.1 * pc.0),
        );
        Some(Similarity { a, b })
    }
}

fn residuals(s: &Similarity, pred: &[(f64, f64)], obs: &[(f64, f64)]) -> Vec<f64> {
    pred.iter()
        .zip(obs)
        .map(|(&p, &o)| {
            let q = s.apply(p);
            (q.0 - o.0).hypot(q.1 - o.1)
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    *values
        .select_nth_unstable_by(mid, f64::total_cmp)
        .1
}

/// Nearest-rank 95th percentile.
fn percentile_95(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Correct a footprint against matcher output.
///
/// Predicted ground positions (match pixels pushed through the prior
/// footprint) are registered to the matched reference positions with a plane
/// similarity, fitted by least median of squares so up to about a third of
/// the matches may be junk. The similarity moves the footprint corners; the
/// 95th-percentile inlier residual becomes the new uncertainty. Matches that
/// stay inconsistent with the prior uncertainty after fitting are refused
/// rather than absorbed.
pub fn refine_footprint(
    prior: &FootprintEstimate,
    corona_dims: (u32, u32),
    matches: &MatchSet,
) -> Result<FootprintEstimate, GcpError> {
    prior.validate()?;
    let screened = matches.screened();
    if screened.len() < MIN_REFINE_MATCHES {
        return Err(GcpError::InsufficientMatches {
            needed: MIN_REFINE_MATCHES,
            found: screened.len(),
        });
    }

    let (clon, clat) = prior.center();
    let (m_lon, m_lat) = meters_per_degree(clat);
    let to_en = |lon: f64, lat: f64| ((lon - clon) * m_lon, (lat - clat) * m_lat);
    let pred: Vec<(f64, f64)> = screened
        .matches
        .iter()
        .map(|m| {
            let (lon, lat) = prior.pixel_to_lonlat(corona_dims, m.corona_px);
            to_en(lon, lat)
        })
        .collect();
    let obs: Vec<(f64, f64)> = screened
        .matches
        .iter()
        .map(|m| to_en(m.ref_lonlat.0, m.ref_lonlat.1))
        .collect();
    let n = pred.len();

    // Least-median-of-squares over two-point samples.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f007);
    let mut best: Option<(f64, Similarity)> = None;
    for _ in 0..LMEDS_ITERS {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Some(s) = Similarity::from_two([pred[i], pred[j]], [obs[i], obs[j]]) else {
            continue;
        };
        let med = median(&mut residuals(&s, &pred, &obs));
        if best.as_ref().is_none_or(|(m, _)| med < *m) {
            best = Some((med, s));
        }
    }
    let (best_med, mut model) = best.ok_or(GcpError::InsufficientMatches {
        needed: MIN_REFINE_MATCHES,
        found: 0,
    })?;

    // Inlier selection and least-squares polish, twice.
    let mut cut = (3.0 * 1.4826 * best_med).max(CUT_FLOOR_M);
    let mut inliers: Vec<usize> = Vec::new();
    for _ in 0..2 {
        let r = residuals(&model, &pred, &obs);
        inliers = (0..n).filter(|&i| r[i] <= cut).collect();
        if inliers.len() < 3 {
            return Err(GcpError::InsufficientMatches { needed: 3, found: inliers.len() });
        }
        model = Similarity::fit(&pred, &obs, &inliers).ok_or(GcpError::MalformedFootprint)?;
        let mut inlier_r: Vec<f64> = {
            let r = residuals(&model, &pred, &obs);
            inliers.iter().map(|&i| r[i]).collect()
        };
        cut = (3.0 * 1.4826 * median(&mut inlier_r)).max(CUT_FLOOR_M);
    }

    let r = residuals(&model, &pred, &obs);
    let inlier_r: Vec<f64> = inliers.iter().map(|&i| r[i]).collect();
    let p95_km = percentile_95(&inlier_r) / 1000.0;
    if p95_km > prior.uncertainty_km * (1.0 + 1e-9) {
        return Err(GcpError::ResidualTooLarge {
            residual_km: p95_km,
            prior_km: prior.uncertainty_km,
        });
    }

    let (w, h) = (f64::from(corona_dims.0), f64::from(corona_dims.1));
    let corner_px = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let mut corners = prior.corners;
    for (c, &(col, row)) in corners.iter_mut().zip(&corner_px) {
        let (lon, lat) = prior.pixel_to_lonlat(corona_dims, PixelPoint::new(col, row));
        let (e, n_) = model.apply(to_en(lon, lat));
        *c = GeodeticPoint::new(clon + e / m_lon, clat + n_ / m_lat, c.height);
    }
    FootprintEstimate::new(corners, p95_km.max(1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcpgen::GroundMatch;
    use rand_distr::{Distribution, Normal};

    const DIMS: (u32, u32) = (10_000, 7_900);

    /// Similarity-exact footprint around (96.2 E, 44.6 N), 2 m pixels.
    fn truth() -> FootprintEstimate {
        let (clon, clat) = (96.2, 44.6);
        let (m_lon, m_lat) = meters_per_degree(clat);
        let corner = |c: f64, r: f64| {
            let e = (c - f64::from(DIMS.0) / 2.0) * 2.0;
            let n = (f64::from(DIMS.1) / 2.0 - r) * 2.0;
            GeodeticPoint::new(clon + e / m_lon, clat + n / m_lat, 1200.0)
        };
        FootprintEstimate::new(
            [
                corner(0.0, 0.0),
                corner(f64::from(DIMS.0), 0.0),
                corner(f64::from(DIMS.0), f64::from(DIMS.1)),
                corner(0.0, f64::from(DIMS.1)),
            ],
            0.05,
        )
        .unwrap()
    }

    /// Apply shift (m), rotation (rad) and scale to a footprint's corners
    /// about its own centre.
    fn disturb(fp: &FootprintEstimate, shift_m: (f64, f64), rot: f64, scale: f64,
        uncertainty_km: f64) -> FootprintEstimate {
        let (clon, clat) = fp.center();
        let (m_lon, m_lat) = meters_per_degree(clat);
        let corners = fp.corners.map(|c| {
            let e = (c.lon - clon) * m_lon;
            let n = (c.lat - clat) * m_lat;
            let e2 = scale * (rot.cos() * e - rot.sin() * n) + shift_m.0;
            let n2 = scale * (rot.sin() * e + rot.cos() * n) + shift_m.1;
            GeodeticPoint::new(clon + e2 / m_lon, clat + n2 / m_lat, c.height)
        });
        FootprintEstimate::new(corners, uncertainty_km).unwrap()
    }

    /// Matches whose ground side comes from the true footprint.
    fn exact_matches(truth: &FootprintEstimate, count: usize) -> MatchSet {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let matches = (0..count)
            .map(|_| {
                let p = PixelPoint::new(
                    rng.random_range(0.0..f64::from(DIMS.0)),
                    rng.random_range(0.0..f64::from(DIMS.1)),
                );
                GroundMatch {
                    tile_id: "fine-00-00".into(),
                    corona_px: p,
                    ref_lonlat: truth.pixel_to_lonlat(DIMS, p),
                    confidence: 0.9,
                }
            })
            .collect();
        MatchSet::new(matches)
    }

    fn corner_error_m(a: &FootprintEstimate, b: &FootprintEstimate) -> f64 {
        let (_, clat) = a.center();
        let (m_lon, m_lat) = meters_per_degree(clat);
        a.corners
            .iter()
            .zip(&b.corners)
            .map(|(x, y)| ((x.lon - y.lon) * m_lon).hypot((x.lat - y.lat) * m_lat))
            .fold(0.0, f64::max)
    }

    #[test]
    fn recovers_a_badly_shifted_prior() {
        let truth = truth();
        // 50 km east, half a degree of rotation, one percent of scale.
        let prior = disturb(&truth, (50_000.0, -8_000.0), 0.5_f64.to_radians(), 1.01, 60.0);
        let matches = exact_matches(&truth, 60);
        let refined = refine_footprint(&prior, DIMS, &matches).unwrap();
        assert!(corner_error_m(&refined, &truth) < 2.0);
        assert!(refined.uncertainty_km < 0.01);
        assert!(refined.uncertainty_km < prior.uncertainty_km);
    }

    #[test]
    fn shrugs_off_a_third_of_junk_matches() {
        let truth = truth();
        let prior = disturb(&truth, (300.0, 450.0), 0.1_f64.to_radians(), 1.0, 5.0);
        let mut matches = exact_matches(&truth, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (m_lon, m_lat) = {
            let (_, clat) = truth.center();
            meters_per_degree(clat)
        };
        for m in matches.matches.iter_mut().take(18) {
            m.ref_lonlat.0 += rng.random_range(2_000.0..5_000.0) / m_lon;
            m.ref_lonlat.1 -= rng.random_range(2_000.0..5_000.0) / m_lat;
        }
        let refined = refine_footprint(&prior, DIMS, &matches).unwrap();
        assert!(corner_error_m(&refined, &truth) < 5.0);
    }

    #[test]
    fn repeating_the_refinement_changes_nothing() {
        let truth = truth();
        let prior = disturb(&truth, (900.0, -400.0), 0.2_f64.to_radians(), 1.002, 3.0);
        let mut matches = exact_matches(&truth, 50);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m_lon, m_lat) = {
            let (_, clat) = truth.center();
            meters_per_degree(clat)
        };
        for m in matches.matches.iter_mut() {
            m.ref_lonlat.0 += noise.sample(&mut rng) / m_lon;
            m.ref_lonlat.1 += noise.sample(&mut rng) / m_lat;
        }
        let once = refine_footprint(&prior, DIMS, &matches).unwrap();
        let twice = refine_footprint(&once, DIMS, &matches).unwrap();
        for (a, b) in once.corners.iter().zip(&twice.corners) {
            assert!((a.lon - b.lon).abs() < 1e-6);
            assert!((a.lat - b.lat).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_matches_is_refused() {
        let truth = truth();
        let matches = exact_matches(&truth, MIN_REFINE_MATCHES - 1);
        match refine_footprint(&truth, DIMS, &matches) {
            Err(GcpError::InsufficientMatches { needed, found }) => {
                assert_eq!(needed, MIN_REFINE_MATCHES);
                assert_eq!(found, MIN_REFINE_MATCHES - 1);
            }
            other => panic!("expected insufficient matches, got {other:?}"),
        }
    }

    #[test]
    fn scatter_beyond_the_prior_uncertainty_is_refused() {
        let truth = truth();
        // The prior claims 10 m accuracy but the matches scatter by ~100 m.
        let prior = disturb(&truth, (0.0, 0.0), 0.0, 1.0, 0.01);
        let mut matches = exact_matches(&truth, 60);
        let noise = Normal::new(0.0, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m_lon, m_lat) = {
            let (_, clat) = truth.center();
            meters_per_degree(clat)
        };
        for m in matches.matches.iter_mut() {
            m.ref_lonlat.0 += noise.sample(&mut rng) / m_lon;
            m.ref_lonlat.1 += noise.sample(&mut rng) / m_lat;
        }
        match refine_footprint(&prior, DIMS, &matches) {
            Err(GcpError::ResidualTooLarge { residual_km, prior_km }) => {
                assert!(residual_km > prior_km);
                assert!((prior_km - 0.01).abs() < 1e-12);
            }
            other => panic!("expected residual error, got {other:?}"),
        }
    }
}
