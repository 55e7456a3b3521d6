//! Linearized problem state shared by the bundle solver.
//!
//! Unknowns are 13 parameters per camera plus one ECEF position per tie
//! point. Camera blocks couple only through tie points, so the normal
//! equations reduce cheaply: tie blocks are eliminated by a Schur
//! complement and the remaining camera system is solved dense.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector2, Vector3};

use crate::pancam::{
    project_with_jacobian, CameraParams, PanoramicCamera, PixelPoint, PARAM_COUNT, PARAM_NAMES,
};

use super::{AdjustError, GcpRecord, GcpRole, ObservationKind, TiePoint};

/// Metre-valued unknowns (positions, velocities, tie coordinates) are
/// solved in kilometres; angles, rates and the compensation factor keep
/// their natural units. The Jacobi preconditioner evens out the rest.
const PARAM_SCALES: [f64; PARAM_COUNT] = [
    1e3, 1e3, 1e3, 1e3, 1e3, 1e3, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0,
];
const TIE_SCALE: f64 = 1e3;

/// Eigenvalue floor (after Jacobi scaling) below which the reduced
/// normal matrix counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

pub(crate) const MIN_CONTROL_PER_CAMERA: usize = 6;

/// Where an observation's ground coordinates come from.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Target {
    Fixed(Vector3<f64>),
    Tie(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Obs {
    pub cam: usize,
    /// Observed pixel position.
    pub px: Vector2<f64>,
    pub target: Target,
    pub sigma_px: f64,
    pub base_weight: f64,
    /// Current weight; shrinks during outlier reweighting, zero once
    /// rejected.
    pub weight: f64,
    /// Check observations never enter the normal equations.
    pub check: bool,
    pub rejected: bool,
    pub kind: ObservationKind,
}

impl Obs {
    pub fn active(&self) -> bool {
        !self.check && !self.rejected && self.weight > 0.0
    }
}

/// Residual and scaled Jacobians of one observation at the current
/// parameters. `None` when the ground point does not project.
pub(crate) struct ObsEval {
    /// Observed minus predicted, pixels.
    pub r: Vector2<f64>,
    /// d(predicted px)/d(scaled camera parameters).
    pub jc: SMatrix<f64, 2, PARAM_COUNT>,
    /// d(predicted px)/d(scaled tie coordinates); zero for fixed ground.
    pub jt: SMatrix<f64, 2, 3>,
}

pub(crate) struct Eval {
    pub per_obs: Vec<Option<ObsEval>>,
    /// Weighted SSE over active observations.
    pub sse: f64,
}

/// Normal-equation blocks before damping: camera block `a` (dense block
/// diagonal), per-tie 3x3 blocks with their camera couplings, gradients.
pub(crate) struct Normals {
    pub a: DMatrix<f64>,
    pub ga: DVector<f64>,
    pub ties: Vec<TieBlock>,
}

pub(crate) struct TieBlock {
    pub c: Matrix3<f64>,
    pub g: Vector3<f64>,
    pub b: BTreeMap<usize, SMatrix<f64, PARAM_COUNT, 3>>,
}

pub(crate) struct Step {
    /// Scaled camera update, length 13 x cameras.
    pub cams: DVector<f64>,
    /// Scaled tie updates.
    pub ties: Vec<Vector3<f64>>,
}

impl Step {
    pub fn norm(&self) -> f64 {
        let t: f64 = self.ties.iter().map(|v| v.norm_squared()).sum();
        (self.cams.norm_squared() + t).sqrt()
    }
}

pub(crate) struct Problem {
    pub cams: Vec<PanoramicCamera>,
    /// Current tie ground estimates, ECEF metres.
    pub ties: Vec<Vector3<f64>>,
    pub tie_active: Vec<bool>,
    pub obs: Vec<Obs>,
}

pub(crate) type Snapshot = (Vec<CameraParams>, Vec<Vector3<f64>>);

impl Problem {
    pub fn build(
        cameras: &[PanoramicCamera],
        gcps: &[GcpRecord],
        tiepoints: &[TiePoint],
        multi_pair: bool,
    ) -> Result<Problem, AdjustError> {
        if cameras.len() > 2 && !multi_pair {
            return Err(AdjustError::MultiPairDisabled {
                cameras: cameras.len(),
            });
        }
        let index: BTreeMap<&str, usize> = cameras
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect();
        let lookup = |id: &str| -> Result<usize, AdjustError> {
            index.get(id).copied().ok_or_else(|| AdjustError::UnknownImage {
                image_id: id.to_string(),
            })
        };

        let mut obs = Vec::new();
        let mut control_per_cam = vec![0usize; cameras.len()];
        for (i, g) in gcps.iter().enumerate() {
            if !(g.sigma_px > 0.0) {
                return Err(AdjustError::Format(format!(
                    "gcp {i}: sigma_px must be positive"
                )));
            }
            let cam = lookup(&g.image_id)?;
            let check = g.role == GcpRole::Check;
            if !check {
                control_per_cam[cam] += 1;
            }
            let w = 1.0 / (g.sigma_px * g.sigma_px);
            obs.push(Obs {
                cam,
                px: Vector2::new(g.pixel.col, g.pixel.row),
                target: Target::Fixed(g.ground.to_vector()),
                sigma_px: g.sigma_px,
                base_weight: w,
                weight: if check { 0.0 } else { w },
                check,
                rejected: false,
                kind: ObservationKind::Gcp {
                    index: i,
                    role: g.role,
                },
            });
        }
        for (cam, count) in control_per_cam.iter().enumerate() {
            if *count < MIN_CONTROL_PER_CAMERA {
                return Err(AdjustError::InsufficientControl {
                    image_id: cameras[cam].id.clone(),
                    needed: MIN_CONTROL_PER_CAMERA,
                    got: *count,
                });
            }
        }

        let mut tie_grounds = Vec::with_capacity(tiepoints.len());
        for (j, tp) in tiepoints.iter().enumerate() {
            if !(tp.sigma_px > 0.0) {
                return Err(AdjustError::Format(format!(
                    "tie point {}: sigma_px must be positive",
                    tp.id
                )));
            }
            let mut cams_seen = Vec::new();
            for (image_id, px) in &tp.observations {
                let cam = lookup(image_id)?;
                cams_seen.push(cam);
                let w = 1.0 / (tp.sigma_px * tp.sigma_px);
                obs.push(Obs {
                    cam,
                    px: Vector2::new(px.col, px.row),
                    target: Target::Tie(j),
                    sigma_px: tp.sigma_px,
                    base_weight: w,
                    weight: w,
                    check: false,
                    rejected: false,
                    kind: ObservationKind::Tie { id: tp.id.clone() },
                });
            }
            cams_seen.sort_unstable();
            cams_seen.dedup();
            if cams_seen.len() < 2 {
                return Err(AdjustError::Format(format!(
                    "tie point {} needs observations in at least 2 distinct images",
                    tp.id
                )));
            }
            let ground = match tp.ground {
                Some(g) => g.to_vector(),
                None => initial_tie_ground(cameras, tp)?,
            };
            tie_grounds.push(ground);
        }

        Ok(Problem {
            cams: cameras.to_vec(),
            tie_active: vec![true; tie_grounds.len()],
            ties: tie_grounds,
            obs,
        })
    }

    pub fn active_obs(&self) -> usize {
        self.obs.iter().filter(|o| o.active()).count()
    }

    pub fn active_ties(&self) -> usize {
        self.tie_active.iter().filter(|a| **a).count()
    }

    /// Degrees of freedom: two equations per active observation minus 13
    /// unknowns per camera and 3 per active tie point.
    pub fn redundancy(&self) -> f64 {
        2.0 * self.active_obs() as f64
            - (PARAM_COUNT * self.cams.len()) as f64
            - 3.0 * self.active_ties() as f64
    }

    fn ground_of(&self, o: &Obs) -> Vector3<f64> {
        match o.target {
            Target::Fixed(g) => g,
            Target::Tie(j) => self.ties[j],
        }
    }

    /// Evaluates residuals and scaled Jacobians for every observation.
    /// `strict` turns a projection failure on an active observation into
    /// an error; otherwise the evaluation reports `sse = inf` so a trial
    /// step is simply not accepted.
    pub fn evaluate(&self, strict: bool) -> Result<Eval, AdjustError> {
        let mut per_obs = Vec::with_capacity(self.obs.len());
        let mut sse = 0.0;
        for o in &self.obs {
            let cam = &self.cams[o.cam];
            let ground = crate::geo::EcefPoint::from_vector(self.ground_of(o));
            let pj = match project_with_jacobian(cam, ground) {
                Ok(pj) => pj,
                Err(e) => {
                    if o.active() {
                        if strict {
                            return Err(AdjustError::Camera(e));
                        }
                        sse = f64::INFINITY;
                    }
                    per_obs.push(None);
                    continue;
                }
            };
            let pred = cam.mm_to_pixel(pj.point.mm);
            let r = Vector2::new(o.px.x - pred.col, o.px.y - pred.row);
            let pitch = cam.pixel_pitch_mm;
            let mut jc = SMatrix::<f64, 2, PARAM_COUNT>::zeros();
            for p in 0..PARAM_COUNT {
                jc[(0, p)] = pj.d_params[0][p] / pitch * PARAM_SCALES[p];
                jc[(1, p)] = -pj.d_params[1][p] / pitch * PARAM_SCALES[p];
            }
            let mut jt = SMatrix::<f64, 2, 3>::zeros();
            if matches!(o.target, Target::Tie(_)) {
                for p in 0..3 {
                    jt[(0, p)] = pj.d_ground[0][p] / pitch * TIE_SCALE;
                    jt[(1, p)] = -pj.d_ground[1][p] / pitch * TIE_SCALE;
                }
            }
            if o.active() {
                sse += o.weight * r.norm_squared();
            }
            per_obs.push(Some(ObsEval { r, jc, jt }));
        }
        Ok(Eval { per_obs, sse })
    }

    /// Accumulates the undamped normal-equation blocks from an evaluation.
    pub fn assemble(&self, eval: &Eval) -> Normals {
        let n = PARAM_COUNT * self.cams.len();
        let mut a = DMatrix::zeros(n, n);
        let mut ga = DVector::zeros(n);
        let mut ties: Vec<TieBlock> = (0..self.ties.len())
            .map(|_| TieBlock {
                c: Matrix3::zeros(),
                g: Vector3::zeros(),
                b: BTreeMap::new(),
            })
            .collect();

        for (o, ev) in self.obs.iter().zip(&eval.per_obs) {
            if !o.active() {
                continue;
            }
            let Some(ev) = ev else { continue };
            let w = o.weight;
            let base = PARAM_COUNT * o.cam;
            let ata = ev.jc.transpose() * ev.jc * w;
            a.view_mut((base, base), (PARAM_COUNT, PARAM_COUNT)).add_assign(&ata);
            let gr = ev.jc.transpose() * ev.r * w;
            ga.rows_mut(base, PARAM_COUNT).add_assign(&gr);
            if let Target::Tie(j) = o.target {
                let tb = &mut ties[j];
                tb.c += ev.jt.transpose() * ev.jt * w;
                tb.g += ev.jt.transpose() * ev.r * w;
                *tb.b
                    .entry(o.cam)
                    .or_insert_with(SMatrix::<f64, PARAM_COUNT, 3>::zeros) +=
                    ev.jc.transpose() * ev.jt * w;
            }
        }
        Normals { a, ga, ties }
    }

    /// Solves the damped normal equations via a Schur complement over tie
    /// points and a Jacobi-preconditioned Cholesky of the camera system.
    pub fn solve(&self, normals: &Normals, lambda: f64) -> Result<Step, AdjustError> {
        let n = PARAM_COUNT * self.cams.len();
        let mut s = normals.a.clone();
        let mut rhs = normals.ga.clone();
        for i in 0..n {
            s[(i, i)] *= 1.0 + lambda;
        }

        let mut tie_inv = vec![None; normals.ties.len()];
        for (j, tb) in normals.ties.iter().enumerate() {
            if !self.tie_active[j] {
                continue;
            }
            let mut c = tb.c;
            for i in 0..3 {
                c[(i, i)] *= 1.0 + lambda;
            }
            let Some(chol) = c.cholesky() else {
                return Err(AdjustError::SingularNormalMatrix {
                    parameters: tie_parameter_names(self, j),
                });
            };
            let ci = chol.inverse();
            let cg = ci * tb.g;
            for (k1, b1) in &tb.b {
                rhs.rows_mut(PARAM_COUNT * k1, PARAM_COUNT)
                    .add_assign(&(-(b1 * cg)));
                for (k2, b2) in &tb.b {
                    let block = b1 * ci * b2.transpose();
                    s.view_mut(
                        (PARAM_COUNT * k1, PARAM_COUNT * k2),
                        (PARAM_COUNT, PARAM_COUNT),
                    )
                    .add_assign(&(-block));
                }
            }
            tie_inv[j] = Some(ci);
        }

        // Jacobi preconditioning of the reduced camera system.
        let mut d = DVector::zeros(n);
        for i in 0..n {
            let v = s[(i, i)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(AdjustError::SingularNormalMatrix {
                    parameters: vec![self.parameter_name(i)],
                });
            }
            d[i] = 1.0 / v.sqrt();
        }
        let mut sp = s;
        for i in 0..n {
            for k in 0..n {
                sp[(i, k)] *= d[i] * d[k];
            }
        }
        let rp = rhs.component_mul(&d);
        let Some(chol) = sp.clone().cholesky() else {
            return Err(AdjustError::SingularNormalMatrix {
                parameters: self.deficient_parameters(&sp),
            });
        };
        let y = chol.solve(&rp);
        let dc = y.component_mul(&d);

        let mut dties = vec![Vector3::zeros(); normals.ties.len()];
        for (j, tb) in normals.ties.iter().enumerate() {
            let Some(ci) = tie_inv[j] else { continue };
            let mut rhs_t = tb.g;
            for (k, b) in &tb.b {
                rhs_t -= b.transpose() * dc.rows(PARAM_COUNT * k, PARAM_COUNT);
            }
            dties[j] = ci * rhs_t;
        }
        Ok(Step { cams: dc, ties: dties })
    }

    /// Eigen check of the Jacobi-scaled reduced normals at zero damping.
    /// Run once on the initial system: Levenberg damping would otherwise
    /// mask a structural rank defect and let the solver wander.
    pub fn verify_rank(&self, normals: &Normals) -> Result<(), AdjustError> {
        let n = PARAM_COUNT * self.cams.len();
        let mut s = normals.a.clone();
        for (j, tb) in normals.ties.iter().enumerate() {
            if !self.tie_active[j] {
                continue;
            }
            let Some(chol) = tb.c.cholesky() else {
                return Err(AdjustError::SingularNormalMatrix {
                    parameters: tie_parameter_names(self, j),
                });
            };
            let ci = chol.inverse();
            for (k1, b1) in &tb.b {
                for (k2, b2) in &tb.b {
                    let block = b1 * ci * b2.transpose();
                    s.view_mut(
                        (PARAM_COUNT * k1, PARAM_COUNT * k2),
                        (PARAM_COUNT, PARAM_COUNT),
                    )
                    .add_assign(&(-block));
                }
            }
        }
        let mut d = DVector::zeros(n);
        for i in 0..n {
            let v = s[(i, i)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(AdjustError::SingularNormalMatrix {
                    parameters: vec![self.parameter_name(i)],
                });
            }
            d[i] = 1.0 / v.sqrt();
        }
        for i in 0..n {
            for k in 0..n {
                s[(i, k)] *= d[i] * d[k];
            }
        }
        let deficient = self.deficient_parameters(&s);
        if deficient.is_empty() {
            Ok(())
        } else {
            Err(AdjustError::SingularNormalMatrix {
                parameters: deficient,
            })
        }
    }

    /// Names the parameters carried by eigenvectors of near-zero
    /// eigenvalues of the scaled normal matrix.
    fn deficient_parameters(&self, scaled: &DMatrix<f64>) -> Vec<String> {
        let eig = scaled.clone().symmetric_eigen();
        let mut names = Vec::new();
        for (k, l) in eig.eigenvalues.iter().enumerate() {
            if *l >= RANK_TOL {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|a, b| v[*b].abs().total_cmp(&v[*a].abs()));
            let mut named = 0;
            for &i in &idx {
                if v[i].abs() >= 0.3 || named == 0 {
                    let name = self.parameter_name(i);
                    if !names.contains(&name) {
                        names.push(name);
                    }
                    named += 1;
                } else {
                    break;
                }
            }
        }
        names
    }

    fn parameter_name(&self, flat: usize) -> String {
        let cam = flat / PARAM_COUNT;
        let p = flat % PARAM_COUNT;
        format!("{}.{}", self.cams[cam].id, PARAM_NAMES[p])
    }

    pub fn snapshot(&self) -> Snapshot {
        (
            self.cams.iter().map(|c| c.params.clone()).collect(),
            self.ties.clone(),
        )
    }

    pub fn restore(&mut self, snap: &Snapshot) {
        for (c, p) in self.cams.iter_mut().zip(&snap.0) {
            c.params = p.clone();
        }
        self.ties.clone_from(&snap.1);
    }

    pub fn apply_step(&mut self, step: &Step) {
        for (k, cam) in self.cams.iter_mut().enumerate() {
            let mut arr = cam.params.to_array();
            for p in 0..PARAM_COUNT {
                arr[p] += PARAM_SCALES[p] * step.cams[PARAM_COUNT * k + p];
            }
            cam.params = CameraParams::from_array(&arr);
        }
        for (j, dt) in step.ties.iter().enumerate() {
            if self.tie_active[j] {
                self.ties[j] += TIE_SCALE * dt;
            }
        }
    }
}

fn tie_parameter_names(prob: &Problem, j: usize) -> Vec<String> {
    let id = prob
        .obs
        .iter()
        .find_map(|o| match (&o.target, &o.kind) {
            (Target::Tie(k), ObservationKind::Tie { id }) if *k == j => Some(id.clone()),
            _ => None,
        })
        .unwrap_or_else(|| format!("#{j}"));
    ["X", "Y", "Z"].iter().map(|c| format!("tie {id}.{c}")).collect()
}

/// Rough ground estimate for a tie point: midpoint of the closest
/// approach of the first two rays from distinct images. Initial cameras
/// can be badly wrong, so no consistency threshold is applied here.
fn initial_tie_ground(
    cameras: &[PanoramicCamera],
    tp: &TiePoint,
) -> Result<Vector3<f64>, AdjustError> {
    let index: BTreeMap<&str, usize> = cameras
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let mut rays: Vec<(usize, Vector3<f64>, Vector3<f64>)> = Vec::new();
    for (image_id, px) in &tp.observations {
        let cam = index[image_id.as_str()];
        if rays.iter().any(|(c, _, _)| *c == cam) {
            continue;
        }
        let mm = cameras[cam].pixel_to_mm(PixelPoint::new(px.col, px.row));
        let (o, d) = cameras[cam].backproject(mm);
        rays.push((cam, o.to_vector(), d));
        if rays.len() == 2 {
            break;
        }
    }
    let [(_, oa, da), (_, ob, db)] = rays.as_slice() else {
        return Err(AdjustError::Format(format!(
            "tie point {}: no two rays from distinct images",
            tp.id
        )));
    };
    let (oa, da, ob, db) = (*oa, *da, *ob, *db);
    let w = oa - ob;
    let b = da.dot(&db);
    let denom = 1.0 - b * b;
    if denom < 1e-12 {
        // Parallel rays: drop the point at a nominal slant range.
        return Ok(oa + 200_000.0 * da);
    }
    let d = da.dot(&w);
    let e = db.dot(&w);
    let sa = ((b * e - d) / denom).max(0.0);
    let sb = ((e - b * d) / denom).max(0.0);
    Ok(((oa + sa * da) + (ob + sb * db)) / 2.0)
}
