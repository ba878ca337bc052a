//! Projective ICP refinement of a pose hypothesis against a depth image.
//!
//! Data association is by projection rather than nearest-neighbor search:
//! each model point is transformed by the current pose, projected into the
//! depth image, and paired with whatever the scene observed at that pixel.
//! That makes an iteration linear in the model size regardless of scene
//! clutter. Correspondences are gated by distance and normal agreement, the
//! worst tail is trimmed, and the update minimizes the point-to-plane error
//! with a weak point-to-point anchor (falling back to a pure point-to-point
//! fit when scene normals are too sparse). A solved step is only accepted
//! when it lowers the trimmed RMS error of the correspondence set it was
//! solved from, halving overshoots, so the error is non-increasing within
//! every accepted iteration.

use crate::cloud::OrientedPointCloud;
use crate::depth::{DepthImage, Intrinsics};
use crate::error::{Error, Result};
use crate::geom::{Point3, Pose, UnitVec3, Vec3};
use nalgebra as na;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Absolute distance gate on a correspondence, meters.
    pub dist_gate: f64,
    /// Maximum angle between paired normals, radians.
    pub normal_gate: f64,
    /// Fraction of the worst surviving correspondences dropped each
    /// iteration.
    pub trim_fraction: f64,
    /// Fewer gated correspondences than this on the first association is a
    /// [`Error::NoOverlap`].
    pub min_correspondences: usize,
    /// Converged when an accepted step moves less than this, meters.
    pub translation_eps: f64,
    /// Converged when an accepted step rotates less than this, radians.
    pub rotation_eps: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 15,
            dist_gate: 0.0125,
            normal_gate: 45.0f64.to_radians(),
            trim_fraction: 0.10,
            min_correspondences: 6,
            translation_eps: 1e-5,
            rotation_eps: 0.002f64.to_radians(),
        }
    }
}

impl IcpParams {
    /// Defaults with the distance gate tied to the sampling distance of the
    /// clouds being aligned.
    pub fn for_sampling(min_dist: f64) -> Self {
        Self {
            dist_gate: 2.5 * min_dist,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub pose: Pose,
    /// Trimmed point-to-point RMS error of the association at the initial
    /// pose and after each accepted step. The association is refreshed
    /// between steps, so an entry can rise when a better pose regains
    /// correspondences a worse one had lost.
    pub residual_history: Vec<f64>,
    /// Per accepted step, the solver's RMS objective over the step's own
    /// trimmed correspondence set before and after moving: the after value
    /// is always lower.
    pub step_residuals: Vec<(f64, f64)>,
    pub iterations: usize,
    /// True when the last accepted step moved below the epsilons; false when
    /// the iteration budget ran out or a step failed to improve.
    pub converged: bool,
    /// Correspondences associated at the final pose.
    pub correspondences: usize,
}

impl IcpResult {
    pub fn final_rmse(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::INFINITY)
    }
}

struct Correspondence {
    /// Model point in camera coordinates under the current pose.
    model: Point3,
    scene: Point3,
    scene_normal: Option<UnitVec3>,
    dist2: f64,
}

/// Pixel radius searched around each projected model point. Under a slightly
/// wrong pose a thin part lands a few pixels off its true footprint; with a
/// bare single-pixel lookup all of its pairs fail the gates and the remaining
/// locally planar pairs cannot pin the pose.
const SEARCH_WINDOW: i64 = 2;

/// Projects every model point under `pose` and pairs it with the best
/// gate-passing scene point in a small pixel window, trimmed per `params`.
fn associate(
    model: &OrientedPointCloud,
    pose: &Pose,
    scene: &DepthImage,
    scene_normals: &[Option<UnitVec3>],
    k: &Intrinsics,
    params: &IcpParams,
) -> Vec<Correspondence> {
    let cos_gate = params.normal_gate.cos();
    let gate2 = params.dist_gate * params.dist_gate;
    let mut out = Vec::new();
    for (i, p) in model.points.iter().enumerate() {
        let pc = pose * p;
        if pc.z <= 1e-3 {
            continue;
        }
        let mn = model.normals.as_ref().map(|n| pose.rotation * n[i]);
        let (u, v) = k.project(&pc);
        let (u0, v0) = (u.round() as i64, v.round() as i64);
        let mut best: Option<Correspondence> = None;
        for vi in v0 - SEARCH_WINDOW..=v0 + SEARCH_WINDOW {
            for ui in u0 - SEARCH_WINDOW..=u0 + SEARCH_WINDOW {
                if ui < 0 || vi < 0 || ui >= scene.width as i64 || vi >= scene.height as i64 {
                    continue;
                }
                let (ui, vi) = (ui as u32, vi as u32);
                if !scene.is_valid(ui, vi) {
                    continue;
                }
                let s = k.backproject(ui as f64, vi as f64, scene.get(ui, vi) as f64);
                let dist2 = (pc - s).norm_squared();
                if dist2 > gate2 || best.as_ref().is_some_and(|b| b.dist2 <= dist2) {
                    continue;
                }
                let sn = scene_normals[(vi * scene.width + ui) as usize];
                if let (Some(mn), Some(sn)) = (&mn, sn) {
                    if mn.dot(&sn) < cos_gate {
                        continue;
                    }
                }
                best = Some(Correspondence {
                    model: pc,
                    scene: s,
                    scene_normal: sn,
                    dist2,
                });
            }
        }
        out.extend(best);
    }
    if params.trim_fraction > 0.0 && !out.is_empty() {
        let keep = out.len() - (out.len() as f64 * params.trim_fraction).floor() as usize;
        out.sort_by(|a, b| a.dist2.total_cmp(&b.dist2));
        out.truncate(keep.max(1));
    }
    out
}

fn rmse(corrs: &[Correspondence]) -> f64 {
    let ss: f64 = corrs.iter().map(|c| c.dist2).sum();
    (ss / corrs.len() as f64).sqrt()
}

/// RMS of the solver's own objective over the same correspondences after
/// moving the model side by `delta`: point-to-plane residuals plus the
/// anchored point terms when the plane system was used, plain point
/// distances otherwise. Judging a step by the metric it was solved under
/// keeps the line search from vetoing legitimate in-plane motion over
/// association lattice noise.
fn objective_rmse(corrs: &[Correspondence], delta: &Pose, planes: bool) -> f64 {
    let mut ss = 0.0;
    for c in corrs {
        let e = delta * c.model - c.scene;
        if planes {
            ss += POINT_ANCHOR * e.norm_squared();
            if let Some(n) = c.scene_normal {
                let r = e.dot(&n);
                ss += r * r;
            }
        } else {
            ss += e.norm_squared();
        }
    }
    (ss / corrs.len() as f64).sqrt()
}

/// Weight of the point-to-point anchor rows mixed into the point-to-plane
/// system. Pure point-to-plane cannot observe sliding along a single visible
/// plane (and projective association silently drops the silhouette pairs
/// that would resist it), so a weak anchor to the associated points pins
/// those motions without disturbing the plane term's convergence.
const POINT_ANCHOR: f64 = 0.1;

/// Point-to-plane least squares for the incremental camera-frame motion
/// x' = x + w x x + t as the twist (w, t), solved from the normal equations
/// with weak point-to-point anchoring. None when normals cover less than
/// half the set or the system is ill-conditioned.
fn solve_point_to_plane(corrs: &[Correspondence]) -> Option<(Vec3, Vec3)> {
    let mut a = na::Matrix6::<f64>::zeros();
    let mut b = na::Vector6::<f64>::zeros();
    let mut used = 0usize;
    for c in corrs {
        let m = c.model.coords;
        if let Some(n) = c.scene_normal {
            let j = na::Vector6::new(
                m.cross(&n).x,
                m.cross(&n).y,
                m.cross(&n).z,
                n.x,
                n.y,
                n.z,
            );
            let r = (c.model - c.scene).dot(&n);
            a += j * j.transpose();
            b += j * (-r);
            used += 1;
        }
        let e = c.model - c.scene;
        let rows = [
            (na::Vector6::new(0.0, m.z, -m.y, 1.0, 0.0, 0.0), e.x),
            (na::Vector6::new(-m.z, 0.0, m.x, 0.0, 1.0, 0.0), e.y),
            (na::Vector6::new(m.y, -m.x, 0.0, 0.0, 0.0, 1.0), e.z),
        ];
        for (j, r) in rows {
            a += j * j.transpose() * POINT_ANCHOR;
            b += j * (-r * POINT_ANCHOR);
        }
    }
    if used * 2 < corrs.len() || used < 6 {
        return None;
    }
    let x = a.lu().solve(&b)?;
    let w = Vec3::new(x[0], x[1], x[2]);
    let t = Vec3::new(x[3], x[4], x[5]);
    if !w.iter().chain(t.iter()).all(|v| v.is_finite()) {
        return None;
    }
    Some((w, t))
}

/// Rigid point-to-point fit (orthogonal Procrustes via SVD) as a twist, used
/// when the point-to-plane system is unavailable.
fn solve_point_to_point(corrs: &[Correspondence]) -> Option<(Vec3, Vec3)> {
    let n = corrs.len() as f64;
    let cm = corrs.iter().fold(Vec3::zeros(), |s, c| s + c.model.coords) / n;
    let cs = corrs.iter().fold(Vec3::zeros(), |s, c| s + c.scene.coords) / n;
    let mut h = na::Matrix3::<f64>::zeros();
    for c in corrs {
        h += (c.model.coords - cm) * (c.scene.coords - cs).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut d = na::Matrix3::identity();
    d[(2, 2)] = (v_t.transpose() * u.transpose()).determinant().signum();
    let r = v_t.transpose() * d * u.transpose();
    let rot = na::Rotation3::from_matrix_unchecked(r);
    let t = cs - rot * cm;
    if !t.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((na::UnitQuaternion::from_rotation_matrix(&rot).scaled_axis(), t))
}

fn step_pose(w: Vec3, t: Vec3) -> Pose {
    Pose::from_parts(
        na::Translation3::from(t),
        na::UnitQuaternion::from_scaled_axis(w),
    )
}

/// Refines `init` so the model rendered into the camera matches the observed
/// depth. `scene_normals` is the per-pixel normal map of `scene` (entries may
/// be None where normals could not be estimated).
pub fn projective_icp(
    model: &OrientedPointCloud,
    scene: &DepthImage,
    scene_normals: &[Option<UnitVec3>],
    k: &Intrinsics,
    init: &Pose,
    params: &IcpParams,
) -> Result<IcpResult> {
    if model.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if scene_normals.len() != scene.width as usize * scene.height as usize {
        return Err(Error::LengthMismatch {
            points: scene.width as usize * scene.height as usize,
            normals: scene_normals.len(),
        });
    }
    let mut pose = *init;
    let mut corrs = associate(model, &pose, scene, scene_normals, k, params);
    if corrs.len() < params.min_correspondences {
        return Err(Error::NoOverlap {
            got: corrs.len(),
            need: params.min_correspondences,
        });
    }
    let mut history = vec![rmse(&corrs)];
    let mut step_residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_iterations {
        iterations += 1;
        let solved = solve_point_to_plane(&corrs)
            .map(|wt| (wt, true))
            .or_else(|| solve_point_to_point(&corrs).map(|wt| (wt, false)));
        let Some(((w, t), planes)) = solved else {
            break;
        };
        // A step is accepted when it lowers the error of the correspondences
        // it was solved from; overshoots are halved. Judging against a fresh
        // association instead would reward poses that shed inconvenient
        // pairs.
        let before = objective_rmse(&corrs, &Pose::identity(), planes);
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..4 {
            let delta = step_pose(w * scale, t * scale);
            let after = objective_rmse(&corrs, &delta, planes);
            if after < before {
                accepted = Some((delta, after, scale));
                break;
            }
            scale *= 0.5;
        }
        let Some((delta, after, scale)) = accepted else {
            break;
        };
        pose = delta * pose;
        step_residuals.push((before, after));
        corrs = associate(model, &pose, scene, scene_normals, k, params);
        if corrs.len() < params.min_correspondences {
            break;
        }
        history.push(rmse(&corrs));
        if (t * scale).norm() < params.translation_eps
            && (w * scale).norm() < params.rotation_eps
        {
            converged = true;
            break;
        }
    }
    Ok(IcpResult {
        pose,
        residual_history: history,
        step_residuals,
        iterations,
        converged,
        correspondences: corrs.len(),
    })
}
