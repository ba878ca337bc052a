//! Pair feature descriptor, canonical frames, and pose recovery.
//!
//! Everything downstream reduces to three operations on oriented point pairs:
//! the four-component pair feature (rigid-motion invariant), the canonical
//! frame that moves an oriented point to the origin with its normal on +x, and
//! the planar rotation angle that the canonical frame leaves undetermined.

use nalgebra as na;

use crate::error::{Error, Result};

pub type Vec3 = na::Vector3<f64>;
pub type Point3 = na::Point3<f64>;
pub type UnitVec3 = na::Unit<na::Vector3<f64>>;
pub type Pose = na::Isometry3<f64>;

/// Pairs closer than this are rejected as degenerate.
pub const DEGENERATE_DIST: f64 = 1e-12;

/// Four-component descriptor of an oriented point pair. Invariant under rigid
/// motion of the pair; angles are in [0, pi], the distance in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeature {
    pub dist: f64,
    pub angle_n1_d: f64,
    pub angle_n2_d: f64,
    pub angle_n1_n2: f64,
}

/// Angle in [0, pi] between a unit vector and an arbitrary unit direction.
/// The dot product is clamped so accumulated rounding never feeds `acos` a
/// value outside [-1, 1].
#[inline]
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Computes the pair feature of `(p1, n1)` and `(p2, n2)`.
///
/// Fails with [`Error::DegeneratePair`] when the points are closer than
/// [`DEGENERATE_DIST`], since the direction between them is then undefined.
pub fn compute_ppf(p1: &Point3, n1: &UnitVec3, p2: &Point3, n2: &UnitVec3) -> Result<PairFeature> {
    let d = p2 - p1;
    let dist = d.norm();
    if dist <= DEGENERATE_DIST {
        return Err(Error::DegeneratePair {
            eps: DEGENERATE_DIST,
        });
    }
    let dn = d / dist;
    Ok(PairFeature {
        dist,
        angle_n1_d: angle_between(n1, &dn),
        angle_n2_d: angle_between(n2, &dn),
        angle_n1_n2: angle_between(n1, n2),
    })
}

/// Rigid transform T with T(p) = 0 and T rotating `n` onto +x.
///
/// The rotation is the minimal one between `n` and +x; when `n` is within
/// 1e-9 of -x that rotation is undefined, and the tie is broken with a
/// half-turn about z.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalFrame {
    pub transform: Pose,
}

pub fn canonical_frame(p: &Point3, n: &UnitVec3) -> CanonicalFrame {
    let x = Vec3::x();
    let c = n.dot(&x);
    let rot = if c >= 1.0 - 1e-9 {
        na::UnitQuaternion::identity()
    } else if c <= -1.0 + 1e-9 {
        na::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::PI)
    } else {
        let axis = UnitVec3::new_normalize(n.cross(&x));
        na::UnitQuaternion::from_axis_angle(&axis, c.acos())
    };
    let t = na::Translation3::from(-(rot * p.coords));
    CanonicalFrame {
        transform: Pose::from_parts(t, rot),
    }
}

impl CanonicalFrame {
    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.transform * p
    }
}

/// Wraps an angle into [-pi, pi). Pure arithmetic, valid for any finite input.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor()
}

/// Rotation about +x that brings the canonical-frame image of `p2` into the
/// half-plane {z = 0, y >= 0}.
///
/// With `q = frame(p2)` the angle is `-atan2(q.z, q.y)`, wrapped to
/// [-pi, pi). Fails with [`Error::PointOnAxis`] when `p2` maps onto the x
/// axis, where every rotation fixes it.
pub fn alpha_of_pair(frame: &CanonicalFrame, p2: &Point3) -> Result<f64> {
    let q = frame.apply(p2);
    if q.y.hypot(q.z) <= DEGENERATE_DIST {
        return Err(Error::PointOnAxis);
    }
    Ok(wrap_angle(-q.z.atan2(q.y)))
}

/// Pose voted for by a matched (scene reference, model point) pair.
///
/// Composes the model frame, a rotation by `alpha` about +x, and the inverse
/// scene frame, so that the model reference lands exactly on the scene
/// reference with aligned normals. `alpha` is the model-pair angle minus the
/// scene-pair angle.
pub fn pose_from_correspondence(
    scene_ref: &Point3,
    scene_normal: &UnitVec3,
    model_ref: &Point3,
    model_normal: &UnitVec3,
    alpha: f64,
) -> Pose {
    let t_s = canonical_frame(scene_ref, scene_normal).transform;
    let t_m = canonical_frame(model_ref, model_normal).transform;
    let rx = Pose::from_parts(
        na::Translation3::identity(),
        na::UnitQuaternion::from_axis_angle(&Vec3::x_axis(), alpha),
    );
    t_s.inverse() * rx * t_m
}

/// Geodesic angle between the rotation parts of two poses, in [0, pi].
#[inline]
pub fn rotation_distance(a: &Pose, b: &Pose) -> f64 {
    a.rotation.angle_to(&b.rotation)
}

/// Euclidean distance between the translation parts of two poses.
#[inline]
pub fn translation_distance(a: &Pose, b: &Pose) -> f64 {
    (a.translation.vector - b.translation.vector).norm()
}
