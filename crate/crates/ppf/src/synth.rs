//! Synthetic depth scenes with exact ground truth.
//!
//! Models are small solids built from cuboids and cone frustums with carved
//! notches (every shape is asymmetric, so a recovered pose is either right
//! or measurably wrong). Scenes are raycast analytically per pixel, then
//! optionally degraded: a support plane behind the object, clutter spheres,
//! a foreground occluder band, Gaussian depth noise, and millimeter
//! quantization matching what a 16-bit depth PNG preserves.

use crate::cloud::OrientedPointCloud;
use crate::depth::{DepthImage, Intrinsics};
use crate::error::{Error, Result};
use crate::geom::{Point3, Pose, UnitVec3, Vec3};
use nalgebra as na;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelShape {
    /// Two joined cuboids forming an L.
    Bracket,
    /// A cuboid with one corner carved away.
    NotchedBox,
    /// A tapered cone frustum with a flat milled along one side.
    Cam,
    /// A long thin cuboid with a corner notch; its diameter is far larger
    /// than its cross-section, which is what the two-ball search is for.
    Bar,
}

impl ModelShape {
    pub fn all() -> [ModelShape; 4] {
        [Self::Bracket, Self::NotchedBox, Self::Cam, Self::Bar]
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bracket => "bracket",
            Self::NotchedBox => "notched-box",
            Self::Cam => "cam",
            Self::Bar => "bar",
        }
    }
}

impl FromStr for ModelShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelShape::all()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::BadConfigValue {
                key: "shape".into(),
                value: s.into(),
                reason: "expected one of bracket, notched-box, cam, bar".into(),
            })
    }
}

impl std::fmt::Display for ModelShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
struct Cuboid {
    min: Vec3,
    max: Vec3,
}

impl Cuboid {
    fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self {
            min: Vec3::from(min),
            max: Vec3::from(max),
        }
    }

    /// Strict interior test shrunk by `eps` (negative `eps` expands).
    fn contains(&self, p: &Point3, eps: f64) -> bool {
        (0..3).all(|a| p.coords[a] > self.min[a] + eps && p.coords[a] < self.max[a] - eps)
    }

    /// Slab intersection: entry and exit parameters with the face normals
    /// crossed there.
    fn intersect(&self, o: &Point3, d: &Vec3) -> Option<[(f64, Vec3); 2]> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        let mut n0 = Vec3::zeros();
        let mut n1 = Vec3::zeros();
        for a in 0..3 {
            let mut axis_n = Vec3::zeros();
            if d[a].abs() < 1e-15 {
                if o.coords[a] < self.min[a] || o.coords[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[a];
            let (mut ta, mut tb) = ((self.min[a] - o.coords[a]) * inv, (self.max[a] - o.coords[a]) * inv);
            axis_n[a] = -inv.signum();
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            if ta > t0 {
                t0 = ta;
                n0 = axis_n;
            }
            if tb < t1 {
                t1 = tb;
                n1 = -axis_n;
            }
        }
        (t0 < t1).then_some([(t0, n0), (t1, n1)])
    }
}

/// Cone frustum about the z axis: radius a + b z over z in [z0, z1].
#[derive(Debug, Clone, Copy)]
struct Frustum {
    z0: f64,
    z1: f64,
    a: f64,
    b: f64,
}

impl Frustum {
    fn radius(&self, z: f64) -> f64 {
        self.a + self.b * z
    }

    fn contains(&self, p: &Point3) -> bool {
        p.z >= self.z0 && p.z <= self.z1 && p.x.hypot(p.y) <= self.radius(p.z)
    }

    fn events(&self, o: &Point3, d: &Vec3, out: &mut Vec<(f64, Vec3)>) {
        // Lateral surface: x^2 + y^2 = (a + b z)^2 along the ray.
        let qa = d.x * d.x + d.y * d.y - self.b * self.b * d.z * d.z;
        let rz = self.a + self.b * o.z;
        let qb = 2.0 * (o.x * d.x + o.y * d.y - self.b * d.z * rz);
        let qc = o.x * o.x + o.y * o.y - rz * rz;
        if qa.abs() > 1e-15 {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
                    let p = o + d * t;
                    if p.z >= self.z0 && p.z <= self.z1 {
                        let rho = self.radius(p.z);
                        if rho > 1e-12 {
                            let n = Vec3::new(p.x / rho, p.y / rho, -self.b);
                            out.push((t, n.normalize()));
                        }
                    }
                }
            }
        }
        // End caps.
        if d.z.abs() > 1e-15 {
            for (zc, nz) in [(self.z0, -1.0), (self.z1, 1.0)] {
                let t = (zc - o.z) / d.z;
                let p = o + d * t;
                if p.x.hypot(p.y) <= self.radius(zc) {
                    out.push((t, Vec3::new(0.0, 0.0, nz)));
                }
            }
        }
    }
}

/// A union of cuboids and frustums with cuboid notches carved out of it.
/// Notches are oversized past the faces they cut through so no two surfaces
/// coincide.
#[derive(Debug, Clone)]
pub struct Solid {
    cuboids: Vec<Cuboid>,
    frustums: Vec<Frustum>,
    notches: Vec<Cuboid>,
}

impl Solid {
    pub fn inside(&self, p: &Point3) -> bool {
        let positive = self.cuboids.iter().any(|c| c.contains(p, 0.0))
            || self.frustums.iter().any(|f| f.contains(p));
        positive && !self.notches.iter().any(|n| n.contains(p, 0.0))
    }

    /// First intersection of the ray `o + t d` (t > 1e-9) with the solid
    /// surface, as the parameter and the outward surface normal.
    pub fn raycast(&self, o: &Point3, d: &Vec3) -> Option<(f64, UnitVec3)> {
        let mut events: Vec<(f64, Vec3)> = Vec::with_capacity(8);
        for c in self.cuboids.iter().chain(&self.notches) {
            if let Some(pair) = c.intersect(o, d) {
                events.extend(pair);
            }
        }
        for f in &self.frustums {
            f.events(o, d, &mut events);
        }
        events.retain(|(t, _)| *t > 1e-9);
        events.sort_by(|x, y| x.0.total_cmp(&y.0));
        // The first event interval whose midpoint is inside starts at the
        // visible surface.
        for i in 0..events.len() {
            let t = events[i].0;
            let t_next = events.get(i + 1).map(|e| e.0).unwrap_or(t + 1.0);
            let mid = o + d * (0.5 * (t + t_next));
            if self.inside(&mid) {
                let mut n = events[i].1;
                if n.dot(d) > 0.0 {
                    n = -n;
                }
                return Some((t, UnitVec3::new_normalize(n)));
            }
        }
        None
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for c in &self.cuboids {
            lo = lo.inf(&c.min);
            hi = hi.sup(&c.max);
        }
        for f in &self.frustums {
            let r = f.radius(f.z0).max(f.radius(f.z1));
            lo = lo.inf(&Vec3::new(-r, -r, f.z0));
            hi = hi.sup(&Vec3::new(r, r, f.z1));
        }
        (lo, hi)
    }
}

/// The model-frame solid for a shape. Dimensions are fixed; every shape fits
/// in a 17 cm ball and has no rotational symmetry.
pub fn shape_solid(shape: ModelShape) -> Solid {
    match shape {
        ModelShape::Bracket => Solid {
            cuboids: vec![
                Cuboid::new([-0.05, -0.02, -0.01], [0.05, 0.02, 0.01]),
                Cuboid::new([0.03, -0.02, -0.01], [0.05, 0.02, 0.05]),
            ],
            frustums: vec![],
            notches: vec![],
        },
        ModelShape::NotchedBox => Solid {
            cuboids: vec![Cuboid::new([-0.045, -0.03, -0.02], [0.045, 0.03, 0.02])],
            frustums: vec![],
            notches: vec![Cuboid::new([0.015, 0.008, 0.004], [0.046, 0.031, 0.021])],
        },
        ModelShape::Cam => Solid {
            cuboids: vec![],
            frustums: vec![Frustum {
                z0: -0.045,
                z1: 0.045,
                a: 0.030,
                b: -1.0 / 9.0,
            }],
            notches: vec![Cuboid::new([0.022, -0.015, -0.046], [0.040, 0.015, 0.046])],
        },
        ModelShape::Bar => Solid {
            cuboids: vec![Cuboid::new([-0.08, -0.0125, -0.01], [0.08, 0.0125, 0.01])],
            frustums: vec![],
            notches: vec![Cuboid::new([0.05, 0.005, 0.002], [0.081, 0.0131, 0.0101])],
        },
    }
}

/// Samples the solid surface on a grid of spacing `h` with exact outward
/// normals. Faces of notches are sampled from inside the carved volume with
/// the normal flipped into it.
pub fn sample_surface(solid: &Solid, h: f64) -> OrientedPointCloud {
    // Points closer than this to another surface are dropped so every kept
    // point has clear space on both sides of its own face.
    const EDGE: f64 = 2e-4;
    let mut pts = Vec::new();
    let mut normals = Vec::new();
    let mut push = |p: Point3, n: Vec3, keep: bool| {
        if keep {
            pts.push(p);
            normals.push(UnitVec3::new_normalize(n));
        }
    };
    let in_frustum = |f: &Frustum, p: &Point3, margin: f64| {
        p.z > f.z0 + margin && p.z < f.z1 - margin && p.x.hypot(p.y) < f.radius(p.z) - margin
    };
    let on_positive_boundary =
        |solid: &Solid, p: &Point3, skip_cuboid: Option<usize>, skip_frustum: Option<usize>| {
            let buried = solid
                .cuboids
                .iter()
                .enumerate()
                .any(|(i, c)| Some(i) != skip_cuboid && c.contains(p, -EDGE))
                || solid
                    .frustums
                    .iter()
                    .enumerate()
                    .any(|(i, f)| Some(i) != skip_frustum && in_frustum(f, p, -EDGE));
            let carved = solid.notches.iter().any(|nn| nn.contains(p, -EDGE));
            !buried && !carved
        };
    let grid = |lo: f64, hi: f64| {
        let n = ((hi - lo) / h).ceil().max(1.0) as usize;
        let step = (hi - lo) / n as f64;
        (0..n).map(move |i| lo + (i as f64 + 0.5) * step)
    };
    for (ci, c) in solid.cuboids.iter().enumerate() {
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for (val, sign) in [(c.min[axis], -1.0), (c.max[axis], 1.0)] {
                for a in grid(c.min[u], c.max[u]) {
                    for b in grid(c.min[v], c.max[v]) {
                        let mut q = Vec3::zeros();
                        q[axis] = val;
                        q[u] = a;
                        q[v] = b;
                        let p = Point3::from(q);
                        let mut n = Vec3::zeros();
                        n[axis] = sign;
                        push(p, n, on_positive_boundary(solid, &p, Some(ci), None));
                    }
                }
            }
        }
    }
    for (fi, f) in solid.frustums.iter().enumerate() {
        let slant = (1.0 + f.b * f.b).sqrt();
        let nz = ((f.z1 - f.z0) * slant / h).ceil() as usize;
        for iz in 0..nz {
            let z = f.z0 + (iz as f64 + 0.5) * (f.z1 - f.z0) / nz as f64;
            let rho = f.radius(z);
            let ntheta = (2.0 * std::f64::consts::PI * rho / h).ceil().max(3.0) as usize;
            for it in 0..ntheta {
                let th = 2.0 * std::f64::consts::PI * (it as f64 + 0.5) / ntheta as f64;
                let p = Point3::new(rho * th.cos(), rho * th.sin(), z);
                let n = Vec3::new(th.cos(), th.sin(), -f.b) / slant;
                push(p, n, on_positive_boundary(solid, &p, None, Some(fi)));
            }
        }
        for (zc, nz) in [(f.z0, -1.0), (f.z1, 1.0)] {
            let r = f.radius(zc);
            for a in grid(-r, r) {
                for b in grid(-r, r) {
                    if a.hypot(b) <= r - EDGE {
                        let p = Point3::new(a, b, zc);
                        push(
                            p,
                            Vec3::new(0.0, 0.0, nz),
                            on_positive_boundary(solid, &p, None, Some(fi)),
                        );
                    }
                }
            }
        }
    }
    for (ni, notch) in solid.notches.iter().enumerate() {
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for (val, sign) in [(notch.min[axis], -1.0), (notch.max[axis], 1.0)] {
                for a in grid(notch.min[u], notch.max[u]) {
                    for b in grid(notch.min[v], notch.max[v]) {
                        let mut q = Vec3::zeros();
                        q[axis] = val;
                        q[u] = a;
                        q[v] = b;
                        let p = Point3::from(q);
                        // Carved surface exists where the notch wall passes
                        // through solid material not carved by another notch.
                        let in_positive = solid.cuboids.iter().any(|c| c.contains(&p, EDGE))
                            || solid.frustums.iter().any(|f| in_frustum(f, &p, EDGE));
                        let carved_again = solid
                            .notches
                            .iter()
                            .enumerate()
                            .any(|(j, nn)| j != ni && nn.contains(&p, -EDGE));
                        let mut n = Vec3::zeros();
                        n[axis] = -sign;
                        push(p, n, in_positive && !carved_again);
                    }
                }
            }
        }
    }
    OrientedPointCloud::with_normals(pts, normals).expect("lengths match by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseMode {
    /// Uniformly random orientation.
    Random,
    /// The model x axis points down the view direction (within a few
    /// degrees), so an elongated model shows only its cross-section.
    EndOn,
}

impl FromStr for PoseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "end-on" => Ok(Self::EndOn),
            _ => Err(Error::BadConfigValue {
                key: "pose_mode".into(),
                value: s.into(),
                reason: "expected random or end-on".into(),
            }),
        }
    }
}

/// Scene composition and sensor degradation settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub shape: ModelShape,
    pub frames: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub intrinsics: Intrinsics,
    /// Add a support plane tangent to the far side of the object.
    pub plane: bool,
    /// Target clutter area as a fraction of the object's pixel area.
    pub clutter: f64,
    /// Gaussian depth noise in meters, applied per valid pixel.
    pub noise_sigma: f64,
    /// Fraction of the object's screen width hidden by a foreground band.
    pub occlusion: f64,
    pub pose_mode: PoseMode,
    /// Round depths to the millimeter grid a 16-bit PNG stores.
    pub quantize: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            shape: ModelShape::Bracket,
            frames: 20,
            seed: 7,
            width: 160,
            height: 120,
            intrinsics: Intrinsics::new(400.0, 400.0, 80.0, 60.0),
            plane: true,
            clutter: 0.0,
            noise_sigma: 0.0,
            occlusion: 0.0,
            pose_mode: PoseMode::Random,
            quantize: true,
        }
    }
}

/// One synthetic frame with its exact ground truth.
#[derive(Debug, Clone)]
pub struct Frame {
    pub depth: DepthImage,
    pub pose: Pose,
    /// Pixels where the object is the visible surface (after occlusion).
    pub object_mask: Vec<bool>,
    pub object_pixels: usize,
}

fn sample_pose(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Pose {
    let t = na::Translation3::new(
        rng.gen_range(-0.03..0.03),
        rng.gen_range(-0.025..0.025),
        rng.gen_range(0.42..0.52),
    );
    let rot = match cfg.pose_mode {
        PoseMode::Random => {
            let q = na::Quaternion::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            na::UnitQuaternion::from_quaternion(q)
        }
        PoseMode::EndOn => {
            let x = UnitVec3::new_normalize(Vec3::new(1.0, 0.0, 0.0));
            let z = UnitVec3::new_normalize(Vec3::new(0.0, 0.0, 1.0));
            let align = na::UnitQuaternion::rotation_between_axis(&x, &z).unwrap();
            let spin = na::UnitQuaternion::from_axis_angle(&z, rng.gen_range(0.0..std::f64::consts::TAU));
            let tilt_axis = UnitVec3::new_normalize(Vec3::new(0.0, 1.0, 0.0));
            let tilt = na::UnitQuaternion::from_axis_angle(
                &tilt_axis,
                rng.gen_range(-5.0f64.to_radians()..5.0f64.to_radians()),
            );
            spin * tilt * align
        }
    };
    Pose::from_parts(t, rot)
}

struct Sphere {
    center: Point3,
    radius: f64,
}

fn ray_sphere(o: &Point3, d: &Vec3, s: &Sphere) -> Option<f64> {
    let oc = o - s.center;
    let qa = d.norm_squared();
    let qb = 2.0 * oc.dot(d);
    let qc = oc.norm_squared() - s.radius * s.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let t = (-qb - disc.sqrt()) / (2.0 * qa);
    (t > 1e-9).then_some(t)
}

/// Renders one frame of the object under `pose` with the configured scene
/// degradations. Raycasting is exact; noise and quantization are applied
/// last.
pub fn render_frame(solid: &Solid, pose: &Pose, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Frame {
    let (w, h) = (cfg.width, cfg.height);
    let k = &cfg.intrinsics;
    let inv = pose.inverse();
    let o_model = inv * Point3::new(0.0, 0.0, 0.0);

    // Pass 1: object depth per pixel by raycasting in the model frame.
    let mut depth = DepthImage::new(w, h);
    let mut mask = vec![false; (w * h) as usize];
    for v in 0..h {
        for u in 0..w {
            let dir = Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let d_model = inv.rotation * dir;
            if let Some((t, _)) = solid.raycast(&o_model, &d_model) {
                depth.set(u, v, t as f32);
                mask[(v * w + u) as usize] = true;
            }
        }
    }
    let object_pixels_alone = depth.valid_count();

    // Pass 2: support plane tangent to the object's far side, tilted so it
    // is not a degenerate fronto-parallel wall.
    if cfg.plane {
        let n = Vec3::new(0.0, -0.342, -0.940).normalize();
        let (lo, hi) = solid.bounding_box();
        // Tangent to the bounding box corner farthest from the camera along
        // n, so the plane supports the object without ever occluding it.
        let mut c = f64::INFINITY;
        for i in 0..8 {
            let corner = Point3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            );
            c = c.min(n.dot(&(pose * corner).coords));
        }
        for v in 0..h {
            for u in 0..w {
                let dir = Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
                let denom = n.dot(&dir);
                if denom.abs() < 1e-12 {
                    continue;
                }
                let t = c / denom;
                if t <= 0.0 {
                    continue;
                }
                let idx = (v * w + u) as usize;
                let cur = depth.get(u, v);
                if cur <= 0.0 || (t as f32) < cur {
                    depth.set(u, v, t as f32);
                    mask[idx] = false;
                }
            }
        }
    }

    // Pass 3: clutter spheres near the object until their visible area
    // reaches the requested fraction of the object's.
    if cfg.clutter > 0.0 {
        let center = pose * Point3::new(0.0, 0.0, 0.0);
        let (lo, hi) = solid.bounding_box();
        let r_obj = 0.5 * (hi - lo).norm();
        let budget = (cfg.clutter * object_pixels_alone as f64) as usize;
        let mut clutter_px = 0usize;
        let mut tries = 0;
        while clutter_px < budget && tries < 40 {
            tries += 1;
            let dir: [f64; 3] = UnitSphere.sample(rng);
            let radius = rng.gen_range(0.012..0.025);
            let offset = rng.gen_range(1.0..1.6) * (r_obj + radius + 0.005);
            let s = Sphere {
                center: center + Vec3::from(dir) * offset,
                radius,
            };
            if s.center.z < 0.2 {
                continue;
            }
            for v in 0..h {
                for u in 0..w {
                    let dir = Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
                    if let Some(t) = ray_sphere(&Point3::new(0.0, 0.0, 0.0), &dir, &s) {
                        let idx = (v * w + u) as usize;
                        let cur = depth.get(u, v);
                        if cur <= 0.0 || (t as f32) < cur {
                            depth.set(u, v, t as f32);
                            if mask[idx] {
                                mask[idx] = false;
                            }
                            clutter_px += 1;
                        }
                    }
                }
            }
        }
    }

    // Pass 4: foreground band hiding the left fraction of the object.
    if cfg.occlusion > 0.0 {
        let (mut u0, mut u1, mut v0, mut v1) = (u32::MAX, 0u32, u32::MAX, 0u32);
        for v in 0..h {
            for u in 0..w {
                if mask[(v * w + u) as usize] {
                    u0 = u0.min(u);
                    u1 = u1.max(u);
                    v0 = v0.min(v);
                    v1 = v1.max(v);
                }
            }
        }
        if u0 <= u1 {
            let mut z_near = f32::INFINITY;
            for v in 0..h {
                for u in 0..w {
                    if mask[(v * w + u) as usize] {
                        z_near = z_near.min(depth.get(u, v));
                    }
                }
            }
            let band_end = u0 + ((u1 - u0 + 1) as f64 * cfg.occlusion).round() as u32;
            let z_occ = 0.65 * z_near;
            for v in v0.saturating_sub(2)..(v1 + 3).min(h) {
                for u in u0..band_end.min(w) {
                    depth.set(u, v, z_occ);
                    mask[(v * w + u) as usize] = false;
                }
            }
        }
    }

    // Pass 5: sensor degradation.
    if cfg.noise_sigma > 0.0 {
        for z in depth.data.iter_mut() {
            if *z > 0.0 {
                let g: f64 = rng.sample(StandardNormal);
                *z = (*z as f64 + cfg.noise_sigma * g).max(1e-3) as f32;
            }
        }
    }
    if cfg.quantize {
        let s = cfg.intrinsics.depth_scale;
        for z in depth.data.iter_mut() {
            if *z > 0.0 {
                *z = ((*z as f64 / s).round() * s) as f32;
            }
        }
    }

    let object_pixels = mask.iter().filter(|&&m| m).count();
    Frame {
        depth,
        pose: *pose,
        object_mask: mask,
        object_pixels,
    }
}

/// Generates the configured number of frames with poses sampled from the
/// seeded generator. Deterministic for a given config.
pub fn generate_frames(cfg: &SynthConfig) -> Vec<Frame> {
    use rand::SeedableRng;
    let solid = shape_solid(cfg.shape);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.frames)
        .map(|_| {
            let pose = sample_pose(cfg, &mut rng);
            render_frame(&solid, &pose, cfg, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sampled_points_lie_on_the_surface() {
        for shape in ModelShape::all() {
            let solid = shape_solid(shape);
            let cloud = sample_surface(&solid, 0.004);
            assert!(cloud.len() > 200, "{shape}: only {} points", cloud.len());
            let normals = cloud.normals.as_ref().unwrap();
            let eps = 1e-4;
            for (p, n) in cloud.points.iter().zip(normals) {
                let outside = p + n.into_inner() * eps;
                let inside = p - n.into_inner() * eps;
                assert!(!solid.inside(&outside), "{shape}: {p:?} + n inside");
                assert!(solid.inside(&inside), "{shape}: {p:?} - n outside");
            }
        }
    }

    #[test]
    fn notch_removes_material_and_exposes_walls() {
        let solid = shape_solid(ModelShape::NotchedBox);
        // Center of the carved corner is empty space now.
        assert!(!solid.inside(&Point3::new(0.03, 0.02, 0.012)));
        assert!(solid.inside(&Point3::new(-0.03, -0.02, -0.012)));
        // Some sampled points lie on the carved walls, with normals pointing
        // into the notch volume.
        let cloud = sample_surface(&solid, 0.003);
        let normals = cloud.normals.as_ref().unwrap();
        // Carved-wall samples lie on the closed notch region (one coordinate
        // pinned to a notch face, the others within it).
        let carved = cloud
            .points
            .iter()
            .zip(normals)
            .filter(|(p, _)| {
                (0.0149..=0.0461).contains(&p.x)
                    && (0.0079..=0.0311).contains(&p.y)
                    && (0.0039..=0.0211).contains(&p.z)
            })
            .count();
        assert!(carved > 10, "carved walls unsampled: {carved}");
    }

    #[test]
    fn raycast_agrees_with_inside_test() {
        let solid = shape_solid(ModelShape::Cam);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hits = 0;
        for _ in 0..500 {
            let o = Point3::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                -0.3,
            );
            let target = Point3::new(
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.04..0.04),
            );
            let d = target - o;
            if let Some((t, n)) = solid.raycast(&o, &d) {
                hits += 1;
                let before = o + d * (t - 1e-5);
                let after = o + d * (t + 1e-5);
                assert!(!solid.inside(&before));
                assert!(solid.inside(&after));
                assert!(n.dot(&d) < 0.0, "normal faces away from the ray");
            }
        }
        assert!(hits > 200, "raycast almost never hit: {hits}");
    }

    #[test]
    fn plane_never_hides_the_object() {
        let cfg = SynthConfig {
            quantize: false,
            ..SynthConfig::default()
        };
        let solid = shape_solid(cfg.shape);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pose = sample_pose(&cfg, &mut rng);
        let with_plane = render_frame(&solid, &pose, &cfg, &mut rng.clone());
        let without = render_frame(
            &solid,
            &pose,
            &SynthConfig {
                plane: false,
                ..cfg.clone()
            },
            &mut rng,
        );
        assert_eq!(with_plane.object_pixels, without.object_pixels);
        // The plane fills every remaining pixel.
        assert_eq!(with_plane.depth.valid_count() as u32, cfg.width * cfg.height);
        for (i, &m) in with_plane.object_mask.iter().enumerate() {
            if m {
                assert_eq!(with_plane.depth.data[i], without.depth.data[i]);
            }
        }
    }

    #[test]
    fn noise_magnitude_matches_sigma_and_quantization_snaps_to_grid() {
        let base = SynthConfig {
            plane: true,
            quantize: false,
            ..SynthConfig::default()
        };
        let solid = shape_solid(base.shape);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pose = sample_pose(&base, &mut rng);
        let clean = render_frame(&solid, &pose, &base, &mut rng.clone());
        let noisy_cfg = SynthConfig {
            noise_sigma: 0.003,
            ..base.clone()
        };
        let noisy = render_frame(&solid, &pose, &noisy_cfg, &mut rng.clone());
        let diffs: Vec<f64> = clean
            .depth
            .data
            .iter()
            .zip(&noisy.depth.data)
            .filter(|(&a, &b)| a > 0.0 && b > 0.0)
            .map(|(&a, &b)| (b - a) as f64)
            .collect();
        assert!(diffs.len() > 5000);
        let var = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
        let std = var.sqrt();
        assert!((0.002..0.004).contains(&std), "noise std {std}");

        let quant_cfg = SynthConfig {
            quantize: true,
            ..base
        };
        let quant = render_frame(&solid, &pose, &quant_cfg, &mut rng.clone());
        for &z in &quant.depth.data {
            if z > 0.0 {
                let mm = z as f64 / 0.001;
                assert!((mm - mm.round()).abs() < 1e-3, "depth {z} off the mm grid");
            }
        }
    }

    #[test]
    fn occlusion_band_hides_requested_fraction() {
        let cfg = SynthConfig {
            occlusion: 0.4,
            quantize: false,
            ..SynthConfig::default()
        };
        let solid = shape_solid(cfg.shape);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pose = sample_pose(&cfg, &mut rng);
        let bare = render_frame(
            &solid,
            &pose,
            &SynthConfig {
                occlusion: 0.0,
                ..cfg.clone()
            },
            &mut rng.clone(),
        );
        let occluded = render_frame(&solid, &pose, &cfg, &mut rng.clone());
        let visible = occluded.object_pixels as f64 / bare.object_pixels as f64;
        assert!(
            (0.35..0.8).contains(&visible),
            "visible fraction {visible} for a 40% band"
        );
        // Occluder pixels sit in front of where the object was.
        for i in 0..bare.object_mask.len() {
            if bare.object_mask[i] && !occluded.object_mask[i] {
                assert!(occluded.depth.data[i] < bare.depth.data[i]);
            }
        }
    }

    #[test]
    fn clutter_reaches_its_area_budget() {
        let cfg = SynthConfig {
            clutter: 0.3,
            plane: false,
            quantize: false,
            ..SynthConfig::default()
        };
        let solid = shape_solid(cfg.shape);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = sample_pose(&cfg, &mut rng);
        let frame = render_frame(&solid, &pose, &cfg, &mut rng);
        let clutter_px = frame.depth.valid_count() - frame.object_pixels;
        let ratio = clutter_px as f64 / frame.object_pixels as f64;
        assert!(ratio >= 0.25, "clutter ratio {ratio}");
    }

    #[test]
    fn end_on_poses_point_the_long_axis_at_the_camera() {
        let cfg = SynthConfig {
            shape: ModelShape::Bar,
            pose_mode: PoseMode::EndOn,
            plane: false,
            quantize: false,
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let pose = sample_pose(&cfg, &mut rng);
            let x_world = pose.rotation * Vec3::new(1.0, 0.0, 0.0);
            assert!(
                x_world.z.abs() > 0.995,
                "long axis not along view: {x_world:?}"
            );
        }
    }

    #[test]
    fn same_seed_reproduces_frames_exactly() {
        let cfg = SynthConfig {
            frames: 2,
            clutter: 0.2,
            noise_sigma: 0.002,
            occlusion: 0.2,
            ..SynthConfig::default()
        };
        let a = generate_frames(&cfg);
        let b = generate_frames(&cfg);
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.depth.data, y.depth.data);
            assert_eq!(x.pose, y.pose);
        }
        let c = generate_frames(&SynthConfig { seed: 8, ..cfg });
        assert!(a[0].depth.data != c[0].depth.data);
    }

    #[test]
    fn every_generated_frame_shows_the_object() {
        for shape in ModelShape::all() {
            let cfg = SynthConfig {
                shape,
                frames: 6,
                ..SynthConfig::default()
            };
            for (i, f) in generate_frames(&cfg).iter().enumerate() {
                assert!(
                    f.object_pixels > 150,
                    "{shape} frame {i}: {} object pixels",
                    f.object_pixels
                );
            }
        }
    }
}
