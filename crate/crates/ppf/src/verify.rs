//! Pose verification against the observed depth image.
//!
//! A candidate pose is rendered as a z-buffered splat image, compared to the
//! scene depth pixel by pixel, and additionally checked for silhouette/edge
//! agreement. Gates on the fractions reject poses that explain the data badly
//! (hallucinated surface, unexplained holes) even when their vote count was
//! high; survivors are ranked by how much of the rendering the scene
//! supports.

use crate::cloud::OrientedPointCloud;
use crate::depth::{DepthImage, Intrinsics};
use crate::error::{Error, Result};
use crate::geom::{Pose, UnitVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VerifyParams {
    /// Depth agreement tolerance in meters.
    pub depth_tol: f64,
    /// Reject when more than this fraction of rendered pixels sees scene
    /// surface behind the prediction.
    pub violation_max: f64,
    /// Reject when more than this fraction is hidden by closer scene surface.
    pub occlusion_max: f64,
    /// Reject when less than this fraction of the silhouette lies on scene
    /// edges.
    pub edge_coverage_min: f64,
    /// Depth range across a pixel's 4-neighborhood that makes it an edge.
    pub edge_depth_step: f64,
    /// Normal angle to a 4-neighbor that makes a pixel an edge, radians.
    pub edge_normal_step: f64,
    /// Splat radius as a multiple of the sampling distance used for the
    /// rendered cloud.
    pub splat_factor: f64,
    /// Swap the occluded/violating interpretation of the depth difference,
    /// for depth sources with the opposite sign convention.
    pub flip_depth_sign: bool,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            depth_tol: 0.02,
            violation_max: 0.10,
            occlusion_max: 0.10,
            edge_coverage_min: 0.10,
            edge_depth_step: 0.02,
            edge_normal_step: 30.0f64.to_radians(),
            splat_factor: 1.0,
            flip_depth_sign: false,
        }
    }
}

/// Fractions over the rendered pixels, plus the silhouette edge agreement.
/// support + occluded + violating + missing = 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VerifyScores {
    /// Scene depth within tolerance of the rendering.
    pub support: f64,
    /// Scene surface in front of the rendering (model plausibly hidden).
    pub occluded: f64,
    /// Scene surface behind the rendering (model floats in observed free
    /// space; strong evidence against the pose).
    pub violating: f64,
    /// No valid scene depth at a rendered pixel.
    pub missing: f64,
    /// Fraction of the rendered silhouette lying on scene edges.
    pub edge_coverage: f64,
    /// Ranking score: the support fraction.
    pub fitness: f64,
}

impl VerifyScores {
    /// Acceptance gates; ranking among survivors uses `fitness`.
    pub fn passes(&self, p: &VerifyParams) -> bool {
        self.violating <= p.violation_max
            && self.occluded <= p.occlusion_max
            && self.edge_coverage >= p.edge_coverage_min
    }
}

/// A pose rendered into a depth image the size of the scene.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub depth: DepthImage,
    /// Number of valid rendered pixels.
    pub pixel_count: usize,
    /// Largest splat radius used, in pixels. Splat disks overhang the true
    /// silhouette by up to this much, so classification shrinks the rendered
    /// mask by it before comparing depths.
    pub erode_px: u32,
}

/// Renders the model at `pose` by splatting each point as a disk of metric
/// radius `splat_radius`, keeping the nearest depth per pixel. With normals
/// present each disk carries the depth of the point's tangent plane, so
/// tilted surfaces render without the toward-camera bias a constant-depth
/// disk would give them; without normals the disk is constant-depth. Points
/// behind the camera are dropped; a pose fully outside the frame produces a
/// view with `pixel_count` 0.
pub fn render_depth(
    model: &OrientedPointCloud,
    pose: &Pose,
    k: &Intrinsics,
    width: u32,
    height: u32,
    splat_radius: f64,
) -> RenderedView {
    let mut depth = DepthImage::new(width, height);
    let f_px = k.fx.max(k.fy);
    let normals = model.normals().ok();
    let mut erode_px = 0i64;
    for (i, p) in model.points.iter().enumerate() {
        let pc = pose * p;
        if pc.z <= 1e-3 {
            continue;
        }
        let n_cam = normals.map(|ns| pose.rotation * ns[i]);
        // A surface point is only visible from its outward side. Splatting
        // backfacing points would paint the object's far side into pixel
        // gaps of the near side, which reads as phantom occlusion. The
        // margin keeps silhouette-grazing points.
        if let Some(n) = &n_cam {
            if n.dot(&pc.coords) > 0.17 * pc.coords.norm() {
                continue;
            }
        }
        let (u, v) = k.project(&pc);
        let r_px = (splat_radius * f_px / pc.z).ceil().max(0.0) as i64;
        let (uc, vc) = (u.round() as i64, v.round() as i64);
        if uc + r_px < 0 || vc + r_px < 0 || uc - r_px >= width as i64 || vc - r_px >= height as i64
        {
            continue;
        }
        erode_px = erode_px.max(r_px);
        let r2 = r_px * r_px;
        for dv in -r_px..=r_px {
            for du in -r_px..=r_px {
                if du * du + dv * dv > r2 {
                    continue;
                }
                let (uu, vv) = (uc + du, vc + dv);
                if uu < 0 || vv < 0 || uu >= width as i64 || vv >= height as i64 {
                    continue;
                }
                let mut z = pc.z;
                if let Some(n) = &n_cam {
                    // Depth of the tangent plane along this pixel's ray;
                    // grazing planes extrapolate wildly, so those pixels keep
                    // the sample depth.
                    let d = Vec3::new(
                        (uu as f64 - k.cx) / k.fx,
                        (vv as f64 - k.cy) / k.fy,
                        1.0,
                    );
                    let t = n.dot(&pc.coords) / n.dot(&d);
                    if t.is_finite() && (t - pc.z).abs() <= 3.0 * splat_radius {
                        z = t;
                    }
                }
                let (uu, vv) = (uu as u32, vv as u32);
                let z = z as f32;
                let cur = depth.get(uu, vv);
                if cur <= 0.0 || z < cur {
                    depth.set(uu, vv, z);
                }
            }
        }
    }
    let pixel_count = depth.valid_count();
    RenderedView {
        depth,
        pixel_count,
        erode_px: erode_px as u32,
    }
}

/// Chebyshev erosion of a binary mask by `r`; pixels outside the image count
/// as set so a region cut by the border keeps its in-frame interior.
fn erode_mask(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    if r == 0 {
        return mask.to_vec();
    }
    let mut rows = vec![false; mask.len()];
    for v in 0..h {
        for u in 0..w {
            let lo = u.saturating_sub(r);
            let hi = (u + r).min(w - 1);
            rows[v * w + u] = (lo..=hi).all(|x| mask[v * w + x]);
        }
    }
    let mut out = vec![false; mask.len()];
    for v in 0..h {
        for u in 0..w {
            let lo = v.saturating_sub(r);
            let hi = (v + r).min(h - 1);
            out[v * w + u] = (lo..=hi).all(|y| rows[y * w + u]);
        }
    }
    out
}

/// Rendered pixels whose 4-neighborhood leaves the rendering (or the image):
/// the outline of the view.
pub fn silhouette_pixels(view: &RenderedView) -> Vec<[u32; 2]> {
    let d = &view.depth;
    let mut out = Vec::new();
    for v in 0..d.height {
        for u in 0..d.width {
            if !d.is_valid(u, v) {
                continue;
            }
            let mut boundary = u == 0 || v == 0 || u == d.width - 1 || v == d.height - 1;
            if !boundary {
                boundary = !d.is_valid(u - 1, v)
                    || !d.is_valid(u + 1, v)
                    || !d.is_valid(u, v - 1)
                    || !d.is_valid(u, v + 1);
            }
            if boundary {
                out.push([u, v]);
            }
        }
    }
    out
}

/// Per-pixel scene edge map: depth discontinuities and normal creases in the
/// 4-neighborhood, plus valid/invalid boundaries, dilated by 2 pixels so
/// silhouettes a pixel or two off still register.
pub fn scene_edge_map(
    depth: &DepthImage,
    normals: &[Option<UnitVec3>],
    params: &VerifyParams,
) -> Vec<bool> {
    let w = depth.width as i64;
    let h = depth.height as i64;
    let mut base = vec![false; (w * h) as usize];
    let cos_step = params.edge_normal_step.cos();
    for v in 0..h {
        for u in 0..w {
            let idx = (v * w + u) as usize;
            if !depth.is_valid(u as u32, v as u32) {
                continue;
            }
            let z = depth.get(u as u32, v as u32);
            let n = normals[idx];
            let mut lo = z;
            let mut hi = z;
            let mut edge = false;
            for (du, dv) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (uu, vv) = (u + du, v + dv);
                if uu < 0 || vv < 0 || uu >= w || vv >= h {
                    // Outside the frame nothing is observed; only an in-image
                    // depth hole is evidence of a discontinuity.
                    continue;
                }
                if !depth.is_valid(uu as u32, vv as u32) {
                    edge = true;
                    break;
                }
                let zn = depth.get(uu as u32, vv as u32);
                lo = lo.min(zn);
                hi = hi.max(zn);
                if let (Some(a), Some(b)) = (n, normals[(vv * w + uu) as usize]) {
                    if a.dot(&b) < cos_step {
                        edge = true;
                        break;
                    }
                }
            }
            base[idx] = edge || (hi - lo) as f64 > params.edge_depth_step;
        }
    }
    // Chebyshev dilation by 2.
    let mut out = vec![false; base.len()];
    for v in 0..h {
        for u in 0..w {
            if !base[(v * w + u) as usize] {
                continue;
            }
            for dv in -2..=2i64 {
                for du in -2..=2i64 {
                    let (uu, vv) = (u + du, v + dv);
                    if uu >= 0 && vv >= 0 && uu < w && vv < h {
                        out[(vv * w + uu) as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Compares a rendered view against the scene depth and edge map.
///
/// Rendered pixels clear of the splat overhang band are classified by the
/// signed depth difference (scene minus rendered): within tolerance supports
/// the pose, scene closer means the model is occluded there, scene farther
/// means the pose violates observed free space. `flip_depth_sign` swaps the
/// latter two for data with the opposite convention.
pub fn score_pose(
    view: &RenderedView,
    scene: &DepthImage,
    edge_map: &[bool],
    params: &VerifyParams,
) -> Result<VerifyScores> {
    if view.depth.width != scene.width || view.depth.height != scene.height {
        return Err(Error::SizeMismatch {
            expected_w: scene.width,
            expected_h: scene.height,
            got_w: view.depth.width,
            got_h: view.depth.height,
        });
    }
    if view.pixel_count == 0 {
        return Err(Error::EmptySilhouette);
    }
    let (w, h) = (scene.width as usize, scene.height as usize);
    // Splat disks overhang the true outline by up to the splat radius, and
    // those pixels legitimately see background. Compare depths only where the
    // rendering is trustworthy: the mask shrunk by that radius.
    let rendered: Vec<bool> = view.depth.data.iter().map(|&z| z > 0.0).collect();
    let mut classify = erode_mask(&rendered, w, h, view.erode_px as usize);
    if !classify.iter().any(|&c| c) {
        classify = rendered;
    }
    let mut classified = 0usize;
    let mut support = 0usize;
    let mut occluded = 0usize;
    let mut violating = 0usize;
    let mut missing = 0usize;
    for v in 0..scene.height {
        for u in 0..scene.width {
            if !classify[v as usize * w + u as usize] {
                continue;
            }
            let zr = view.depth.get(u, v);
            classified += 1;
            if !scene.is_valid(u, v) {
                missing += 1;
                continue;
            }
            let mut delta = (scene.get(u, v) - zr) as f64;
            if params.flip_depth_sign {
                delta = -delta;
            }
            if delta.abs() <= params.depth_tol {
                support += 1;
            } else if delta < 0.0 {
                occluded += 1;
            } else {
                violating += 1;
            }
        }
    }
    let n = classified as f64;
    let silhouette = silhouette_pixels(view);
    if silhouette.is_empty() {
        return Err(Error::EmptySilhouette);
    }
    let on_edge = silhouette
        .iter()
        .filter(|&&[u, v]| edge_map[v as usize * w + u as usize])
        .count();
    let edge_coverage = on_edge as f64 / silhouette.len() as f64;
    let support = support as f64 / n;
    let scores = VerifyScores {
        support,
        occluded: occluded as f64 / n,
        violating: violating as f64 / n,
        missing: missing as f64 / n,
        edge_coverage,
        fitness: support,
    };
    Ok(scores)
}

/// Applies the acceptance gates and ranks survivors by fitness (stable on
/// ties). Returns indices into `candidates` in rank order: just the winner,
/// or with `multi_instance` every survivor that is not a near-duplicate
/// (within both thresholds) of an already accepted pose.
pub fn rank_and_filter(
    candidates: &[(Pose, VerifyScores)],
    params: &VerifyParams,
    multi_instance: bool,
    dedup_trans: f64,
    dedup_rot: f64,
) -> Vec<usize> {
    let mut passing: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].1.passes(params))
        .collect();
    passing.sort_by(|&a, &b| {
        candidates[b]
            .1
            .fitness
            .total_cmp(&candidates[a].1.fitness)
    });
    if !multi_instance {
        passing.truncate(1);
        return passing;
    }
    let mut accepted: Vec<usize> = Vec::new();
    for i in passing {
        let dup = accepted.iter().any(|&j| {
            crate::geom::translation_distance(&candidates[i].0, &candidates[j].0) <= dedup_trans
                && crate::geom::rotation_distance(&candidates[i].0, &candidates[j].0) <= dedup_rot
        });
        if !dup {
            accepted.push(i);
        }
    }
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, Vec3};
    use nalgebra as na;

    fn k() -> Intrinsics {
        Intrinsics::new(300.0, 300.0, 40.0, 30.0)
    }

    /// A fronto-parallel square of points at z = 1, dense enough to splat into
    /// a filled rectangle.
    fn plate_cloud(step: f64) -> OrientedPointCloud {
        let mut pts = Vec::new();
        let mut x = -0.05;
        while x <= 0.05 {
            let mut y = -0.05;
            while y <= 0.05 {
                pts.push(Point3::new(x, y, 0.0));
                y += step;
            }
            x += step;
        }
        OrientedPointCloud::new(pts)
    }

    fn at_z(z: f64) -> Pose {
        Pose::from_parts(na::Translation3::new(0.0, 0.0, z), Default::default())
    }

    fn no_normals(d: &DepthImage) -> Vec<Option<UnitVec3>> {
        vec![None; (d.width * d.height) as usize]
    }

    #[test]
    fn rendered_plate_is_flat_and_filled() {
        let c = plate_cloud(0.005);
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        assert!(view.pixel_count > 800);
        for v in 0..60 {
            for u in 0..80 {
                let z = view.depth.get(u, v);
                if z > 0.0 {
                    assert!((z - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn nearest_surface_wins_the_z_buffer() {
        let mut c = plate_cloud(0.005);
        let far: Vec<Point3> = c.points.iter().map(|p| Point3::new(p.x, p.y, 0.3)).collect();
        c.points.extend(far);
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        let z = view.depth.get(40, 30);
        assert!((z - 1.0).abs() < 1e-6, "{z}");
    }

    #[test]
    fn self_comparison_scores_full_support() {
        let c = plate_cloud(0.005);
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        let edges = scene_edge_map(&view.depth, &no_normals(&view.depth), &VerifyParams::default());
        let s = score_pose(&view, &view.depth, &edges, &VerifyParams::default()).unwrap();
        assert_eq!(s.support, 1.0);
        assert_eq!(s.occluded, 0.0);
        assert_eq!(s.violating, 0.0);
        assert_eq!(s.missing, 0.0);
        // The plate boundary is a depth boundary: full edge agreement.
        assert_eq!(s.edge_coverage, 1.0);
        assert!(s.passes(&VerifyParams::default()));
    }

    #[test]
    fn closer_scene_surface_counts_as_occlusion() {
        let c = plate_cloud(0.005);
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        let scene = render_depth(&c, &at_z(0.9), &k(), 80, 60, 0.004);
        let edges = scene_edge_map(&scene.depth, &no_normals(&scene.depth), &VerifyParams::default());
        let s = score_pose(&view, &scene.depth, &edges, &VerifyParams::default()).unwrap();
        assert!(s.occluded > 0.9, "{s:?}");
        assert!(s.violating == 0.0);
        assert!(!s.passes(&VerifyParams::default()));

        // Same data with the flipped sign convention swaps the classes.
        let flipped = VerifyParams {
            flip_depth_sign: true,
            ..VerifyParams::default()
        };
        let s = score_pose(&view, &scene.depth, &edges, &flipped).unwrap();
        assert!(s.violating > 0.9);
        assert_eq!(s.occluded, 0.0);
    }

    #[test]
    fn farther_scene_surface_counts_as_violation() {
        let c = plate_cloud(0.005);
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        let scene = render_depth(&c, &at_z(1.15), &k(), 80, 60, 0.004);
        let edges = scene_edge_map(&scene.depth, &no_normals(&scene.depth), &VerifyParams::default());
        let s = score_pose(&view, &scene.depth, &edges, &VerifyParams::default()).unwrap();
        // The nearer render is larger on screen; its margin sees missing or
        // violation, its interior pure violation.
        assert!(s.violating > 0.7, "{s:?}");
        assert_eq!(s.support, 0.0);
    }

    #[test]
    fn depth_difference_at_tolerance_still_supports() {
        let c = plate_cloud(0.005);
        let p = VerifyParams::default();
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        let mut scene = view.depth.clone();
        for z in scene.data.iter_mut() {
            if *z > 0.0 {
                *z += p.depth_tol as f32 * 0.999;
            }
        }
        let edges = scene_edge_map(&scene, &no_normals(&scene), &p);
        let s = score_pose(&view, &scene, &edges, &p).unwrap();
        assert_eq!(s.support, 1.0);
    }

    #[test]
    fn invalid_scene_pixels_count_as_missing() {
        let c = plate_cloud(0.005);
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        let scene = DepthImage::new(80, 60); // all invalid
        let edges = scene_edge_map(&scene, &no_normals(&scene), &VerifyParams::default());
        let s = score_pose(&view, &scene, &edges, &VerifyParams::default());
        // All rendered pixels miss; silhouette exists but no edges: the
        // scores come back rather than erroring, and the gates reject.
        let s = s.unwrap();
        assert_eq!(s.missing, 1.0);
        assert!(!s.passes(&VerifyParams::default()));
    }

    #[test]
    fn pose_behind_camera_is_an_empty_silhouette_error() {
        let c = plate_cloud(0.005);
        let view = render_depth(&c, &at_z(-1.0), &k(), 80, 60, 0.004);
        assert_eq!(view.pixel_count, 0);
        let scene = DepthImage::new(80, 60);
        let edges = vec![false; 80 * 60];
        assert!(matches!(
            score_pose(&view, &scene, &edges, &VerifyParams::default()),
            Err(Error::EmptySilhouette)
        ));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let c = plate_cloud(0.005);
        let view = render_depth(&c, &at_z(1.0), &k(), 80, 60, 0.004);
        let scene = DepthImage::new(100, 60);
        let edges = vec![false; 100 * 60];
        assert!(matches!(
            score_pose(&view, &scene, &edges, &VerifyParams::default()),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn depth_step_produces_dilated_edge_band() {
        let mut d = DepthImage::new(40, 20);
        for v in 0..20 {
            for u in 0..40 {
                d.set(u, v, if u < 20 { 1.0 } else { 1.3 });
            }
        }
        let p = VerifyParams::default();
        let edges = scene_edge_map(&d, &no_normals(&d), &p);
        let at = |u: u32, v: u32| edges[(v * 40 + u) as usize];
        // Boundary columns 19/20 are base edges; dilation reaches 2 farther.
        assert!(at(19, 10) && at(20, 10));
        assert!(at(17, 10) && at(22, 10));
        assert!(!at(10, 10));
        assert!(!at(30, 10));
        // Image border pixels are edges too.
        assert!(at(0, 10));
    }

    #[test]
    fn normal_crease_is_an_edge_without_depth_step() {
        // Two half-planes with equal depth but sharply different normals.
        let mut d = DepthImage::new(40, 20);
        for v in 0..20 {
            for u in 0..40 {
                d.set(u, v, 1.0);
            }
        }
        let mut normals = no_normals(&d);
        for v in 0..20u32 {
            for u in 0..40u32 {
                let n = if u < 20 {
                    Vec3::new(0.0, 0.0, -1.0)
                } else {
                    Vec3::new((40f64).to_radians().sin(), 0.0, -(40f64).to_radians().cos())
                };
                normals[(v * 40 + u) as usize] = Some(UnitVec3::new_normalize(n));
            }
        }
        let p = VerifyParams::default();
        let edges = scene_edge_map(&d, &normals, &p);
        let at = |u: u32, v: u32| edges[(v * 40 + u) as usize];
        assert!(at(19, 10) && at(20, 10));
        assert!(!at(10, 10) && !at(30, 10));
    }

    #[test]
    fn gates_and_ranking() {
        let p = VerifyParams::default();
        let mk = |support: f64, occ: f64, vio: f64, edge: f64| VerifyScores {
            support,
            occluded: occ,
            violating: vio,
            missing: (1.0 - support - occ - vio).max(0.0),
            edge_coverage: edge,
            fitness: support * edge,
        };
        let pose = at_z(1.0);
        let far_pose = at_z(2.0);
        let cands = vec![
            (pose, mk(0.9, 0.05, 0.02, 0.5)),
            (far_pose, mk(0.95, 0.02, 0.01, 0.6)),
            (pose, mk(0.99, 0.2, 0.0, 0.5)),  // occlusion gate fails
            (pose, mk(0.99, 0.0, 0.2, 0.5)),  // violation gate fails
            (pose, mk(0.99, 0.0, 0.0, 0.05)), // edge gate fails
        ];
        let single = rank_and_filter(&cands, &p, false, 0.05, 12f64.to_radians());
        assert_eq!(single, vec![1]);
        let multi = rank_and_filter(&cands, &p, true, 0.05, 12f64.to_radians());
        assert_eq!(multi, vec![1, 0]);
        // A duplicate of the winner is suppressed in multi mode.
        let cands2 = vec![
            (pose, mk(0.9, 0.0, 0.0, 0.5)),
            (pose, mk(0.8, 0.0, 0.0, 0.5)),
        ];
        let multi = rank_and_filter(&cands2, &p, true, 0.05, 12f64.to_radians());
        assert_eq!(multi, vec![0]);
    }
}
