//! The end-to-end detection pipeline.
//!
//! A [`Detector`] owns a model table and a tuned configuration and turns
//! depth frames into verified detections: depth to cloud, two-stage
//! subsampling, normal estimation, per-reference voting, pose clustering,
//! projective ICP refinement, and depth-image verification. Every stage
//! parameter lives in [`PipelineConfig`], which supports string key/value
//! overrides so command lines and config files share one surface.

use crate::cloud::OrientedPointCloud;
use crate::cluster::{cluster_hypotheses, ClusterParams};
use crate::depth::{depth_to_cloud, normal_map, DepthImage, Intrinsics};
use crate::error::{Error, Result};
use crate::geom::{Point3, Pose, UnitVec3};
use crate::icp::{projective_icp, IcpParams};
use crate::preprocess::{estimate_normals, subsample};
use crate::table::ModelTable;
use crate::verify::{
    rank_and_filter, render_depth, scene_edge_map, score_pose, VerifyParams, VerifyScores,
};
use crate::voting::{detect_with_table, Ball, DetectionParams, VoteStats, VoteTable};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Sampling distance as a fraction of the model diameter.
    pub sampling_rate: f64,
    /// Neighborhood size for scene normal estimation.
    pub normal_k: usize,
    /// Second-chance angle for the normal-aware scene subsampling, radians.
    pub keep_angle: f64,
    pub detection: DetectionParams,
    /// Cluster translation threshold as a fraction of the model diameter.
    pub cluster_trans_ratio: f64,
    /// Cluster rotation threshold, radians.
    pub cluster_rot: f64,
    /// Clusters refined per ball.
    pub clusters_per_ball: usize,
    /// ICP settings; a non-positive `dist_gate` is replaced by 2.5 times the
    /// sampling distance.
    pub icp: IcpParams,
    pub verify: VerifyParams,
    /// Report every verified instance instead of just the best.
    pub multi_instance: bool,
    pub max_results: usize,
    /// Spread table entries into neighbor feature bins when building a model
    /// table from a raw cloud.
    pub spreading: bool,
    /// Minimum fraction of model points a refined pose must project inside
    /// the image. A pose hanging mostly off-screen can score near-perfect
    /// support on the sliver that remains, so it is rejected as a hypothesis
    /// rather than scored.
    pub min_visible: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sampling_rate: 0.05,
            normal_k: 30,
            keep_angle: 25.0f64.to_radians(),
            detection: DetectionParams::default(),
            cluster_trans_ratio: 0.10,
            cluster_rot: 12.0f64.to_radians(),
            clusters_per_ball: 4,
            icp: IcpParams {
                dist_gate: 0.0,
                ..IcpParams::default()
            },
            verify: VerifyParams::default(),
            multi_instance: false,
            max_results: 8,
            spreading: true,
            min_visible: 0.7,
        }
    }
}

/// Keys accepted by [`PipelineConfig::set`], with angles in degrees.
pub const CONFIG_KEYS: &[&str] = &[
    "sampling_rate",
    "normal_k",
    "keep_angle_deg",
    "stride",
    "alpha_bins",
    "peak_ratio",
    "min_votes",
    "rotation_spreading",
    "flags",
    "two_balls",
    "smart_sampling",
    "cluster_trans_ratio",
    "cluster_rot_deg",
    "clusters_per_ball",
    "icp_iterations",
    "icp_gate",
    "depth_tol",
    "violation_max",
    "occlusion_max",
    "edge_min",
    "splat_factor",
    "flip_depth_sign",
    "multi_instance",
    "max_results",
    "spreading",
    "min_visible",
];

fn bad(key: &str, value: &str, reason: &str) -> Error {
    Error::BadConfigValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| bad(key, v, "expected a number"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(key, v, "expected an integer"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(bad(key, v, "expected true/false")),
    }
}

impl PipelineConfig {
    /// Applies one `key=value` style override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sampling_rate" => self.sampling_rate = parse_f64(key, value)?,
            "normal_k" => self.normal_k = parse_usize(key, value)?,
            "keep_angle_deg" => self.keep_angle = parse_f64(key, value)?.to_radians(),
            "stride" => self.detection.reference_stride = parse_usize(key, value)?,
            "alpha_bins" => self.detection.n_alpha_bins = parse_usize(key, value)? as u32,
            "peak_ratio" => self.detection.peak_ratio = parse_f64(key, value)?,
            "min_votes" => self.detection.min_votes = parse_usize(key, value)? as u64,
            "rotation_spreading" => self.detection.spreading_rotation = parse_bool(key, value)?,
            "flags" => self.detection.flags_enabled = parse_bool(key, value)?,
            "two_balls" => self.detection.two_balls = parse_bool(key, value)?,
            "smart_sampling" => self.detection.smart_sampling = parse_bool(key, value)?,
            "cluster_trans_ratio" => self.cluster_trans_ratio = parse_f64(key, value)?,
            "cluster_rot_deg" => self.cluster_rot = parse_f64(key, value)?.to_radians(),
            "clusters_per_ball" => self.clusters_per_ball = parse_usize(key, value)?,
            "icp_iterations" => self.icp.max_iterations = parse_usize(key, value)?,
            "icp_gate" => self.icp.dist_gate = parse_f64(key, value)?,
            "depth_tol" => self.verify.depth_tol = parse_f64(key, value)?,
            "violation_max" => self.verify.violation_max = parse_f64(key, value)?,
            "occlusion_max" => self.verify.occlusion_max = parse_f64(key, value)?,
            "edge_min" => self.verify.edge_coverage_min = parse_f64(key, value)?,
            "splat_factor" => self.verify.splat_factor = parse_f64(key, value)?,
            "flip_depth_sign" => self.verify.flip_depth_sign = parse_bool(key, value)?,
            "multi_instance" => self.multi_instance = parse_bool(key, value)?,
            "max_results" => self.max_results = parse_usize(key, value)?,
            "spreading" => self.spreading = parse_bool(key, value)?,
            "min_visible" => self.min_visible = parse_f64(key, value)?,
            _ => {
                return Err(Error::UnknownConfigKey {
                    key: key.into(),
                    valid: CONFIG_KEYS.join(", "),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "sampling_rate must be in (0, 0.5], got {}",
                self.sampling_rate
            )));
        }
        if self.normal_k < 3 {
            return Err(Error::InvalidParameter(format!(
                "normal_k must be at least 3, got {}",
                self.normal_k
            )));
        }
        if self.clusters_per_ball == 0 || self.max_results == 0 {
            return Err(Error::InvalidParameter(
                "clusters_per_ball and max_results must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.min_visible) {
            return Err(Error::InvalidParameter(format!(
                "min_visible must be in [0, 1], got {}",
                self.min_visible
            )));
        }
        self.detection.validate()?;
        ClusterParams {
            trans_thresh: self.cluster_trans_ratio,
            rot_thresh: self.cluster_rot,
            max_clusters_per_ball: self.clusters_per_ball,
        }
        .validate()
    }
}

/// A preprocessed frame: the subsampled oriented cloud the voting stage
/// consumes plus the per-pixel maps refinement and verification need.
pub struct SceneData {
    pub cloud: OrientedPointCloud,
    pub normal_map: Vec<Option<UnitVec3>>,
    pub edge_map: Vec<bool>,
}

/// One verified detection, best first in the detector's output.
#[derive(Debug, Clone)]
pub struct Detection {
    pub pose: Pose,
    pub scores: VerifyScores,
    /// Pooled vote weight of the cluster the pose came from.
    pub votes: u64,
    /// Which search ball founded the cluster.
    pub ball: Ball,
}

/// Render-cloud spacing relative to the voting sampling distance. Rendering
/// needs a silhouette accurate to a few pixels, which the voting resolution
/// cannot deliver, while voting cost grows quadratically with density.
const RENDER_SPACING_RATIO: f64 = 0.4;

pub struct Detector {
    table: ModelTable,
    vote_table: VoteTable,
    config: PipelineConfig,
    min_dist: f64,
}

impl Detector {
    /// Wraps a prebuilt model table.
    pub fn new(table: ModelTable, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let vote_table = VoteTable::new(&table, config.detection.n_alpha_bins)?;
        let min_dist = config.sampling_rate * table.d_obj;
        Ok(Self {
            table,
            vote_table,
            config,
            min_dist,
        })
    }

    /// Subsamples a raw oriented model cloud at the configured rate and
    /// builds its table. The cloud must carry normals. The raw cloud is also
    /// resampled more finely for the verification renderer, whose silhouette
    /// must be accurate to a few pixels.
    pub fn from_raw_model(cloud: &OrientedPointCloud, config: PipelineConfig) -> Result<Self> {
        cloud.normals()?;
        let d_raw = cloud.enclosing_diameter()?;
        let min_dist = config.sampling_rate * d_raw;
        let sub = subsample(cloud, min_dist, None)?;
        let table = ModelTable::build_with_diameter(&sub, d_raw, config.spreading)?
            .with_render_cloud(cloud, RENDER_SPACING_RATIO * min_dist)?;
        Self::new(table, config)
    }

    pub fn table(&self) -> &ModelTable {
        &self.table
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Sampling distance in meters, set by the model diameter.
    pub fn min_dist(&self) -> f64 {
        self.min_dist
    }

    fn icp_params(&self) -> IcpParams {
        let mut p = self.config.icp;
        if p.dist_gate <= 0.0 {
            p.dist_gate = 2.5 * self.min_dist;
        }
        p
    }

    /// Fraction of the voting cloud that lands inside the image under `pose`.
    fn visible_fraction(&self, pose: &Pose, k: &Intrinsics, width: u32, height: u32) -> f64 {
        let pts = &self.table.model.points;
        let inside = pts
            .iter()
            .filter(|p| {
                let pc = pose * *p;
                if pc.z <= 1e-3 {
                    return false;
                }
                let (u, v) = k.project(&pc);
                u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64
            })
            .count();
        inside as f64 / pts.len() as f64
    }

    fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            trans_thresh: self.config.cluster_trans_ratio * self.table.d_obj,
            rot_thresh: self.config.cluster_rot,
            max_clusters_per_ball: self.config.clusters_per_ball,
        }
    }

    /// Converts a depth frame into the cloud and maps the later stages use.
    pub fn prepare_scene(&self, depth: &DepthImage, k: &Intrinsics) -> Result<SceneData> {
        let full = depth_to_cloud(depth, k);
        if full.is_empty() {
            return Err(Error::EmptyCloud);
        }
        // Thin out before PCA so normal estimation touches a bounded set,
        // then subsample to the voting resolution with normals available.
        let pre = subsample(&full, 0.5 * self.min_dist, None)?;
        let oriented = estimate_normals(&pre, self.config.normal_k, &Point3::new(0.0, 0.0, 0.0))?;
        let keep = self
            .config
            .detection
            .smart_sampling
            .then_some(self.config.keep_angle);
        let cloud = subsample(&oriented, self.min_dist, keep)?;
        // A 1px difference baseline is swamped by millimeter depth
        // quantization; +-2px keeps the per-pixel normals usable for the ICP
        // gates and the crease edges.
        let normals = normal_map(depth, k, 2, 2.0 * self.min_dist);
        let edge_map = scene_edge_map(depth, &normals, &self.config.verify);
        Ok(SceneData {
            cloud,
            normal_map: normals,
            edge_map,
        })
    }

    /// Full pipeline on one frame. An empty result means nothing passed
    /// verification.
    pub fn detect(&self, depth: &DepthImage, k: &Intrinsics) -> Result<Vec<Detection>> {
        let scene = self.prepare_scene(depth, k)?;
        self.detect_prepared(depth, k, &scene).map(|(d, _)| d)
    }

    /// Detection on an already prepared scene, also reporting voting-stage
    /// workload counters.
    pub fn detect_prepared(
        &self,
        depth: &DepthImage,
        k: &Intrinsics,
        scene: &SceneData,
    ) -> Result<(Vec<Detection>, VoteStats)> {
        let (small, large, stats) =
            detect_with_table(&scene.cloud, &self.vote_table, &self.config.detection)?;
        let mut hyps = small;
        hyps.extend(large);
        if hyps.is_empty() {
            return Ok((Vec::new(), stats));
        }
        let clusters = cluster_hypotheses(&hyps, &self.cluster_params())?;

        let cap = self.config.clusters_per_ball;
        let (mut n_small, mut n_large) = (0usize, 0usize);
        let chosen = clusters.iter().filter(|c| match c.ball {
            Ball::Small => {
                n_small += 1;
                n_small <= cap
            }
            Ball::Large => {
                n_large += 1;
                n_large <= cap
            }
        });

        let icp_params = self.icp_params();
        let splat = self.config.verify.splat_factor * self.table.render_spacing;
        let mut candidates = Vec::new();
        let mut meta = Vec::new();
        for c in chosen {
            let refined = match projective_icp(
                &self.table.model,
                depth,
                &scene.normal_map,
                k,
                &c.pose,
                &icp_params,
            ) {
                Ok(r) => r.pose,
                Err(Error::NoOverlap { .. }) => continue,
                Err(e) => return Err(e),
            };
            if self.visible_fraction(&refined, k, depth.width, depth.height)
                < self.config.min_visible
            {
                continue;
            }
            let view =
                render_depth(&self.table.render, &refined, k, depth.width, depth.height, splat);
            let scores = match score_pose(&view, depth, &scene.edge_map, &self.config.verify) {
                Ok(s) => s,
                Err(Error::EmptySilhouette) => continue,
                Err(e) => return Err(e),
            };
            candidates.push((refined, scores));
            meta.push((c.weight, c.ball));
        }

        let order = rank_and_filter(
            &candidates,
            &self.config.verify,
            self.config.multi_instance,
            self.config.cluster_trans_ratio * self.table.d_obj,
            self.config.cluster_rot,
        );
        let detections = order
            .into_iter()
            .take(self.config.max_results)
            .map(|i| Detection {
                pose: candidates[i].0,
                scores: candidates[i].1,
                votes: meta[i].0,
                ball: meta[i].1,
            })
            .collect();
        Ok((detections, stats))
    }
}
