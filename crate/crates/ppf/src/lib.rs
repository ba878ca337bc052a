//! Detection of rigid objects in depth images by point pair feature voting.
//!
//! The pipeline turns a depth image into an oriented point cloud, matches
//! quantized point pair features against a precomputed model table, votes for
//! object poses in a per-reference-point accumulator, clusters the raw pose
//! hypotheses, refines the survivors with projective ICP, and scores each
//! refined pose against the observed depth image before reporting detections.
//!
//! The fast path lives in [`Detector`]: build a [`ModelTable`] once per model
//! (or load one from disk), wrap it in a detector, and feed it depth frames.
//! Every stage is also exposed on its own so the steps can be recombined; the
//! `examples/` directory contains one runnable program per capability.

pub mod cli;
pub mod cloud;
pub mod cluster;
pub mod depth;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geom;
pub mod grid;
pub mod icp;
pub mod ply;
pub mod preprocess;
pub mod synth;
pub mod table;
pub mod verify;
pub mod voting;

pub use cloud::OrientedPointCloud;
pub use cluster::{cluster_hypotheses, Cluster, ClusterParams};
pub use depth::{depth_to_cloud, normal_map, DepthImage, Intrinsics};
pub use detector::{Detection, Detector, PipelineConfig, SceneData, CONFIG_KEYS};
pub use error::{Error, Result};
pub use geom::{
    alpha_of_pair, canonical_frame, compute_ppf, pose_from_correspondence, CanonicalFrame,
    PairFeature, Point3, Pose, UnitVec3, Vec3,
};
pub use grid::VoxelGrid;
pub use icp::{projective_icp, IcpParams, IcpResult};
pub use ply::{load_ply, save_ply};
pub use preprocess::{estimate_normals, subsample};
pub use synth::{
    generate_frames, sample_surface, shape_solid, Frame, ModelShape, PoseMode, Solid, SynthConfig,
};
pub use table::{
    build_model_table, flat_index, load_table, neighbor_bins, quantize_ppf, save_table,
    ModelEntry, ModelTable, QuantizationParams, QuantizedPpf,
};
pub use verify::{
    rank_and_filter, render_depth, scene_edge_map, score_pose, silhouette_pixels, RenderedView,
    VerifyParams, VerifyScores,
};
pub use voting::{
    ball_radii, detect_raw, detect_raw_with_stats, detect_with_table, extract_peaks,
    vote_reference_point, Accumulator, Ball, DetectionParams, Hypothesis, VoteFlags, VoteStats,
    VoteTable,
};
