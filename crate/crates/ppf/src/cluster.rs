//! Bottom-up clustering of raw pose hypotheses.
//!
//! Individual accumulator peaks are noisy; near-identical poses from many
//! reference points are merged and their votes pooled, except that each model
//! reference may pay into a cluster only once, so one model point seen by
//! many reference points cannot dominate the pooled weight.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geom::{rotation_distance, translation_distance, Pose};
use crate::voting::{Ball, Hypothesis};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusterParams {
    /// Translation radius around a cluster's founding pose, in meters.
    pub trans_thresh: f64,
    /// Rotation radius around the founding pose, in radians.
    pub rot_thresh: f64,
    /// Clusters forwarded to refinement from each voting pass.
    pub max_clusters_per_ball: usize,
}

impl ClusterParams {
    /// Thresholds scaled to an object: a tenth of its diameter and 12 degrees.
    pub fn for_diameter(d_obj: f64) -> Self {
        Self {
            trans_thresh: 0.10 * d_obj,
            rot_thresh: 12.0f64.to_radians(),
            max_clusters_per_ball: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trans_thresh > 0.0) || !(self.rot_thresh > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cluster thresholds must be positive, got {} m / {} rad",
                self.trans_thresh, self.rot_thresh
            )));
        }
        Ok(())
    }
}

/// A group of mutually consistent hypotheses. The pose is the founding
/// (highest-vote) member's pose, not an average.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub pose: Pose,
    /// Pooled votes; each model reference index contributes at most once.
    pub weight: u64,
    /// Indices into the hypothesis slice passed to [`cluster_hypotheses`].
    pub members: Vec<u32>,
    pub ball: Ball,
}

/// Greedy bottom-up clustering.
///
/// Hypotheses are visited in descending vote order (ties keep input order).
/// Each joins the first cluster, in founding order, whose founding pose lies
/// within both thresholds, or founds a new cluster. The result is sorted by
/// pooled weight, descending, founding order breaking ties.
pub fn cluster_hypotheses(hyps: &[Hypothesis], params: &ClusterParams) -> Result<Vec<Cluster>> {
    params.validate()?;
    let mut order: Vec<u32> = (0..hyps.len() as u32).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(hyps[i as usize].votes));

    struct Building {
        cluster: Cluster,
        used_model_refs: HashSet<u32>,
    }
    let mut building: Vec<Building> = Vec::new();
    for &i in &order {
        let h = &hyps[i as usize];
        let slot = building.iter_mut().find(|b| {
            translation_distance(&b.cluster.pose, &h.pose) <= params.trans_thresh
                && rotation_distance(&b.cluster.pose, &h.pose) <= params.rot_thresh
        });
        match slot {
            Some(b) => {
                b.cluster.members.push(i);
                if b.used_model_refs.insert(h.model_ref_index) {
                    b.cluster.weight += h.votes;
                }
            }
            None => {
                building.push(Building {
                    cluster: Cluster {
                        pose: h.pose,
                        weight: h.votes,
                        members: vec![i],
                        ball: h.ball,
                    },
                    used_model_refs: HashSet::from([h.model_ref_index]),
                });
            }
        }
    }
    let mut out: Vec<Cluster> = building.into_iter().map(|b| b.cluster).collect();
    out.sort_by_key(|c| std::cmp::Reverse(c.weight));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Vec3};
    use nalgebra as na;

    fn hyp(pose: Pose, model_ref: u32, votes: u64) -> Hypothesis {
        Hypothesis {
            pose,
            scene_ref_index: 0,
            model_ref_index: model_ref,
            alpha: 0.0,
            votes,
            ball: Ball::Large,
        }
    }

    fn pose_xyz_rz(x: f64, y: f64, z: f64, rz_deg: f64) -> Pose {
        Pose::from_parts(
            na::Translation3::new(x, y, z),
            na::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), rz_deg.to_radians()),
        )
    }

    fn params() -> ClusterParams {
        ClusterParams {
            trans_thresh: 0.05,
            rot_thresh: 12.0f64.to_radians(),
            max_clusters_per_ball: 4,
        }
    }

    #[test]
    fn distinct_model_refs_pool_weight() {
        let p = pose_xyz_rz(0.0, 0.0, 0.5, 0.0);
        let hyps = vec![hyp(p, 0, 10), hyp(p, 1, 7), hyp(p, 2, 5)];
        let c = cluster_hypotheses(&hyps, &params()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].weight, 22);
        assert_eq!(c[0].members.len(), 3);
    }

    #[test]
    fn repeated_model_ref_pays_once() {
        let p = pose_xyz_rz(0.0, 0.0, 0.5, 0.0);
        let hyps = vec![hyp(p, 3, 10), hyp(p, 3, 9), hyp(p, 1, 4)];
        let c = cluster_hypotheses(&hyps, &params()).unwrap();
        assert_eq!(c.len(), 1);
        // The second model-ref-3 hypothesis joins but adds no weight.
        assert_eq!(c[0].weight, 14);
        assert_eq!(c[0].members.len(), 3);
    }

    #[test]
    fn far_translation_founds_new_cluster() {
        let a = pose_xyz_rz(0.0, 0.0, 0.5, 0.0);
        let b = pose_xyz_rz(0.2, 0.0, 0.5, 0.0);
        let hyps = vec![hyp(a, 0, 10), hyp(b, 1, 8)];
        let c = cluster_hypotheses(&hyps, &params()).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn rotation_threshold_separates() {
        let a = pose_xyz_rz(0.0, 0.0, 0.5, 0.0);
        let near = pose_xyz_rz(0.0, 0.0, 0.5, 11.0);
        let far = pose_xyz_rz(0.0, 0.0, 0.5, 13.0);
        let c = cluster_hypotheses(&[hyp(a, 0, 10), hyp(near, 1, 5)], &params()).unwrap();
        assert_eq!(c.len(), 1);
        let c = cluster_hypotheses(&[hyp(a, 0, 10), hyp(far, 1, 5)], &params()).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn membership_tested_against_founding_pose_not_members() {
        // b is within range of a; c is within range of b but not of a.
        // Bottom-up against founding poses puts c in its own cluster.
        let a = pose_xyz_rz(0.0, 0.0, 0.5, 0.0);
        let b = pose_xyz_rz(0.04, 0.0, 0.5, 0.0);
        let c = pose_xyz_rz(0.08, 0.0, 0.5, 0.0);
        let out =
            cluster_hypotheses(&[hyp(a, 0, 10), hyp(b, 1, 8), hyp(c, 2, 6)], &params()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].members.len(), 2);
    }

    #[test]
    fn output_sorted_by_pooled_weight() {
        let a = pose_xyz_rz(0.0, 0.0, 0.5, 0.0);
        let b = pose_xyz_rz(0.5, 0.0, 0.5, 0.0);
        // Founding order: a (12) then b (9); pooled, b's cluster wins.
        let hyps = vec![hyp(a, 0, 12), hyp(b, 1, 9), hyp(b, 2, 9)];
        let out = cluster_hypotheses(&hyps, &params()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].weight, 18);
        assert_eq!(out[1].weight, 12);
    }

    #[test]
    fn every_hypothesis_lands_in_exactly_one_cluster() {
        let mut hyps = Vec::new();
        for i in 0..40u32 {
            let p = pose_xyz_rz(0.03 * (i % 7) as f64, 0.0, 0.5, (i % 5) as f64 * 8.0);
            hyps.push(hyp(p, i % 11, (i % 13) as u64 + 1));
        }
        let out = cluster_hypotheses(&hyps, &params()).unwrap();
        let mut seen = vec![false; hyps.len()];
        for c in &out {
            for &m in &c.members {
                assert!(!seen[m as usize]);
                seen[m as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        let pooled: u64 = out.iter().map(|c| c.weight).sum();
        let total: u64 = hyps.iter().map(|h| h.votes).sum();
        assert!(pooled <= total);
    }
}
