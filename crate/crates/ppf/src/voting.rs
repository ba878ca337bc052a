//! Pose voting: the online half of detection.
//!
//! For every scene reference point, candidate partners inside a ball are
//! paired with it, each pair's quantized feature selects a bucket of model
//! entries, and every entry votes for a (model point, planar rotation) cell.
//! Cells that survive the peak threshold become pose hypotheses.
//!
//! Two pass structure: a small ball (the diagonal of the two smallest
//! bounding-box extents) first, so mostly-occluded views with only nearby
//! visible surface still score; then the annulus out to the object diameter,
//! accumulating into the same tallies, for views whose evidence is spread
//! wide. The flag array remembers which (feature bin, scene rotation bin)
//! combinations already voted so duplicated features in flat regions and the
//! duplicates introduced by spreading cannot vote twice for one reference.

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::geom::{
    alpha_of_pair, canonical_frame, compute_ppf, pose_from_correspondence, wrap_angle, Pose,
};
use crate::grid::VoxelGrid;
use crate::table::{flat_index, quantize_ppf, ModelTable, QuantizationParams};

/// Knobs of the online stage. Defaults follow the reference pipeline; the
/// switches exist so individual contributions can be disabled for ablation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectionParams {
    /// Rotation bins for the planar angle; capped at 32 by the flag words.
    pub n_alpha_bins: u32,
    /// A cell is a peak when its votes reach this fraction of the maximum.
    pub peak_ratio: f64,
    /// Cells below this absolute count never become peaks.
    pub min_votes: u64,
    /// Use every k-th scene point as a reference point.
    pub reference_stride: usize,
    /// Also vote into the two neighboring scene rotation bins.
    pub spreading_rotation: bool,
    /// Deduplicate (feature bin, rotation bin) votes per reference point.
    pub flags_enabled: bool,
    /// Small ball pass before the annulus pass.
    pub two_balls: bool,
    /// Pair references only with ball neighbors found through the voxel grid;
    /// disabled, every scene point pairs with every other (the classic
    /// quadratic scheme, kept for comparison).
    pub smart_sampling: bool,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            n_alpha_bins: 32,
            peak_ratio: 0.95,
            min_votes: 3,
            reference_stride: 1,
            spreading_rotation: true,
            flags_enabled: true,
            two_balls: true,
            smart_sampling: true,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_alpha_bins == 0 || self.n_alpha_bins > 32 {
            return Err(Error::InvalidParameter(format!(
                "n_alpha_bins must be in 1..=32, got {}",
                self.n_alpha_bins
            )));
        }
        if !(self.peak_ratio > 0.0 && self.peak_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "peak_ratio must be in (0, 1], got {}",
                self.peak_ratio
            )));
        }
        if self.reference_stride == 0 {
            return Err(Error::InvalidParameter(
                "reference_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Rotation bin of a planar angle in [-pi, pi).
#[inline]
pub fn alpha_bin(alpha: f64, n_alpha: u32) -> u32 {
    let step = 2.0 * std::f64::consts::PI / n_alpha as f64;
    (((alpha + std::f64::consts::PI) / step) as i64).clamp(0, n_alpha as i64 - 1) as u32
}

/// Planar angle represented by a vote bin difference, in [-pi, pi).
#[inline]
pub fn alpha_of_bin(vote_bin: u32, n_alpha: u32) -> f64 {
    wrap_angle(vote_bin as f64 * 2.0 * std::f64::consts::PI / n_alpha as f64)
}

/// Per-reference-point vote deduplication: one bit per (flat feature bin,
/// scene rotation bin) pair, with a touched list so clearing costs only what
/// was set.
#[derive(Debug)]
pub struct VoteFlags {
    bits: Vec<u32>,
    touched: Vec<u32>,
    n_alpha: u32,
}

impl VoteFlags {
    pub fn new(n_flat_bins: usize, n_alpha: u32) -> Result<Self> {
        if n_alpha == 0 || n_alpha > 32 {
            return Err(Error::InvalidParameter(format!(
                "flag words hold at most 32 rotation bins, got {n_alpha}"
            )));
        }
        Ok(Self {
            bits: vec![0; n_flat_bins],
            touched: Vec::new(),
            n_alpha,
        })
    }

    /// Sets the bit, returning whether it was previously clear.
    #[inline]
    pub fn try_set(&mut self, flat: usize, rot_bin: u32) -> Result<bool> {
        if rot_bin >= self.n_alpha {
            return Err(Error::IndexOutOfRange {
                index: rot_bin as usize,
                limit: self.n_alpha as usize,
            });
        }
        let word = &mut self.bits[flat];
        if *word == 0 {
            self.touched.push(flat as u32);
        }
        let mask = 1u32 << rot_bin;
        let fresh = *word & mask == 0;
        *word |= mask;
        Ok(fresh)
    }

    #[inline]
    pub fn word(&self, flat: usize) -> u32 {
        self.bits[flat]
    }

    pub fn reset(&mut self) {
        for &f in &self.touched {
            self.bits[f as usize] = 0;
        }
        self.touched.clear();
    }
}

/// Vote tallies for one reference point: one row per model point, one column
/// per rotation bin.
#[derive(Debug, Clone)]
pub struct Accumulator {
    pub counts: Vec<i64>,
    pub n_model: usize,
    pub n_alpha: u32,
}

impl Accumulator {
    pub fn new(n_model: usize, n_alpha: u32) -> Self {
        Self {
            counts: vec![0; n_model * n_alpha as usize],
            n_model,
            n_alpha,
        }
    }

    #[inline]
    pub fn add(&mut self, model_index: u32, vote_bin: u32, weight: i64) {
        self.counts[model_index as usize * self.n_alpha as usize + vote_bin as usize] += weight;
    }

    #[inline]
    pub fn get(&self, model_index: u32, vote_bin: u32) -> i64 {
        self.counts[model_index as usize * self.n_alpha as usize + vote_bin as usize]
    }

    pub fn reset(&mut self) {
        self.counts.fill(0);
    }

    pub fn max(&self) -> i64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Which voting pass produced a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ball {
    Small,
    Large,
}

/// A raw pose hypothesis from one accumulator peak.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub pose: Pose,
    pub scene_ref_index: u32,
    pub model_ref_index: u32,
    pub alpha: f64,
    pub votes: u64,
    pub ball: Ball,
}

/// Votes all `candidates` against reference point `ref_index`, returning the
/// number of pairs examined. Candidates are pre-gathered (ball membership and
/// exclusion are the caller's concern); pairs farther apart than the table's
/// object diameter cannot match any model pair and are skipped.
pub fn vote_reference_point(
    scene: &OrientedPointCloud,
    ref_index: usize,
    candidates: &[u32],
    table: &ModelTable,
    params: &DetectionParams,
    acc: &mut Accumulator,
    flags: &mut VoteFlags,
) -> Result<u64> {
    params.validate()?;
    let normals = scene.normals()?;
    if ref_index >= scene.len() {
        return Err(Error::IndexOutOfRange {
            index: ref_index,
            limit: scene.len(),
        });
    }
    let n = params.n_alpha_bins;
    let p_r = scene.points[ref_index];
    let n_r = normals[ref_index];
    let frame = canonical_frame(&p_r, &n_r);
    let mut pairs = 0u64;
    for &j in candidates {
        let j = j as usize;
        if j == ref_index {
            continue;
        }
        pairs += 1;
        let Ok(f) = compute_ppf(&p_r, &n_r, &scene.points[j], &normals[j]) else {
            continue;
        };
        if f.dist > table.d_obj {
            continue;
        }
        let Ok(alpha_s) = alpha_of_pair(&frame, &scene.points[j]) else {
            continue;
        };
        let flat = flat_index(&quantize_ppf(&f, &table.quant), &table.quant);
        let bucket = &table.buckets[flat];
        let bs = alpha_bin(alpha_s, n);
        for ks in rotation_spread(bs, n, params.spreading_rotation) {
            if params.flags_enabled && !flags.try_set(flat, ks)? {
                continue;
            }
            for e in bucket {
                let bm = alpha_bin(e.alpha_model as f64, n);
                let vote = (bm + n - ks) % n;
                acc.add(e.model_point_index, vote, 1);
            }
        }
    }
    Ok(pairs)
}

/// The scene rotation bin plus (optionally) its two wrapped neighbors.
#[inline]
fn rotation_spread(bs: u32, n: u32, spread: bool) -> impl Iterator<Item = u32> {
    let prev = (bs + n - 1) % n;
    let next = (bs + 1) % n;
    let mut out = [Some(bs), None, None];
    if spread && prev != bs {
        out[1] = Some(prev);
        if next != prev && next != bs {
            out[2] = Some(next);
        }
    }
    out.into_iter().flatten()
}

/// Reads peaks out of an accumulator: every cell within `peak_ratio` of the
/// maximum (and at or above `min_votes`) becomes a pose hypothesis anchored
/// at the reference point.
pub fn extract_peaks(
    acc: &Accumulator,
    scene: &OrientedPointCloud,
    ref_index: usize,
    table_model: &OrientedPointCloud,
    params: &DetectionParams,
    ball: Ball,
) -> Result<Vec<Hypothesis>> {
    let scene_normals = scene.normals()?;
    let model_normals = table_model.normals()?;
    let max = acc.max();
    let mut out = Vec::new();
    if max <= 0 {
        return Ok(out);
    }
    let thresh = ((params.peak_ratio * max as f64).ceil() as i64).max(params.min_votes as i64);
    if max < thresh {
        return Ok(out);
    }
    for i in 0..acc.n_model {
        for k in 0..acc.n_alpha {
            let votes = acc.get(i as u32, k);
            if votes >= thresh {
                let alpha = alpha_of_bin(k, acc.n_alpha);
                let pose = pose_from_correspondence(
                    &scene.points[ref_index],
                    &scene_normals[ref_index],
                    &table_model.points[i],
                    &model_normals[i],
                    alpha,
                );
                out.push(Hypothesis {
                    pose,
                    scene_ref_index: ref_index as u32,
                    model_ref_index: i as u32,
                    alpha,
                    votes: votes as u64,
                    ball,
                });
            }
        }
    }
    Ok(out)
}

/// Ball radii from the model's sorted bounding-box extents and diameter: the
/// small ball spans the diagonal of the two smallest extents, the large ball
/// the whole object.
pub fn ball_radii(bbox_dims_sorted: [f64; 3], d_obj: f64) -> (f64, f64) {
    let r_max = d_obj;
    let r_min = bbox_dims_sorted[0].hypot(bbox_dims_sorted[1]).min(r_max);
    (r_min, r_max)
}

/// Counters from one detection run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VoteStats {
    /// (reference, candidate) pairs examined by the voting loops.
    pub candidate_pairs: u64,
    /// Reference points processed.
    pub references: u64,
}

/// Runs the voting stage over the whole scene against a raw model table.
/// Returns the hypotheses of the small-ball pass and of the annulus pass
/// (the first list is empty when `two_balls` is off).
///
/// This is the reference implementation; [`VoteTable`] + [`detect_with_table`]
/// compute the same result faster and are what [`crate::Detector`] uses.
pub fn detect_raw(
    scene: &OrientedPointCloud,
    table: &ModelTable,
    params: &DetectionParams,
) -> Result<(Vec<Hypothesis>, Vec<Hypothesis>)> {
    let (small, large, _) = detect_raw_with_stats(scene, table, params)?;
    Ok((small, large))
}

pub fn detect_raw_with_stats(
    scene: &OrientedPointCloud,
    table: &ModelTable,
    params: &DetectionParams,
) -> Result<(Vec<Hypothesis>, Vec<Hypothesis>, VoteStats)> {
    params.validate()?;
    scene.normals()?;
    let mut acc = Accumulator::new(table.model.len(), params.n_alpha_bins);
    let mut flags = VoteFlags::new(table.quant.n_flat_bins(), params.n_alpha_bins)?;
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut stats = VoteStats::default();

    let driver = DetectDriver::new(scene, table.d_obj, table.bbox_dims, params)?;
    let mut near = Vec::new();
    let mut far = Vec::new();
    for r in driver.references() {
        acc.reset();
        flags.reset();
        driver.candidate_split(r, &mut near, &mut far);
        if params.two_balls {
            stats.candidate_pairs +=
                vote_reference_point(scene, r, &near, table, params, &mut acc, &mut flags)?;
            small.extend(extract_peaks(&acc, scene, r, &table.model, params, Ball::Small)?);
        }
        stats.candidate_pairs +=
            vote_reference_point(scene, r, &far, table, params, &mut acc, &mut flags)?;
        large.extend(extract_peaks(&acc, scene, r, &table.model, params, Ball::Large)?);
        stats.references += 1;
    }
    Ok((small, large, stats))
}

/// Shared per-scene candidate gathering for both detection paths.
struct DetectDriver<'a> {
    scene: &'a OrientedPointCloud,
    params: &'a DetectionParams,
    grid: Option<VoxelGrid>,
    r_min: f64,
    r_max: f64,
}

impl<'a> DetectDriver<'a> {
    fn new(
        scene: &'a OrientedPointCloud,
        d_obj: f64,
        bbox_dims: [f64; 3],
        params: &'a DetectionParams,
    ) -> Result<Self> {
        let (r_min, r_max) = ball_radii(bbox_dims, d_obj);
        let grid = if params.smart_sampling && !scene.is_empty() {
            Some(VoxelGrid::build(scene, r_max)?)
        } else {
            None
        };
        Ok(Self {
            scene,
            params,
            grid,
            r_min,
            r_max,
        })
    }

    fn references(&self) -> impl Iterator<Item = usize> {
        (0..self.scene.len()).step_by(self.params.reference_stride)
    }

    /// Gathers candidates for a reference into the caller's buffers, split at
    /// the small-ball radius. With two_balls off everything lands in `far`.
    /// In all-pairs mode (smart sampling off) distance does not restrict
    /// `far` at all.
    fn candidate_split(&self, r: usize, near: &mut Vec<u32>, far: &mut Vec<u32>) {
        near.clear();
        far.clear();
        let p_r = self.scene.points[r];
        let split = self.params.two_balls;
        match &self.grid {
            Some(grid) => {
                let ids = grid
                    .query_ball(self.scene, r, self.r_max)
                    .expect("ball radius equals grid cell size");
                for j in ids {
                    let d = (self.scene.points[j as usize] - p_r).norm();
                    if split && d <= self.r_min {
                        near.push(j);
                    } else {
                        far.push(j);
                    }
                }
            }
            None => {
                for j in 0..self.scene.len() {
                    if j == r {
                        continue;
                    }
                    let d = (self.scene.points[j] - p_r).norm();
                    if split && d <= self.r_min {
                        near.push(j as u32);
                    } else {
                        far.push(j as u32);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Packed fast path
// ---------------------------------------------------------------------------

/// A model table repacked for the vote loop: per feature bin, entries are
/// collapsed to (model point, rotation bin, weight) and also summed per model
/// point. The row sums let a feature bin whose rotation mask filled up
/// completely vote with one addition per model point instead of one per
/// (entry, rotation) pair, which is what makes flat scene regions affordable.
#[derive(Debug)]
pub struct VoteTable {
    pub quant: QuantizationParams,
    pub n_alpha: u32,
    pub d_obj: f64,
    pub bbox_dims: [f64; 3],
    pub model: OrientedPointCloud,
    pub spreading: bool,
    entry_off: Vec<usize>,
    entries: Vec<PackedEntry>,
    row_off: Vec<usize>,
    rows: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Copy)]
struct PackedEntry {
    model_index: u32,
    weight: u32,
    rot_bin: u8,
}

impl VoteTable {
    /// Repacks a built model table for a fixed rotation bin count.
    pub fn new(table: &ModelTable, n_alpha: u32) -> Result<Self> {
        if n_alpha == 0 || n_alpha > 32 {
            return Err(Error::InvalidParameter(format!(
                "n_alpha must be in 1..=32, got {n_alpha}"
            )));
        }
        let n_flat = table.quant.n_flat_bins();
        let mut entry_off = Vec::with_capacity(n_flat + 1);
        let mut entries = Vec::new();
        let mut row_off = Vec::with_capacity(n_flat + 1);
        let mut rows = Vec::new();
        let mut scratch: Vec<(u32, u8)> = Vec::new();
        entry_off.push(0);
        row_off.push(0);
        for bucket in &table.buckets {
            scratch.clear();
            scratch.extend(bucket.iter().map(|e| {
                (
                    e.model_point_index,
                    alpha_bin(e.alpha_model as f64, n_alpha) as u8,
                )
            }));
            scratch.sort_unstable();
            let mut i = 0;
            while i < scratch.len() {
                let (idx, bm) = scratch[i];
                let mut run = 1;
                while i + run < scratch.len() && scratch[i + run] == (idx, bm) {
                    run += 1;
                }
                entries.push(PackedEntry {
                    model_index: idx,
                    weight: run as u32,
                    rot_bin: bm,
                });
                i += run;
            }
            // Row sums collapse further, over the rotation bin.
            let start = *entry_off.last().unwrap();
            let mut j = start;
            while j < entries.len() {
                let idx = entries[j].model_index;
                let mut w = 0u32;
                while j < entries.len() && entries[j].model_index == idx {
                    w += entries[j].weight;
                    j += 1;
                }
                rows.push((idx, w));
            }
            entry_off.push(entries.len());
            row_off.push(rows.len());
        }
        entries.shrink_to_fit();
        rows.shrink_to_fit();
        Ok(Self {
            quant: table.quant,
            n_alpha,
            d_obj: table.d_obj,
            bbox_dims: table.bbox_dims,
            model: table.model.clone(),
            spreading: table.spreading,
            entry_off,
            entries,
            row_off,
            rows,
        })
    }

    pub fn total_entries(&self) -> usize {
        self.entries.len()
    }
}

/// Scratch reused across reference points by [`detect_with_table`].
struct MaskScratch {
    delta_bits: Vec<u32>,
    delta_touched: Vec<u32>,
    bias: Vec<i64>,
}

/// Voting driver over a packed table. Produces exactly the hypotheses of
/// [`detect_raw`] on the table the packed table was built from.
pub fn detect_with_table(
    scene: &OrientedPointCloud,
    vt: &VoteTable,
    params: &DetectionParams,
) -> Result<(Vec<Hypothesis>, Vec<Hypothesis>, VoteStats)> {
    params.validate()?;
    let normals = scene.normals()?;
    if params.n_alpha_bins != vt.n_alpha {
        return Err(Error::InvalidParameter(format!(
            "params use {} rotation bins but the packed table was built for {}",
            params.n_alpha_bins, vt.n_alpha
        )));
    }
    let n = vt.n_alpha;
    let n_flat = vt.quant.n_flat_bins();
    let mut acc = Accumulator::new(vt.model.len(), n);
    let mut flags = VoteFlags::new(n_flat, n)?;
    let mut scratch = MaskScratch {
        delta_bits: vec![0; n_flat],
        delta_touched: Vec::new(),
        bias: vec![0; vt.model.len()],
    };
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut stats = VoteStats::default();

    let driver = DetectDriver::new(scene, vt.d_obj, vt.bbox_dims, params)?;
    let mut near = Vec::new();
    let mut far = Vec::new();
    for r in driver.references() {
        acc.reset();
        flags.reset();
        let frame = canonical_frame(&scene.points[r], &normals[r]);
        driver.candidate_split(r, &mut near, &mut far);
        if params.two_balls {
            stats.candidate_pairs += vote_pass_packed(
                scene, normals, r, &frame, &near, vt, params, &mut acc, &mut flags, &mut scratch,
            )?;
            small.extend(extract_peaks(&acc, scene, r, &vt.model, params, Ball::Small)?);
        }
        stats.candidate_pairs += vote_pass_packed(
            scene, normals, r, &frame, &far, vt, params, &mut acc, &mut flags, &mut scratch,
        )?;
        large.extend(extract_peaks(&acc, scene, r, &vt.model, params, Ball::Large)?);
        stats.references += 1;
    }
    Ok((small, large, stats))
}

#[allow(clippy::too_many_arguments)]
fn vote_pass_packed(
    scene: &OrientedPointCloud,
    normals: &[crate::geom::UnitVec3],
    r: usize,
    frame: &crate::geom::CanonicalFrame,
    candidates: &[u32],
    vt: &VoteTable,
    params: &DetectionParams,
    acc: &mut Accumulator,
    flags: &mut VoteFlags,
    scratch: &mut MaskScratch,
) -> Result<u64> {
    let n = vt.n_alpha;
    let p_r = scene.points[r];
    let n_r = normals[r];
    let mut pairs = 0u64;

    if params.flags_enabled {
        // Phase 1: mark fresh (feature bin, rotation bin) combinations.
        for &j in candidates {
            let j = j as usize;
            if j == r {
                continue;
            }
            pairs += 1;
            let Ok(f) = compute_ppf(&p_r, &n_r, &scene.points[j], &normals[j]) else {
                continue;
            };
            if f.dist > vt.d_obj {
                continue;
            }
            let Ok(alpha_s) = alpha_of_pair(frame, &scene.points[j]) else {
                continue;
            };
            let flat = flat_index(&quantize_ppf(&f, &vt.quant), &vt.quant);
            if vt.entry_off[flat] == vt.entry_off[flat + 1] {
                continue;
            }
            let bs = alpha_bin(alpha_s, n);
            for ks in rotation_spread(bs, n, params.spreading_rotation) {
                if flags.try_set(flat, ks)? {
                    if scratch.delta_bits[flat] == 0 {
                        scratch.delta_touched.push(flat as u32);
                    }
                    scratch.delta_bits[flat] |= 1 << ks;
                }
            }
        }
        // Phase 2: replay each touched bin once against its whole mask.
        let full: u32 = if n == 32 { u32::MAX } else { (1 << n) - 1 };
        for t in 0..scratch.delta_touched.len() {
            let flat = scratch.delta_touched[t] as usize;
            let mask = scratch.delta_bits[flat];
            scratch.delta_bits[flat] = 0;
            let erange = vt.entry_off[flat]..vt.entry_off[flat + 1];
            let m = mask.count_ones();
            if mask == full {
                for &(i, w) in &vt.rows[vt.row_off[flat]..vt.row_off[flat + 1]] {
                    scratch.bias[i as usize] += w as i64;
                }
            } else if m > n / 2 {
                // Nearly full: add the whole rows, subtract the missing bins.
                for &(i, w) in &vt.rows[vt.row_off[flat]..vt.row_off[flat + 1]] {
                    scratch.bias[i as usize] += w as i64;
                }
                let mut comp = full & !mask;
                while comp != 0 {
                    let ks = comp.trailing_zeros();
                    comp &= comp - 1;
                    for e in &vt.entries[erange.clone()] {
                        let mut vote = e.rot_bin as u32 + n - ks;
                        if vote >= n {
                            vote -= n;
                        }
                        acc.add(e.model_index, vote, -(e.weight as i64));
                    }
                }
            } else {
                let mut mm = mask;
                while mm != 0 {
                    let ks = mm.trailing_zeros();
                    mm &= mm - 1;
                    for e in &vt.entries[erange.clone()] {
                        let mut vote = e.rot_bin as u32 + n - ks;
                        if vote >= n {
                            vote -= n;
                        }
                        acc.add(e.model_index, vote, e.weight as i64);
                    }
                }
            }
        }
        scratch.delta_touched.clear();
        // Fold the uniform row biases into the tallies.
        for i in 0..scratch.bias.len() {
            let b = scratch.bias[i];
            if b != 0 {
                scratch.bias[i] = 0;
                let base = i * n as usize;
                for c in &mut acc.counts[base..base + n as usize] {
                    *c += b;
                }
            }
        }
    } else {
        // Without flags each pair votes unconditionally.
        for &j in candidates {
            let j = j as usize;
            if j == r {
                continue;
            }
            pairs += 1;
            let Ok(f) = compute_ppf(&p_r, &n_r, &scene.points[j], &normals[j]) else {
                continue;
            };
            if f.dist > vt.d_obj {
                continue;
            }
            let Ok(alpha_s) = alpha_of_pair(frame, &scene.points[j]) else {
                continue;
            };
            let flat = flat_index(&quantize_ppf(&f, &vt.quant), &vt.quant);
            let erange = vt.entry_off[flat]..vt.entry_off[flat + 1];
            if erange.is_empty() {
                continue;
            }
            let bs = alpha_bin(alpha_s, n);
            for ks in rotation_spread(bs, n, params.spreading_rotation) {
                for e in &vt.entries[erange.clone()] {
                    let mut vote = e.rot_bin as u32 + n - ks;
                    if vote >= n {
                        vote -= n;
                    }
                    acc.add(e.model_index, vote, e.weight as i64);
                }
            }
        }
    }
    Ok(pairs)
}
