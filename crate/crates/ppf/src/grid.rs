//! Uniform voxel grid for fixed-radius neighbor queries.
//!
//! The grid is sized so that a ball query of radius <= cell_size only ever
//! touches the 3x3x3 block of cells around the query point; the detection
//! stage exploits this by setting cell_size to the largest radius it uses and
//! deriving smaller balls from the same gathered candidates.

use std::collections::HashMap;

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::geom::Point3;

/// Slack for radius/cell comparisons so a radius computed as exactly the cell
/// size is not rejected for rounding.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Debug)]
pub struct VoxelGrid {
    pub cell_size: f64,
    pub origin: Point3,
    pub dims: [u32; 3],
    cells: HashMap<u64, Vec<u32>>,
    point_voxel: Vec<[u32; 3]>,
}

impl VoxelGrid {
    /// Builds the grid over all cloud points with the given cell edge length.
    pub fn build(cloud: &OrientedPointCloud, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cell_size must be positive and finite, got {cell_size}"
            )));
        }
        let (lo, hi) = cloud.bounding_box()?;
        let dim = |a: f64, b: f64| ((b - a) / cell_size).floor() as u32 + 1;
        let dims = [dim(lo.x, hi.x), dim(lo.y, hi.y), dim(lo.z, hi.z)];
        let mut grid = Self {
            cell_size,
            origin: lo,
            dims,
            cells: HashMap::new(),
            point_voxel: Vec::with_capacity(cloud.len()),
        };
        for (i, p) in cloud.points.iter().enumerate() {
            let v = grid.voxel_of(p);
            grid.point_voxel.push(v);
            grid.cells.entry(grid.flat(v)).or_default().push(i as u32);
        }
        Ok(grid)
    }

    /// Voxel coordinates of a point inside the build bounding box.
    #[inline]
    pub fn voxel_of(&self, p: &Point3) -> [u32; 3] {
        let v = self.voxel_of_unclamped(p);
        let f = |x: i64, d: u32| x.clamp(0, d as i64 - 1) as u32;
        [f(v[0], self.dims[0]), f(v[1], self.dims[1]), f(v[2], self.dims[2])]
    }

    /// Voxel coordinates without clamping; may lie outside the grid for
    /// points outside the build bounding box.
    #[inline]
    fn voxel_of_unclamped(&self, p: &Point3) -> [i64; 3] {
        let f = |x: f64, o: f64| ((x - o) / self.cell_size).floor() as i64;
        [
            f(p.x, self.origin.x),
            f(p.y, self.origin.y),
            f(p.z, self.origin.z),
        ]
    }

    #[inline]
    fn flat(&self, v: [u32; 3]) -> u64 {
        (v[0] as u64 * self.dims[1] as u64 + v[1] as u64) * self.dims[2] as u64 + v[2] as u64
    }

    /// Occupied-cell count, for diagnostics.
    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    /// Indices of all points within `radius` of point `center_index`
    /// (inclusive), excluding the center itself, ascending.
    ///
    /// `radius` must not exceed `cell_size`: that is what confines the search
    /// to the 27-cell neighborhood.
    pub fn query_ball(
        &self,
        cloud: &OrientedPointCloud,
        center_index: usize,
        radius: f64,
    ) -> Result<Vec<u32>> {
        if center_index >= cloud.len() {
            return Err(Error::IndexOutOfRange {
                index: center_index,
                limit: cloud.len(),
            });
        }
        if radius > self.cell_size + RADIUS_SLACK {
            return Err(Error::RadiusExceedsCell {
                radius,
                cell_size: self.cell_size,
            });
        }
        let center = cloud.points[center_index];
        let v = self.point_voxel[center_index];
        let v = [v[0] as i64, v[1] as i64, v[2] as i64];
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.for_block(v, 1, |idx| {
            if idx as usize != center_index
                && (cloud.points[idx as usize] - center).norm_squared() <= r2
            {
                out.push(idx);
            }
        });
        out.sort_unstable();
        Ok(out)
    }

    /// Indices of all points within `radius` of an arbitrary location, with no
    /// radius cap: the search block grows with the radius. Used by the normal
    /// estimator, which needs neighborhoods wider than one detection cell.
    pub fn query_radius_at(
        &self,
        cloud: &OrientedPointCloud,
        at: &Point3,
        radius: f64,
    ) -> Vec<u32> {
        let v = self.voxel_of_unclamped(at);
        let rings = (radius / self.cell_size).ceil().max(1.0) as u32;
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.for_block(v, rings, |idx| {
            if (cloud.points[idx as usize] - at).norm_squared() <= r2 {
                out.push(idx);
            }
        });
        out.sort_unstable();
        out
    }

    fn for_block(&self, v: [i64; 3], rings: u32, mut f: impl FnMut(u32)) {
        let r = rings as i64;
        let lo = |c: i64| (c - r).max(0);
        let hi = |c: i64, d: u32| (c + r).min(d as i64 - 1);
        for x in lo(v[0])..=hi(v[0], self.dims[0]) {
            for y in lo(v[1])..=hi(v[1], self.dims[1]) {
                for z in lo(v[2])..=hi(v[2], self.dims[2]) {
                    if let Some(ids) = self.cells.get(&self.flat([x as u32, y as u32, z as u32])) {
                        for &i in ids {
                            f(i);
                        }
                    }
                }
            }
        }
    }
}
