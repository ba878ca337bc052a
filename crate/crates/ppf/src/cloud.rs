//! Oriented point cloud container.

use crate::error::{Error, Result};
use crate::geom::{Point3, Pose, UnitVec3};

/// A set of 3D points, optionally with unit normals and with the source pixel
/// of each point when the cloud came from a depth image.
///
/// When present, `normals` and `pixels` run parallel to `points`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<UnitVec3>>,
    pub pixels: Option<Vec<[u32; 2]>>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: None,
            pixels: None,
        }
    }

    /// Builds a cloud with normals, checking the parallel-array invariant.
    pub fn with_normals(points: Vec<Point3>, normals: Vec<UnitVec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::LengthMismatch {
                points: points.len(),
                normals: normals.len(),
            });
        }
        Ok(Self {
            points,
            normals: Some(normals),
            pixels: None,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Normals slice, or an error for stages that cannot run without them.
    pub fn normals(&self) -> Result<&[UnitVec3]> {
        self.normals.as_deref().ok_or(Error::NormalsMissing)
    }

    /// Returns the cloud moved by `pose` (points transformed, normals rotated).
    pub fn transformed(&self, pose: &Pose) -> Self {
        Self {
            points: self.points.iter().map(|p| pose * p).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.rotation * n).collect()),
            pixels: self.pixels.clone(),
        }
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> Result<(Point3, Point3)> {
        if self.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Ok((lo, hi))
    }

    /// Bounding-box edge lengths sorted ascending.
    pub fn bbox_dims_sorted(&self) -> Result<[f64; 3]> {
        let (lo, hi) = self.bounding_box()?;
        let mut d = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
        d.sort_by(|a, b| a.total_cmp(b));
        Ok(d)
    }

    /// Diameter of the bounding-box-centered sphere that encloses every point.
    /// Used as the object diameter everywhere downstream.
    pub fn enclosing_diameter(&self) -> Result<f64> {
        let (lo, hi) = self.bounding_box()?;
        let c = na_center(&lo, &hi);
        let r = self
            .points
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0f64, f64::max);
        Ok(2.0 * r)
    }
}

fn na_center(lo: &Point3, hi: &Point3) -> Point3 {
    Point3::new(
        0.5 * (lo.x + hi.x),
        0.5 * (lo.y + hi.y),
        0.5 * (lo.z + hi.z),
    )
}
