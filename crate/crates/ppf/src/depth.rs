//! Depth images, camera intrinsics, and back-projection.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::geom::{Point3, UnitVec3};

/// Pinhole camera intrinsics.
///
/// `depth_scale` converts stored depth units to meters; 16-bit PNGs are
/// conventionally millimeters, hence the 0.001 default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    0.001
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            depth_scale: default_depth_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.depth_scale <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "depth_scale must be positive, got {}",
                self.depth_scale
            )));
        }
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let k: Intrinsics = serde_json::from_reader(std::fs::File::open(path)?)?;
        k.validate()?;
        Ok(k)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(std::fs::File::create(path)?, self)?;
        Ok(())
    }

    /// Pixel plus metric depth to a camera-frame point (+z forward).
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Point3 {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Camera-frame point to continuous pixel coordinates. Caller checks z > 0.
    #[inline]
    pub fn project(&self, p: &Point3) -> (f64, f64) {
        (
            p.x / p.z * self.fx + self.cx,
            p.y / p.z * self.fy + self.cy,
        )
    }
}

/// Dense depth map in meters; 0 or negative marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn idx(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[self.idx(u, v)]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, z: f32) {
        let i = self.idx(u, v);
        self.data[i] = z;
    }

    #[inline]
    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        let z = self.get(u, v);
        z > 0.0 && z.is_finite()
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|z| **z > 0.0 && z.is_finite()).count()
    }

    /// Loads a 16-bit grayscale PNG, mapping stored units to meters with
    /// `depth_scale` and zeros to invalid.
    pub fn load_png(path: &Path, depth_scale: f64) -> Result<Self> {
        let img = image::open(path)?;
        let img = match img {
            image::DynamicImage::ImageLuma16(b) => b,
            other => {
                return Err(Error::DepthFormat(format!(
                    "{:?} in {}",
                    other.color(),
                    path.display()
                )))
            }
        };
        let (width, height) = img.dimensions();
        let data = img
            .into_raw()
            .into_iter()
            .map(|raw| raw as f32 * depth_scale as f32)
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Saves as 16-bit grayscale PNG, rounding meters to the nearest stored
    /// unit and clamping to the u16 range; invalid pixels store 0.
    pub fn save_png(&self, path: &Path, depth_scale: f64) -> Result<()> {
        let raw: Vec<u16> = self
            .data
            .iter()
            .map(|&z| {
                if z > 0.0 && z.is_finite() {
                    (z as f64 / depth_scale).round().clamp(0.0, 65535.0) as u16
                } else {
                    0
                }
            })
            .collect();
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width, self.height, raw)
            .expect("buffer length matches dimensions");
        img.save(path)?;
        Ok(())
    }
}

/// Back-projects every valid pixel. The result has no normals yet; its
/// `pixels` field records each point's source pixel.
pub fn depth_to_cloud(depth: &DepthImage, k: &Intrinsics) -> OrientedPointCloud {
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if depth.is_valid(u, v) {
                let z = depth.get(u, v) as f64;
                points.push(k.backproject(u as f64, v as f64, z));
                pixels.push([u, v]);
            }
        }
    }
    OrientedPointCloud {
        points,
        normals: None,
        pixels: Some(pixels),
    }
}

/// Per-pixel surface normals by central differences of back-projected
/// neighbors `step` pixels apart, oriented toward the camera. A difference is
/// skipped when either sample is invalid or the depth gap exceeds `max_jump`
/// (which would smear normals across object boundaries).
pub fn normal_map(
    depth: &DepthImage,
    k: &Intrinsics,
    step: u32,
    max_jump: f64,
) -> Vec<Option<UnitVec3>> {
    let w = depth.width;
    let h = depth.height;
    let s = step.max(1);
    let mut out = vec![None; w as usize * h as usize];
    for v in 0..h {
        for u in 0..w {
            if !depth.is_valid(u, v) {
                continue;
            }
            let sample = |uu: i64, vv: i64| -> Option<Point3> {
                if uu < 0 || vv < 0 || uu >= w as i64 || vv >= h as i64 {
                    return None;
                }
                let (uu, vv) = (uu as u32, vv as u32);
                if !depth.is_valid(uu, vv) {
                    return None;
                }
                let z = depth.get(uu, vv) as f64;
                if (z - depth.get(u, v) as f64).abs() > max_jump {
                    return None;
                }
                Some(k.backproject(uu as f64, vv as f64, z))
            };
            let center = k.backproject(u as f64, v as f64, depth.get(u, v) as f64);
            let du = match (sample(u as i64 + s as i64, v as i64), sample(u as i64 - s as i64, v as i64)) {
                (Some(a), Some(b)) => a - b,
                (Some(a), None) => a - center,
                (None, Some(b)) => center - b,
                (None, None) => continue,
            };
            let dv = match (sample(u as i64, v as i64 + s as i64), sample(u as i64, v as i64 - s as i64)) {
                (Some(a), Some(b)) => a - b,
                (Some(a), None) => a - center,
                (None, Some(b)) => center - b,
                (None, None) => continue,
            };
            let n = du.cross(&dv);
            if n.norm() <= 1e-12 {
                continue;
            }
            let mut n = UnitVec3::new_normalize(n);
            // Surface normals face the camera at the origin.
            if n.dot(&center.coords) > 0.0 {
                n = -n;
            }
            out[depth.idx(u, v)] = Some(n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use approx::assert_relative_eq;

    #[test]
    fn principal_point_backprojects_on_axis() {
        let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0);
        let p = k.backproject(320.0, 240.0, 1.0);
        assert_relative_eq!(p.coords, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn off_center_pixel_backprojects_proportionally() {
        let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0);
        let p = k.backproject(420.0, 240.0, 2.0);
        assert_relative_eq!(p.coords, Vec3::new(0.4, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn project_inverts_backproject() {
        let k = Intrinsics::new(575.0, 570.0, 315.5, 244.0);
        let p = k.backproject(100.25, 399.75, 1.234);
        let (u, v) = k.project(&p);
        assert_relative_eq!(u, 100.25, epsilon = 1e-9);
        assert_relative_eq!(v, 399.75, epsilon = 1e-9);
    }

    #[test]
    fn depth_to_cloud_skips_invalid_and_keeps_pixels() {
        let mut d = DepthImage::new(4, 2);
        d.set(1, 0, 1.0);
        d.set(3, 1, 2.0);
        let k = Intrinsics::new(500.0, 500.0, 2.0, 1.0);
        let c = depth_to_cloud(&d, &k);
        assert_eq!(c.len(), 2);
        assert_eq!(c.pixels.as_ref().unwrap()[0], [1, 0]);
        assert_eq!(c.pixels.as_ref().unwrap()[1], [3, 1]);
        assert_relative_eq!(c.points[1].z, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn png_round_trip_preserves_millimeter_depth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut d = DepthImage::new(8, 4);
        d.set(0, 0, 0.5);
        d.set(7, 3, 1.2345); // rounds to 1234 or 1235 mm
        d.set(3, 2, 0.0015);
        d.save_png(&path, 0.001).unwrap();
        let r = DepthImage::load_png(&path, 0.001).unwrap();
        assert_eq!(r.width, 8);
        assert_eq!(r.height, 4);
        assert!(!r.is_valid(1, 1));
        assert_relative_eq!(r.get(0, 0), 0.5, epsilon = 1e-6);
        assert!((r.get(7, 3) - 1.2345).abs() <= 0.0005 + 1e-6);
        assert_relative_eq!(r.get(3, 2), 0.002, epsilon = 1e-6); // 1.5 mm rounds away from zero
    }

    #[test]
    fn normal_map_of_fronto_parallel_plane_faces_camera() {
        let k = Intrinsics::new(500.0, 500.0, 16.0, 12.0);
        let mut d = DepthImage::new(32, 24);
        for v in 0..24 {
            for u in 0..32 {
                d.set(u, v, 1.5);
            }
        }
        let nm = normal_map(&d, &k, 1, 0.05);
        let n = nm[d.idx(16, 12)].unwrap();
        assert_relative_eq!(n.z, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn normal_map_of_tilted_plane_matches_geometry() {
        // Plane z = 1 + 0.2*x in camera coordinates; analytic normal is
        // proportional to (0.2, 0, -1).
        let k = Intrinsics::new(200.0, 200.0, 20.0, 15.0);
        let mut d = DepthImage::new(40, 30);
        for v in 0..30 {
            for u in 0..40 {
                // x = (u-cx) z / fx and z = 1 + 0.2 x give z in closed form.
                let a = (u as f64 - k.cx) / k.fx;
                let z = 1.0 / (1.0 - 0.2 * a);
                d.set(u, v, z as f32);
            }
        }
        let nm = normal_map(&d, &k, 1, 0.05);
        let n = nm[d.idx(20, 15)].unwrap();
        let expect = UnitVec3::new_normalize(Vec3::new(0.2, 0.0, -1.0));
        assert!(n.dot(&expect) > 1.0 - 1e-4);
    }
}
