//! Quantized feature table of a model: the offline half of detection.
//!
//! Every ordered pair of model points contributes one entry, filed under the
//! quantized pair feature. With spreading enabled the entry is duplicated
//! into every neighboring bin as well (up to 80 of them), which makes the
//! online lookup robust to sensor noise that pushes a measured feature across
//! a bin boundary without adding any per-query search.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::geom::{alpha_of_pair, canonical_frame, compute_ppf, PairFeature};

pub const DEFAULT_ANGLE_BINS: u32 = 22;
pub const DEFAULT_DIST_BINS: u32 = 40;

/// Bin layout for the four feature components. Distances quantize relative to
/// the object diameter; angles cover [0, pi].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantizationParams {
    pub n_angle_bins: u32,
    pub n_dist_bins: u32,
    pub angle_step: f64,
    pub dist_step: f64,
}

impl QuantizationParams {
    /// Default layout for an object of diameter `d_obj`: 22 angle bins over
    /// [0, pi] and 40 distance bins over [0, d_obj].
    pub fn for_diameter(d_obj: f64) -> Self {
        Self::with_bins(d_obj, DEFAULT_ANGLE_BINS, DEFAULT_DIST_BINS)
    }

    pub fn with_bins(d_obj: f64, n_angle_bins: u32, n_dist_bins: u32) -> Self {
        Self {
            n_angle_bins,
            n_dist_bins,
            angle_step: std::f64::consts::PI / n_angle_bins as f64,
            dist_step: d_obj / n_dist_bins as f64,
        }
    }

    /// Total number of flat feature bins.
    #[inline]
    pub fn n_flat_bins(&self) -> usize {
        let a = self.n_angle_bins as usize;
        a * a * a * self.n_dist_bins as usize
    }
}

/// A pair feature after quantization: three angle bins and one distance bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedPpf {
    pub dist_bin: u16,
    pub a1_bin: u16,
    pub a2_bin: u16,
    pub a3_bin: u16,
}

/// Floors each component onto its bin grid; values at the top edge clamp into
/// the last bin so a distance of exactly d_obj or an angle of exactly pi
/// stays representable.
pub fn quantize_ppf(f: &PairFeature, q: &QuantizationParams) -> QuantizedPpf {
    let bin = |x: f64, step: f64, n: u32| ((x / step) as i64).clamp(0, n as i64 - 1) as u16;
    QuantizedPpf {
        dist_bin: bin(f.dist, q.dist_step, q.n_dist_bins),
        a1_bin: bin(f.angle_n1_d, q.angle_step, q.n_angle_bins),
        a2_bin: bin(f.angle_n2_d, q.angle_step, q.n_angle_bins),
        a3_bin: bin(f.angle_n1_n2, q.angle_step, q.n_angle_bins),
    }
}

/// Flat bucket index: angle bins are the major dimensions, distance minor.
#[inline]
pub fn flat_index(p: &QuantizedPpf, q: &QuantizationParams) -> usize {
    let a = q.n_angle_bins as usize;
    ((p.a1_bin as usize * a + p.a2_bin as usize) * a + p.a3_bin as usize)
        * q.n_dist_bins as usize
        + p.dist_bin as usize
}

/// All bins differing by at most one step in each of the four components,
/// excluding the bin itself. No component wraps: angle bin 0 and the top bins
/// have fewer neighbors (15 at a corner, 80 in the interior).
pub fn neighbor_bins(p: &QuantizedPpf, q: &QuantizationParams) -> Vec<QuantizedPpf> {
    let mut out = Vec::with_capacity(80);
    let na = q.n_angle_bins as i32;
    let nd = q.n_dist_bins as i32;
    for da1 in -1..=1i32 {
        for da2 in -1..=1i32 {
            for da3 in -1..=1i32 {
                for dd in -1..=1i32 {
                    if da1 == 0 && da2 == 0 && da3 == 0 && dd == 0 {
                        continue;
                    }
                    let a1 = p.a1_bin as i32 + da1;
                    let a2 = p.a2_bin as i32 + da2;
                    let a3 = p.a3_bin as i32 + da3;
                    let d = p.dist_bin as i32 + dd;
                    if a1 < 0 || a1 >= na || a2 < 0 || a2 >= na || a3 < 0 || a3 >= na
                        || d < 0 || d >= nd
                    {
                        continue;
                    }
                    out.push(QuantizedPpf {
                        dist_bin: d as u16,
                        a1_bin: a1 as u16,
                        a2_bin: a2 as u16,
                        a3_bin: a3 as u16,
                    });
                }
            }
        }
    }
    out
}

/// One model pair filed in a bucket: the first point of the pair and the
/// planar angle that aligns the pair in its canonical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelEntry {
    pub model_point_index: u32,
    pub alpha_model: f32,
}

/// Precomputed lookup structure for one model.
#[derive(Debug, PartialEq)]
pub struct ModelTable {
    pub quant: QuantizationParams,
    pub spreading: bool,
    pub d_obj: f64,
    /// Bounding-box edge lengths sorted ascending; the two smallest bound the
    /// thinnest silhouette the object can present.
    pub bbox_dims: [f64; 3],
    pub model: OrientedPointCloud,
    /// Denser resampling of the same surface, used only for rendering during
    /// verification: the voting cloud's spacing is too coarse for a
    /// pixel-accurate silhouette. Defaults to the voting cloud.
    pub render: OrientedPointCloud,
    /// Sampling distance of `render`; splats are sized to cover it.
    pub render_spacing: f64,
    /// One bucket per flat feature bin.
    pub buckets: Vec<Vec<ModelEntry>>,
}

/// Files every ordered pair of model points into `quant`'s bins, duplicating
/// into neighbor bins when `spreading` is set. Pairs that are degenerate or
/// whose second point lies on the first one's normal axis are skipped.
pub fn build_model_table(
    model: &OrientedPointCloud,
    d_obj: f64,
    bbox_dims: [f64; 3],
    quant: QuantizationParams,
    spreading: bool,
) -> Result<ModelTable> {
    let normals = model.normals()?;
    if model.len() < 2 {
        return Err(Error::TooFewPoints {
            got: model.len(),
            need: 2,
        });
    }
    if !(d_obj > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "object diameter must be positive, got {d_obj}"
        )));
    }
    let mut buckets: Vec<Vec<ModelEntry>> = vec![Vec::new(); quant.n_flat_bins()];
    for i in 0..model.len() {
        let frame = canonical_frame(&model.points[i], &normals[i]);
        for j in 0..model.len() {
            if i == j {
                continue;
            }
            let Ok(f) = compute_ppf(&model.points[i], &normals[i], &model.points[j], &normals[j])
            else {
                continue;
            };
            let Ok(alpha) = alpha_of_pair(&frame, &model.points[j]) else {
                continue;
            };
            let entry = ModelEntry {
                model_point_index: i as u32,
                alpha_model: alpha as f32,
            };
            let qp = quantize_ppf(&f, &quant);
            buckets[flat_index(&qp, &quant)].push(entry);
            if spreading {
                for nb in neighbor_bins(&qp, &quant) {
                    buckets[flat_index(&nb, &quant)].push(entry);
                }
            }
        }
    }
    for b in &mut buckets {
        b.shrink_to_fit();
    }
    Ok(ModelTable {
        quant,
        spreading,
        d_obj,
        bbox_dims,
        model: model.clone(),
        render: model.clone(),
        // Assumes the d_obj/20 default sampling; callers with the raw cloud
        // replace both via with_render_cloud.
        render_spacing: d_obj / 20.0,
        buckets,
    })
}

impl ModelTable {
    /// Builds with the default bin layout, deriving the diameter and bounding
    /// box from the cloud.
    pub fn build(model: &OrientedPointCloud, spreading: bool) -> Result<Self> {
        let d_obj = model.enclosing_diameter()?;
        let bbox = model.bbox_dims_sorted()?;
        build_model_table(model, d_obj, bbox, QuantizationParams::for_diameter(d_obj), spreading)
    }

    /// Same, with an externally supplied diameter (e.g. from a config file).
    pub fn build_with_diameter(
        model: &OrientedPointCloud,
        d_obj: f64,
        spreading: bool,
    ) -> Result<Self> {
        let bbox = model.bbox_dims_sorted()?;
        build_model_table(model, d_obj, bbox, QuantizationParams::for_diameter(d_obj), spreading)
    }

    /// Replaces the render cloud with `raw` subsampled at `spacing`, keeping
    /// silhouette detail the voting cloud has thrown away.
    pub fn with_render_cloud(mut self, raw: &OrientedPointCloud, spacing: f64) -> Result<Self> {
        self.render = crate::preprocess::subsample(raw, spacing, None)?;
        self.render_spacing = spacing;
        Ok(self)
    }

    pub fn total_entries(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn occupied_buckets(&self) -> usize {
        self.buckets.iter().filter(|b| !b.is_empty()).count()
    }
}

const MAGIC: &[u8; 4] = b"PPF1";
const FORMAT_VERSION: u32 = 1;

struct CountingWriter<W: Write> {
    inner: W,
}

impl<W: Write> CountingWriter<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_all(&[v])?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f32(&mut self, v: f32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
}

/// Byte-offset-tracking reader so corruption errors can say where.
struct CountingReader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        match self.inner.read_exact(&mut buf) {
            Ok(()) => {
                self.offset += N as u64;
                Ok(buf)
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::CorruptTable {
                offset: self.offset,
                reason: "unexpected end of file".into(),
            }),
            Err(e) => Err(e.into()),
        }
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptTable {
            offset: self.offset,
            reason: reason.into(),
        }
    }
}

fn read_cloud<R: Read>(r: &mut CountingReader<R>, min_points: usize) -> Result<OrientedPointCloud> {
    let n_points = r.u64()? as usize;
    if n_points < min_points || n_points > u32::MAX as usize {
        return Err(r.corrupt(format!("implausible point count {n_points}")));
    }
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        points.push(crate::geom::Point3::new(r.f64()?, r.f64()?, r.f64()?));
    }
    let normals = match r.u8()? {
        0 => None,
        1 => {
            let mut ns = Vec::with_capacity(n_points);
            for _ in 0..n_points {
                let v = crate::geom::Vec3::new(r.f64()?, r.f64()?, r.f64()?);
                if (v.norm() - 1.0).abs() > 1e-6 {
                    return Err(r.corrupt(format!("non-unit normal {v:?}")));
                }
                // new_unchecked keeps the stored bits so a round trip is exact.
                ns.push(crate::geom::UnitVec3::new_unchecked(v));
            }
            Some(ns)
        }
        v => return Err(r.corrupt(format!("bad normals flag {v}"))),
    };
    let pixels = match r.u8()? {
        0 => None,
        1 => {
            let mut px = Vec::with_capacity(n_points);
            for _ in 0..n_points {
                px.push([r.u32()?, r.u32()?]);
            }
            Some(px)
        }
        v => return Err(r.corrupt(format!("bad pixels flag {v}"))),
    };
    Ok(OrientedPointCloud {
        points,
        normals,
        pixels,
    })
}

fn write_cloud<W: Write>(w: &mut CountingWriter<W>, m: &OrientedPointCloud) -> Result<()> {
    w.u64(m.len() as u64)?;
    for p in &m.points {
        w.f64(p.x)?;
        w.f64(p.y)?;
        w.f64(p.z)?;
    }
    w.u8(m.normals.is_some() as u8)?;
    if let Some(ns) = &m.normals {
        for n in ns {
            w.f64(n.x)?;
            w.f64(n.y)?;
            w.f64(n.z)?;
        }
    }
    w.u8(m.pixels.is_some() as u8)?;
    if let Some(px) = &m.pixels {
        for p in px {
            w.u32(p[0])?;
            w.u32(p[1])?;
        }
    }
    Ok(())
}

/// Writes the table in its versioned binary format (magic `PPF1`). Only
/// occupied buckets are stored.
pub fn save_table(table: &ModelTable, path: &Path) -> Result<()> {
    let mut w = CountingWriter {
        inner: BufWriter::new(File::create(path)?),
    };
    w.inner.write_all(MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u8(table.spreading as u8)?;
    w.u32(table.quant.n_angle_bins)?;
    w.u32(table.quant.n_dist_bins)?;
    w.f64(table.quant.angle_step)?;
    w.f64(table.quant.dist_step)?;
    w.f64(table.d_obj)?;
    for d in table.bbox_dims {
        w.f64(d)?;
    }

    write_cloud(&mut w, &table.model)?;
    write_cloud(&mut w, &table.render)?;
    w.f64(table.render_spacing)?;

    w.u64(table.occupied_buckets() as u64)?;
    for (flat, bucket) in table.buckets.iter().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        w.u64(flat as u64)?;
        w.u32(bucket.len() as u32)?;
        for e in bucket {
            w.u32(e.model_point_index)?;
            w.f32(e.alpha_model)?;
        }
    }
    w.inner.flush()?;
    Ok(())
}

/// Reads a table written by [`save_table`], validating structure as it goes;
/// a malformed file fails with [`Error::CorruptTable`] citing the byte offset.
pub fn load_table(path: &Path) -> Result<ModelTable> {
    let mut r = CountingReader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let magic: [u8; 4] = r.bytes()?;
    if &magic != MAGIC {
        return Err(Error::CorruptTable {
            offset: 0,
            reason: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.corrupt(format!("unsupported format version {version}")));
    }
    let spreading = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(r.corrupt(format!("bad spreading flag {v}"))),
    };
    let n_angle_bins = r.u32()?;
    let n_dist_bins = r.u32()?;
    if n_angle_bins == 0 || n_angle_bins > 4096 || n_dist_bins == 0 || n_dist_bins > 65536 {
        return Err(r.corrupt(format!(
            "implausible bin counts {n_angle_bins}x{n_dist_bins}"
        )));
    }
    let angle_step = r.f64()?;
    let dist_step = r.f64()?;
    let quant = QuantizationParams {
        n_angle_bins,
        n_dist_bins,
        angle_step,
        dist_step,
    };
    let d_obj = r.f64()?;
    if !(d_obj > 0.0) || !d_obj.is_finite() {
        return Err(r.corrupt(format!("bad object diameter {d_obj}")));
    }
    let bbox_dims = [r.f64()?, r.f64()?, r.f64()?];

    let model = read_cloud(&mut r, 2)?;
    let render = read_cloud(&mut r, 1)?;
    let render_spacing = r.f64()?;
    if !(render_spacing > 0.0) || !render_spacing.is_finite() {
        return Err(r.corrupt(format!("bad render spacing {render_spacing}")));
    }
    let n_points = model.len();

    let n_flat = quant.n_flat_bins();
    let n_occupied = r.u64()? as usize;
    if n_occupied > n_flat {
        return Err(r.corrupt(format!(
            "occupied bucket count {n_occupied} exceeds {n_flat} bins"
        )));
    }
    let mut buckets: Vec<Vec<ModelEntry>> = vec![Vec::new(); n_flat];
    let mut prev_flat: Option<u64> = None;
    for _ in 0..n_occupied {
        let flat = r.u64()?;
        if flat as usize >= n_flat {
            return Err(r.corrupt(format!("bucket index {flat} out of range {n_flat}")));
        }
        if let Some(p) = prev_flat {
            if flat <= p {
                return Err(r.corrupt(format!("bucket indices not ascending at {flat}")));
            }
        }
        prev_flat = Some(flat);
        let count = r.u32()? as usize;
        let mut bucket = Vec::with_capacity(count);
        for _ in 0..count {
            let idx = r.u32()?;
            if idx as usize >= n_points {
                return Err(r.corrupt(format!("entry point index {idx} out of range {n_points}")));
            }
            let alpha = r.f32()?;
            if !alpha.is_finite() || alpha.abs() > std::f32::consts::PI + 1e-6 {
                return Err(r.corrupt(format!("entry alpha {alpha} outside [-pi, pi]")));
            }
            bucket.push(ModelEntry {
                model_point_index: idx,
                alpha_model: alpha,
            });
        }
        buckets[flat as usize] = bucket;
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(r.corrupt("trailing bytes after table"));
    }
    Ok(ModelTable {
        quant,
        spreading,
        d_obj,
        bbox_dims,
        model,
        render,
        render_spacing,
        buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, UnitVec3, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn q04() -> QuantizationParams {
        QuantizationParams::for_diameter(0.4)
    }

    #[test]
    fn default_layout_has_expected_bins() {
        let q = q04();
        assert_eq!(q.n_flat_bins(), 425_920);
        assert!((q.dist_step - 0.01).abs() < 1e-15);
        assert!((q.angle_step - PI / 22.0).abs() < 1e-15);
    }

    #[test]
    fn quantize_floors_and_clamps() {
        let q = q04();
        let f = PairFeature {
            dist: 0.399,
            angle_n1_d: 0.0,
            angle_n2_d: PI,
            angle_n1_n2: PI / 2.0,
        };
        let p = quantize_ppf(&f, &q);
        assert_eq!(p.dist_bin, 39);
        assert_eq!(p.a1_bin, 0);
        assert_eq!(p.a2_bin, 21); // top edge clamps
        assert_eq!(p.a3_bin, 11);
        // Exactly d_obj also clamps into the last distance bin.
        let f = PairFeature {
            dist: 0.4,
            ..f
        };
        assert_eq!(quantize_ppf(&f, &q).dist_bin, 39);
    }

    #[test]
    fn flat_index_is_bijective_over_all_bins() {
        let q = q04();
        let mut seen = vec![false; q.n_flat_bins()];
        for a1 in 0..22u16 {
            for a2 in 0..22u16 {
                for a3 in 0..22u16 {
                    for d in 0..40u16 {
                        let i = flat_index(
                            &QuantizedPpf {
                                dist_bin: d,
                                a1_bin: a1,
                                a2_bin: a2,
                                a3_bin: a3,
                            },
                            &q,
                        );
                        assert!(!seen[i]);
                        seen[i] = true;
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn neighbor_counts_at_interior_and_corner() {
        let q = q04();
        let interior = QuantizedPpf {
            dist_bin: 20,
            a1_bin: 10,
            a2_bin: 10,
            a3_bin: 10,
        };
        assert_eq!(neighbor_bins(&interior, &q).len(), 80);
        let corner = QuantizedPpf {
            dist_bin: 0,
            a1_bin: 0,
            a2_bin: 0,
            a3_bin: 0,
        };
        assert_eq!(neighbor_bins(&corner, &q).len(), 15);
        let edge = QuantizedPpf {
            dist_bin: 0,
            a1_bin: 10,
            a2_bin: 10,
            a3_bin: 10,
        };
        assert_eq!(neighbor_bins(&edge, &q).len(), 53); // 2 * 27 - 1
    }

    fn random_cloud(n: usize, seed: u64) -> OrientedPointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                )
            })
            .collect();
        let normals = (0..n)
            .map(|_| {
                UnitVec3::new_normalize(Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ))
            })
            .collect();
        OrientedPointCloud::with_normals(points, normals).unwrap()
    }

    #[test]
    fn unspread_table_has_one_entry_per_ordered_pair() {
        let c = random_cloud(30, 3);
        let t = ModelTable::build(&c, false).unwrap();
        assert_eq!(t.total_entries(), 30 * 29);
    }

    #[test]
    fn spread_table_duplicates_into_every_neighbor() {
        let c = random_cloud(12, 4);
        let q = QuantizationParams::for_diameter(c.enclosing_diameter().unwrap());
        let plain = ModelTable::build(&c, false).unwrap();
        let spread = ModelTable::build(&c, true).unwrap();
        // Each pair's entry count equals 1 + the neighbor count of its bin.
        let normals = c.normals().unwrap();
        let mut expected = 0usize;
        for i in 0..c.len() {
            for j in 0..c.len() {
                if i == j {
                    continue;
                }
                let f = compute_ppf(&c.points[i], &normals[i], &c.points[j], &normals[j]).unwrap();
                let qp = quantize_ppf(&f, &q);
                expected += 1 + neighbor_bins(&qp, &q).len();
            }
        }
        assert_eq!(spread.total_entries(), expected);
        assert!(spread.total_entries() > plain.total_entries());
        // Spreading adds copies; it never removes the exact-bin entry.
        for (pb, sb) in plain.buckets.iter().zip(&spread.buckets) {
            for e in pb {
                assert!(sb.iter().any(|s| s == e));
            }
        }
    }

    #[test]
    fn two_parallel_points_bucket_together() {
        let n = UnitVec3::new_normalize(Vec3::z());
        let c = OrientedPointCloud::with_normals(
            vec![Point3::origin(), Point3::new(0.1, 0.0, 0.0)],
            vec![n, n],
        )
        .unwrap();
        let t = ModelTable::build(&c, false).unwrap();
        assert_eq!(t.total_entries(), 2);
        // Both ordered pairs share one feature bin: same distance, symmetric
        // angles, parallel normals.
        let occupied: Vec<usize> = (0..t.buckets.len())
            .filter(|&i| !t.buckets[i].is_empty())
            .collect();
        assert_eq!(occupied.len(), 1);
        assert_eq!(t.buckets[occupied[0]].len(), 2);
    }

    #[test]
    fn save_load_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ppf1");
        let c = random_cloud(25, 5);
        let t = ModelTable::build(&c, true).unwrap();
        save_table(&t, &path).unwrap();
        let r = load_table(&path).unwrap();
        assert_eq!(t, r);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ppf1");
        let c = random_cloud(10, 6);
        let t = ModelTable::build(&c, false).unwrap();
        save_table(&t, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        match load_table(&path) {
            Err(Error::CorruptTable { offset, .. }) => {
                assert!(offset > 0 && offset <= full.len() as u64)
            }
            other => panic!("expected CorruptTable, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ppf1");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(
            load_table(&path),
            Err(Error::CorruptTable { offset: 0, .. })
        ));
    }

    #[test]
    fn garbage_tail_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ppf1");
        let c = random_cloud(8, 7);
        let t = ModelTable::build(&c, false).unwrap();
        save_table(&t, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0xAB);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_table(&path), Err(Error::CorruptTable { .. })));
    }
}
