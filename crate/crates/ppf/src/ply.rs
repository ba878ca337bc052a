//! ASCII PLY point cloud reading and writing.
//!
//! Reads the vertex element of ASCII 1.0 files, picking out x/y/z and, when
//! present, nx/ny/nz among arbitrary extra properties; other elements (faces,
//! edges) are skipped. Binary files are rejected rather than misread.

use crate::cloud::OrientedPointCloud;
use crate::error::{Error, Result};
use crate::geom::{Point3, UnitVec3, Vec3};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

struct Element {
    name: String,
    count: usize,
    /// Per property: (name, is_list).
    properties: Vec<(String, bool)>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::PlyParse {
        line,
        reason: reason.into(),
    }
}

/// Loads an ASCII PLY file. Normals are attached when all of nx/ny/nz exist
/// and every vertex has a nonzero one; zero-length normal vectors anywhere
/// drop the channel entirely rather than inventing directions.
pub fn load_ply(path: &Path) -> Result<OrientedPointCloud> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    if first?.trim() != "ply" {
        return Err(parse_err(1, "missing ply magic"));
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut header_end = 0usize;
    for (idx, line) in &mut lines {
        let lineno = idx + 1;
        let line = line?;
        let mut words = line.split_whitespace();
        match words.next() {
            None | Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let kind = words.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(Error::PlyUnsupported(format!("format {kind}")));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = words
                    .next()
                    .ok_or_else(|| parse_err(lineno, "element without a name"))?;
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| parse_err(lineno, "element without a count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(lineno, "property before any element"))?;
                let ty = words
                    .next()
                    .ok_or_else(|| parse_err(lineno, "property without a type"))?;
                let is_list = ty == "list";
                let name = words
                    .last()
                    .ok_or_else(|| parse_err(lineno, "property without a name"))?;
                el.properties.push((name.to_string(), is_list));
            }
            Some("end_header") => {
                header_end = lineno;
                break;
            }
            Some(other) => {
                return Err(parse_err(lineno, format!("unknown header keyword {other}")));
            }
        }
    }
    if header_end == 0 {
        return Err(parse_err(1, "header never ends"));
    }
    if !saw_format {
        return Err(parse_err(header_end, "header has no format line"));
    }

    let mut points = Vec::new();
    let mut raw_normals: Vec<Vec3> = Vec::new();
    for el in &elements {
        if el.name != "vertex" {
            // Skip this element's data lines without interpreting them.
            for _ in 0..el.count {
                let (idx, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(header_end, format!("missing {} data", el.name)))?;
                let _ = line.map_err(|e| parse_err(idx + 1, e.to_string()))?;
            }
            continue;
        }
        if el.properties.iter().any(|(_, is_list)| *is_list) {
            return Err(Error::PlyUnsupported("list property on vertex".into()));
        }
        let col = |name: &str| el.properties.iter().position(|(n, _)| n == name);
        let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::PlyUnsupported("vertex without x y z".into())),
        };
        let normal_cols = match (col("nx"), col("ny"), col("nz")) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            _ => None,
        };
        points.reserve(el.count);
        for _ in 0..el.count {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| parse_err(header_end, "fewer vertex lines than declared"))?;
            let lineno = idx + 1;
            let line = line?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|w| {
                    w.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("bad number {w}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != el.properties.len() {
                return Err(parse_err(
                    lineno,
                    format!(
                        "expected {} values, got {}",
                        el.properties.len(),
                        vals.len()
                    ),
                ));
            }
            points.push(Point3::new(vals[xi], vals[yi], vals[zi]));
            if let Some((a, b, c)) = normal_cols {
                raw_normals.push(Vec3::new(vals[a], vals[b], vals[c]));
            }
        }
    }

    if raw_normals.len() == points.len() && !points.is_empty() {
        let mut normals = Vec::with_capacity(raw_normals.len());
        for n in &raw_normals {
            if n.norm() < 1e-12 {
                return Ok(OrientedPointCloud::new(points));
            }
            normals.push(UnitVec3::new_normalize(*n));
        }
        return OrientedPointCloud::with_normals(points, normals);
    }
    Ok(OrientedPointCloud::new(points))
}

/// Writes an ASCII PLY file with double precision coordinates and, when the
/// cloud has them, normals.
pub fn save_ply(path: &Path, cloud: &OrientedPointCloud) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if cloud.normals.is_some() {
        writeln!(w, "property double nx")?;
        writeln!(w, "property double ny")?;
        writeln!(w, "property double nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.normals {
            Some(ns) => {
                let n = ns[i];
                writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    p.x, p.y, p.z, n.x, n.y, n.z
                )?;
            }
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn round_trip_with_normals_is_exact() {
        let cloud = OrientedPointCloud::with_normals(
            vec![
                Point3::new(0.125, -3.5, 2.0),
                Point3::new(1e-7, 0.0, 9.25),
            ],
            vec![
                UnitVec3::new_normalize(Vec3::new(1.0, 1.0, 0.0)),
                UnitVec3::new_normalize(Vec3::new(0.0, 0.0, -1.0)),
            ],
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_ply(f.path(), &cloud).unwrap();
        let back = load_ply(f.path()).unwrap();
        assert_eq!(back.points, cloud.points);
        let (a, b) = (back.normals.unwrap(), cloud.normals.unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.into_inner() - y.into_inner()).norm() < 1e-15);
        }
    }

    #[test]
    fn round_trip_without_normals() {
        let cloud = OrientedPointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_ply(f.path(), &cloud).unwrap();
        let back = load_ply(f.path()).unwrap();
        assert_eq!(back.points, cloud.points);
        assert!(back.normals.is_none());
    }

    #[test]
    fn extra_properties_and_faces_are_skipped() {
        let f = write_tmp(
            "ply\nformat ascii 1.0\ncomment colored scan\n\
             element vertex 2\n\
             property float x\nproperty float y\nproperty float z\n\
             property uchar red\n\
             element face 1\nproperty list uchar int vertex_indices\n\
             end_header\n\
             1 2 3 255\n4 5 6 0\n3 0 1 0\n",
        );
        let cloud = load_ply(f.path()).unwrap();
        assert_eq!(cloud.points.len(), 2);
        assert_eq!(cloud.points[1], Point3::new(4.0, 5.0, 6.0));
        assert!(cloud.normals.is_none());
    }

    #[test]
    fn binary_format_is_unsupported_not_misread() {
        let f = write_tmp(
            "ply\nformat binary_little_endian 1.0\nelement vertex 1\n\
             property float x\nproperty float y\nproperty float z\nend_header\n",
        );
        assert!(matches!(
            load_ply(f.path()),
            Err(Error::PlyUnsupported(_))
        ));
    }

    #[test]
    fn truncated_vertex_data_reports_parse_error() {
        let f = write_tmp(
            "ply\nformat ascii 1.0\nelement vertex 3\n\
             property float x\nproperty float y\nproperty float z\nend_header\n\
             1 2 3\n",
        );
        assert!(matches!(load_ply(f.path()), Err(Error::PlyParse { .. })));
    }

    #[test]
    fn bad_number_reports_its_line() {
        let f = write_tmp(
            "ply\nformat ascii 1.0\nelement vertex 1\n\
             property float x\nproperty float y\nproperty float z\nend_header\n\
             1 oops 3\n",
        );
        match load_ply(f.path()) {
            Err(Error::PlyParse { line, .. }) => assert_eq!(line, 8),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn zero_normal_drops_the_channel() {
        let f = write_tmp(
            "ply\nformat ascii 1.0\nelement vertex 2\n\
             property float x\nproperty float y\nproperty float z\n\
             property float nx\nproperty float ny\nproperty float nz\n\
             end_header\n\
             1 2 3 0 0 1\n4 5 6 0 0 0\n",
        );
        let cloud = load_ply(f.path()).unwrap();
        assert_eq!(cloud.points.len(), 2);
        assert!(cloud.normals.is_none());
    }
}
