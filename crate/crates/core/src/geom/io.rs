//! Point cloud and mesh files.
//!
//! Clouds are written as ASCII PLY with `double x y z` and, when present, a
//! `capture_distance` property; every value is printed with 17 significant
//! digits so a write/read cycle is bit-exact. The reader also accepts
//! `binary_little_endian` PLY (as produced by laser-scanner exports) and any
//! numeric property type. Meshes are read from PLY or Wavefront OBJ.

use std::fmt::Write as _;
use std::path::Path;

use super::{Point3, PointCloud, TriangleMesh};
use crate::error::{Error, Result};

/// Formats a value with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply_cloud(&bytes, &path.display().to_string())
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cloud_to_ply(cloud)).map_err(|e| Error::io(path, e))
}

pub fn cloud_to_ply(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(64 * cloud.len() + 200);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.capture_distance().is_some() {
        out.push_str("property double capture_distance\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.iter().enumerate() {
        let _ = write!(
            out,
            "{} {} {}",
            format_f64(p.x),
            format_f64(p.y),
            format_f64(p.z)
        );
        if let Some(d) = cloud.capture_distance() {
            let _ = write!(out, " {}", format_f64(d[i]));
        }
        out.push('\n');
    }
    out
}

pub fn parse_ply_cloud(bytes: &[u8], source: &str) -> Result<PointCloud> {
    let ply = Ply::parse(bytes, source)?;
    let vertex = ply
        .element("vertex")
        .ok_or_else(|| Error::parse(source, "no `vertex` element"))?;
    let xyz = ["x", "y", "z"].map(|n| vertex.scalar_index(n));
    let [Some(x), Some(y), Some(z)] = xyz else {
        return Err(Error::parse(source, "vertex element lacks x/y/z properties"));
    };
    let cd = vertex.scalar_index("capture_distance");
    let mut points = Vec::with_capacity(vertex.rows.len());
    let mut distances = cd.map(|_| Vec::with_capacity(vertex.rows.len()));
    for row in &vertex.rows {
        points.push(Point3::new(row.scalars[x], row.scalars[y], row.scalars[z]));
        if let (Some(c), Some(d)) = (cd, distances.as_mut()) {
            d.push(row.scalars[c]);
        }
    }
    let cloud = match distances {
        Some(d) => PointCloud::with_capture_distance(points, d),
        None => PointCloud::from_points(points),
    };
    cloud.map_err(|e| Error::parse(source, e.to_string()))
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("obj") => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| Error::parse(&source, "OBJ file is not valid UTF-8"))?;
            parse_obj(text, &source)
        }
        Some("ply") => parse_ply_mesh(&bytes, &source),
        _ => Err(Error::parse(source, "mesh files must have a .ply or .obj extension")),
    }
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh_to_ply(mesh)).map_err(|e| Error::io(path, e))
}

pub fn mesh_to_ply(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", mesh.vertices().len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(out, "element face {}", mesh.triangles().len());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for p in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", format_f64(p.x), format_f64(p.y), format_f64(p.z));
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}

pub fn parse_ply_mesh(bytes: &[u8], source: &str) -> Result<TriangleMesh> {
    let ply = Ply::parse(bytes, source)?;
    let vertex = ply
        .element("vertex")
        .ok_or_else(|| Error::parse(source, "no `vertex` element"))?;
    let [Some(x), Some(y), Some(z)] = ["x", "y", "z"].map(|n| vertex.scalar_index(n)) else {
        return Err(Error::parse(source, "vertex element lacks x/y/z properties"));
    };
    let vertices: Vec<Point3> = vertex
        .rows
        .iter()
        .map(|r| Point3::new(r.scalars[x], r.scalars[y], r.scalars[z]))
        .collect();
    let mut triangles = Vec::new();
    if let Some(face) = ply.element("face") {
        let list = face
            .list_index("vertex_indices")
            .or_else(|| face.list_index("vertex_index"))
            .ok_or_else(|| Error::parse(source, "face element lacks vertex_indices"))?;
        for (n, row) in face.rows.iter().enumerate() {
            let idx = &row.lists[list];
            if idx.len() != 3 {
                return Err(Error::parse(
                    format!("{source} face {n}"),
                    format!("only triangles are supported, got {} vertices", idx.len()),
                ));
            }
            let mut tri = [0usize; 3];
            for (slot, &v) in tri.iter_mut().zip(idx) {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::parse(format!("{source} face {n}"), "bad vertex index"));
                }
                *slot = v as usize;
            }
            triangles.push(tri);
        }
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| Error::parse(source, e.to_string()))
}

/// Reads `v` and triangular `f` records. Texture/normal indices (`f 1/2/3`)
/// are ignored and negative indices count from the end.
pub fn parse_obj(text: &str, source: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let loc = || format!("{source}:{}", lineno + 1);
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(loc(), e.to_string()))?;
                if c.len() != 3 {
                    return Err(Error::parse(loc(), "vertex needs three coordinates"));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = parts.collect();
                if idx.len() != 3 {
                    return Err(Error::parse(
                        loc(),
                        format!("only triangles are supported, got {} vertices", idx.len()),
                    ));
                }
                let mut tri = [0usize; 3];
                for (slot, tok) in tri.iter_mut().zip(idx) {
                    let head = tok.split('/').next().unwrap_or(tok);
                    let i: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(loc(), format!("bad face index `{tok}`")))?;
                    let resolved = match i {
                        0 => return Err(Error::parse(loc(), "face indices are 1-based")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(Error::parse(loc(), "relative index out of range"));
                            }
                            vertices.len() - back
                        }
                    };
                    *slot = resolved;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| Error::parse(source, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Row {
    scalars: Vec<f64>,
    lists: Vec<Vec<f64>>,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
    rows: Vec<Row>,
}

impl Element {
    fn scalar_index(&self, name: &str) -> Option<usize> {
        self.properties
            .iter()
            .filter(|p| matches!(p, Property::Scalar(..)))
            .position(|p| matches!(p, Property::Scalar(n, _) if n == name))
    }

    fn list_index(&self, name: &str) -> Option<usize> {
        self.properties
            .iter()
            .filter(|p| matches!(p, Property::List(..)))
            .position(|p| matches!(p, Property::List(n, _, _) if n == name))
    }
}

#[derive(Debug, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct Ply {
    elements: Vec<Element>,
}

impl Ply {
    fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    fn parse(bytes: &[u8], source: &str) -> Result<Ply> {
        let (header, body_start) = split_header(bytes, source)?;
        let mut lines = header.lines().enumerate();
        match lines.next() {
            Some((_, "ply")) => {}
            _ => return Err(Error::parse(format!("{source}:1"), "missing `ply` magic")),
        }
        let mut format = None;
        let mut elements: Vec<Element> = Vec::new();
        for (n, line) in lines {
            let loc = || format!("{source}:{}", n + 1);
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                [] | ["comment", ..] | ["obj_info", ..] => {}
                ["format", "ascii", _] => format = Some(Format::Ascii),
                ["format", "binary_little_endian", _] => format = Some(Format::BinaryLe),
                ["format", other, _] => {
                    return Err(Error::parse(loc(), format!("unsupported PLY format `{other}`")))
                }
                ["element", name, count] => {
                    let count = count
                        .parse()
                        .map_err(|_| Error::parse(loc(), "bad element count"))?;
                    elements.push(Element {
                        name: name.to_string(),
                        count,
                        properties: Vec::new(),
                        rows: Vec::new(),
                    });
                }
                ["property", "list", ct, it, name] => {
                    let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                        return Err(Error::parse(loc(), "unknown list property type"));
                    };
                    elements
                        .last_mut()
                        .ok_or_else(|| Error::parse(loc(), "property before any element"))?
                        .properties
                        .push(Property::List(name.to_string(), ct, it));
                }
                ["property", ty, name] => {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| Error::parse(loc(), format!("unknown property type `{ty}`")))?;
                    elements
                        .last_mut()
                        .ok_or_else(|| Error::parse(loc(), "property before any element"))?
                        .properties
                        .push(Property::Scalar(name.to_string(), ty));
                }
                ["end_header"] => break,
                _ => return Err(Error::parse(loc(), format!("unrecognized header line `{line}`"))),
            }
        }
        let format = format.ok_or_else(|| Error::parse(source, "missing format line"))?;
        let body = &bytes[body_start..];
        match format {
            Format::Ascii => read_ascii_body(body, &mut elements, source)?,
            Format::BinaryLe => read_binary_body(body, &mut elements, source)?,
        }
        Ok(Ply { elements })
    }
}

fn split_header<'a>(bytes: &'a [u8], source: &str) -> Result<(&'a str, usize)> {
    let marker = b"end_header";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::parse(source, "missing end_header"))?;
    let mut end = pos + marker.len();
    if bytes.get(end) == Some(&b'\r') {
        end += 1;
    }
    if bytes.get(end) == Some(&b'\n') {
        end += 1;
    }
    let header = std::str::from_utf8(&bytes[..pos + marker.len()])
        .map_err(|_| Error::parse(source, "header is not valid UTF-8"))?;
    Ok((header, end))
}

fn read_ascii_body(body: &[u8], elements: &mut [Element], source: &str) -> Result<()> {
    let text = std::str::from_utf8(body).map_err(|_| Error::parse(source, "body is not UTF-8"))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for el in elements.iter_mut() {
        for r in 0..el.count {
            let (n, line) = lines.next().ok_or_else(|| {
                Error::parse(source, format!("element `{}` ends after {r} of {} rows", el.name, el.count))
            })?;
            let loc = || format!("{source} body line {} (element {} row {r})", n + 1, el.name);
            let mut tok = line.split_whitespace();
            let mut next = || -> Result<f64> {
                tok.next()
                    .ok_or_else(|| Error::parse(loc(), "too few values"))?
                    .parse::<f64>()
                    .map_err(|e| Error::parse(loc(), e.to_string()))
            };
            let mut row = Row {
                scalars: Vec::new(),
                lists: Vec::new(),
            };
            for prop in &el.properties {
                match prop {
                    Property::Scalar(..) => row.scalars.push(next()?),
                    Property::List(..) => {
                        let len = next()?;
                        if len < 0.0 || len.fract() != 0.0 {
                            return Err(Error::parse(loc(), "bad list length"));
                        }
                        let items = (0..len as usize).map(|_| next()).collect::<Result<_>>()?;
                        row.lists.push(items);
                    }
                }
            }
            el.rows.push(row);
        }
    }
    Ok(())
}

fn read_binary_body(body: &[u8], elements: &mut [Element], source: &str) -> Result<()> {
    let mut pos = 0usize;
    let mut take = |ty: Scalar, el: &str, r: usize| -> Result<f64> {
        let end = pos + ty.size();
        let slice = body.get(pos..end).ok_or_else(|| {
            Error::parse(format!("{source} byte {pos}"), format!("truncated in element `{el}` row {r}"))
        })?;
        pos = end;
        Ok(ty.read_le(slice))
    };
    for el in elements.iter_mut() {
        for r in 0..el.count {
            let mut row = Row {
                scalars: Vec::new(),
                lists: Vec::new(),
            };
            for prop in &el.properties {
                match *prop {
                    Property::Scalar(_, ty) => row.scalars.push(take(ty, &el.name, r)?),
                    Property::List(_, ct, it) => {
                        let len = take(ct, &el.name, r)? as usize;
                        let items = (0..len).map(|_| take(it, &el.name, r)).collect::<Result<_>>()?;
                        row.lists.push(items);
                    }
                }
            }
            el.rows.push(row);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_binary_little_endian() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment scanner export\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar intensity\nend_header\n".to_vec();
        for (p, i) in [([1.0f32, 2.0, 3.0], 7u8), ([-0.5, 0.25, 8.0], 9)] {
            for c in p {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.push(i);
        }
        let cloud = parse_ply_cloud(&bytes, "mem").unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], Point3::new(-0.5, 0.25, 8.0));
        assert!(cloud.capture_distance().is_none());
    }

    #[test]
    fn truncated_binary_is_reported() {
        let mut bytes =
            b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
                .to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        let err = parse_ply_cloud(&bytes, "mem").unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn ascii_errors_carry_location() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n4 five 6\n";
        let err = parse_ply_cloud(text.as_bytes(), "scan.ply").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scan.ply body line 2"), "{msg}");
    }

    #[test]
    fn mesh_round_trip_through_ply_and_obj() {
        let cube = TriangleMesh::cuboid(Point3::origin(), Point3::new(0.1, 0.2, 0.3), false);
        let ply = mesh_to_ply(&cube);
        assert_eq!(parse_ply_mesh(ply.as_bytes(), "mem").unwrap(), cube);
        let obj = "# cube-ish\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1/1/1 -3/2/2 4\n";
        let m = parse_obj(obj, "mem").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 1, 3]]);
        assert!(parse_obj("v 0 0 0\nf 1 2 3 4\n", "mem").is_err());
    }

    proptest! {
        #[test]
        fn ply_round_trip_is_bit_exact(
            pts in prop::collection::vec((any::<f64>(), any::<f64>(), any::<f64>(), 0.0..1e6f64), 0..50)
        ) {
            let pts: Vec<_> = pts.into_iter()
                .filter(|(x, y, z, _)| x.is_finite() && y.is_finite() && z.is_finite())
                .collect();
            let cloud = PointCloud::with_capture_distance(
                pts.iter().map(|&(x, y, z, _)| Point3::new(x, y, z)).collect(),
                pts.iter().map(|&(.., d)| d).collect(),
            ).unwrap();
            let text = cloud_to_ply(&cloud);
            let back = parse_ply_cloud(text.as_bytes(), "mem").unwrap();
            for (a, b) in cloud.iter().zip(back.iter()) {
                prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
                prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
                prop_assert_eq!(a.z.to_bits(), b.z.to_bits());
            }
            prop_assert_eq!(cloud.capture_distance(), back.capture_distance());
        }
    }
}
