use std::fs;
use std::io::Write;
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::{Point3, Vector3};

/// On-disk point cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    XyzAscii,
    PlyAscii,
    PlyBinaryLe,
}

impl PointFormat {
    /// Guesses the format from the extension; `.ply` files are sniffed for the body encoding.
    pub fn detect(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "xyz" | "txt" | "pts" => Ok(PointFormat::XyzAscii),
            "ply" => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                let head = String::from_utf8_lossy(&bytes[..bytes.len().min(512)]).into_owned();
                if head.contains("format ascii") {
                    Ok(PointFormat::PlyAscii)
                } else if head.contains("format binary_little_endian") {
                    Ok(PointFormat::PlyBinaryLe)
                } else {
                    Err(Error::UnsupportedFormat(format!("{}: unknown ply encoding", path.display())))
                }
            }
            other => Err(Error::UnsupportedFormat(format!("extension '{other}'"))),
        }
    }
}

pub fn load_point_cloud(path: &Path, format: PointFormat) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        PointFormat::XyzAscii => parse_xyz(&String::from_utf8_lossy(&bytes)),
        PointFormat::PlyAscii | PointFormat::PlyBinaryLe => parse_ply(&bytes),
    }
}

/// Whitespace-separated `x y z` per line. An optional fourth integer column is read
/// as the instance id; blank lines and `#` comments are skipped.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut ids = Vec::new();
    let mut all_have_ids = true;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 3 {
            return Err(Error::parse(format!("line {}", ln + 1), "expected at least 3 columns"));
        }
        let mut xyz = [0.0; 3];
        for (k, c) in cols[..3].iter().enumerate() {
            xyz[k] = c
                .parse::<f64>()
                .map_err(|_| Error::parse(format!("line {}", ln + 1), format!("bad number '{c}'")))?;
            if !xyz[k].is_finite() {
                return Err(Error::parse(format!("line {}", ln + 1), "non-finite coordinate"));
            }
        }
        points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
        match cols.get(3).and_then(|c| c.parse::<i64>().ok()) {
            Some(id) => ids.push(id),
            None => all_have_ids = false,
        }
    }
    let instance_ids = (all_have_ids && !points.is_empty()).then_some(ids);
    Ok(PointCloud { points, normals: None, instance_ids })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PlyType::I8 => b[0] as i8 as f64,
            PlyType::U8 => b[0] as f64,
            PlyType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PlyType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct PlyHeader {
    binary: bool,
    vertex_count: usize,
    props: Vec<(String, PlyType)>,
    body_offset: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<PlyHeader> {
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(format!("byte {offset}"), "unterminated ply header"))?;
        let line = String::from_utf8_lossy(&rest[..nl]).trim_end_matches('\r').to_string();
        offset += nl + 1;
        let done = line.trim() == "end_header";
        lines.push((offset, line));
        if done {
            break;
        }
    }
    if lines.first().map(|l| l.1.trim()) != Some("ply") {
        return Err(Error::parse("byte 0", "missing 'ply' magic"));
    }
    let mut binary = false;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut seen_other_element_before_vertex = false;
    let mut props = Vec::new();
    for (off, line) in &lines[1..] {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => binary = false,
            ["format", "binary_little_endian", _] => binary = true,
            ["format", other, _] => return Err(Error::UnsupportedFormat(format!("ply format {other}"))),
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse::<usize>()
                        .map_err(|_| Error::parse(format!("byte {off}"), "bad vertex count"))?,
                );
                in_vertex = true;
            }
            ["element", ..] => {
                if vertex_count.is_none() {
                    seen_other_element_before_vertex = true;
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::UnsupportedFormat("list property on vertex element".into()))
            }
            ["property", ty, name] if in_vertex => {
                let t = PlyType::parse(ty)
                    .ok_or_else(|| Error::parse(format!("byte {off}"), format!("unknown property type '{ty}'")))?;
                props.push((name.to_string(), t));
            }
            _ => {}
        }
    }
    if seen_other_element_before_vertex {
        return Err(Error::UnsupportedFormat("vertex element must come first".into()));
    }
    let vertex_count = vertex_count.ok_or_else(|| Error::parse("header", "no vertex element"))?;
    Ok(PlyHeader { binary, vertex_count, props, body_offset: offset })
}

fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let h = parse_ply_header(bytes)?;
    let find = |names: &[&str]| h.props.iter().position(|(n, _)| names.contains(&n.as_str()));
    let (ix, iy, iz) = match (find(&["x"]), find(&["y"]), find(&["z"])) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::parse("header", "vertex element lacks x/y/z")),
    };
    let normal_idx = match (find(&["nx"]), find(&["ny"]), find(&["nz"])) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let id_idx = find(&["instance", "instance_id", "label"]);

    let n = h.vertex_count;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    if h.binary {
        let stride: usize = h.props.iter().map(|p| p.1.size()).sum();
        let body = &bytes[h.body_offset..];
        if body.len() < stride * n {
            return Err(Error::parse(
                format!("byte {}", h.body_offset + body.len()),
                format!("body holds {} bytes, header promises {}", body.len(), stride * n),
            ));
        }
        for i in 0..n {
            let mut off = i * stride;
            let mut row = Vec::with_capacity(h.props.len());
            for (_, t) in &h.props {
                row.push(t.read_le(&body[off..off + t.size()]));
                off += t.size();
            }
            rows.push(row);
        }
    } else {
        let text = String::from_utf8_lossy(&bytes[h.body_offset..]);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(format!("vertex {i}"), "fewer vertex rows than declared"))?;
            let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|_| Error::parse(format!("vertex {i}"), "bad number"))?;
            if row.len() < h.props.len() {
                return Err(Error::parse(format!("vertex {i}"), "too few columns"));
            }
            rows.push(row);
        }
    }
    let mut cloud = PointCloud::default();
    for (i, r) in rows.iter().enumerate() {
        let p = Point3::new(r[ix], r[iy], r[iz]);
        if !p.is_finite() {
            return Err(Error::parse(format!("vertex {i}"), "non-finite coordinate"));
        }
        cloud.points.push(p);
    }
    if let Some((a, b, c)) = normal_idx {
        cloud.normals = Some(rows.iter().map(|r| Vector3::new(r[a], r[b], r[c])).collect());
    }
    if let Some(k) = id_idx {
        cloud.instance_ids = Some(rows.iter().map(|r| r[k] as i64).collect());
    }
    Ok(cloud)
}

/// Serializes a cloud as PLY. Coordinates and normals are written as doubles so
/// binary files round-trip bit-exactly.
pub fn write_ply<W: Write>(cloud: &PointCloud, mut w: W, binary: bool) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format {} 1.0", if binary { "binary_little_endian" } else { "ascii" })?;
    writeln!(w, "element vertex {}", cloud.points.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property double {p}")?;
    }
    if cloud.normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property double {p}")?;
        }
    }
    if cloud.instance_ids.is_some() {
        writeln!(w, "property int instance")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.points.len() {
        let p = cloud.points[i];
        let mut vals = vec![p.x, p.y, p.z];
        if let Some(ns) = &cloud.normals {
            vals.extend([ns[i].x, ns[i].y, ns[i].z]);
        }
        let id = cloud.instance_ids.as_ref().map(|ids| ids[i] as i32);
        if binary {
            for v in vals {
                w.write_all(&v.to_le_bytes())?;
            }
            if let Some(id) = id {
                w.write_all(&id.to_le_bytes())?;
            }
        } else {
            let mut s: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
            if let Some(id) = id {
                s.push(id.to_string());
            }
            writeln!(w, "{}", s.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, path: &Path, binary: bool) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_ply(cloud, &mut w, binary).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_xyz() {
        let c = parse_xyz("0 0 0\n1 0 0\n0 1 0\n").unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.instance_ids.is_none());
    }

    #[test]
    fn xyz_reports_line() {
        let err = parse_xyz("0 0 0\n1 x 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn empty_ascii_ply() {
        let text = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        let c = parse_ply(text.as_bytes()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn ascii_ply_with_labels() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty int label\nend_header\n1 2 3 7\n4 5 6 8\n";
        let c = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(c.points[1], Point3::new(4.0, 5.0, 6.0));
        assert_eq!(c.instance_ids, Some(vec![7, 8]));
    }

    #[test]
    fn truncated_binary_body_is_an_error() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n".to_vec();
        bytes.extend_from_slice(&[0u8; 30]);
        assert!(matches!(parse_ply(&bytes), Err(Error::Parse { .. })));
    }
}
