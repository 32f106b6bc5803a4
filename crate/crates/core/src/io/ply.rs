//! PLY reading and writing (`ascii 1.0` and `binary_little_endian 1.0`).
//!
//! The `vertex` element must carry float or double `x`, `y`, `z`; uchar
//! `red/green/blue` (or `r/g/b`) become point colors. A `face` element with a
//! `vertex_indices` (or `vertex_index`) list turns the result into a mesh;
//! polygons are fan-triangulated. Other elements are parsed and ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, ParseError, Result};
use crate::geometry::{PointCloud, Rgb8, TriangleMesh, Vec3};

const FORMAT: &str = "ply";

#[derive(Debug, Clone, PartialEq)]
pub enum PlyGeometry {
    Cloud(PointCloud),
    Mesh(TriangleMesh),
}

impl PlyGeometry {
    pub fn into_cloud(self) -> PointCloud {
        match self {
            PlyGeometry::Cloud(c) => c,
            PlyGeometry::Mesh(m) => PointCloud {
                points: m.vertices,
                colors: None,
            },
        }
    }

    pub fn into_mesh(self) -> Option<TriangleMesh> {
        match self {
            PlyGeometry::Mesh(m) => Some(m),
            PlyGeometry::Cloud(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Self> {
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

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn is_integer(self) -> bool {
        !self.is_float()
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, ParseError> {
    let mut pos = 0;
    let mut lineno = 0;
    let mut next_line = |pos: &mut usize| -> Option<(usize, String)> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| *pos + e);
        let line = String::from_utf8_lossy(&bytes[*pos..end]).trim_end_matches('\r').to_string();
        *pos = (end + 1).min(bytes.len());
        lineno += 1;
        Some((lineno, line))
    };

    match next_line(&mut pos) {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(ParseError::at_line(FORMAT, 1, "missing 'ply' magic")),
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (line, text) = next_line(&mut pos).ok_or_else(|| ParseError::new(FORMAT, "header not terminated by end_header"))?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(ParseError::at_line(FORMAT, line, format!("unsupported version {version}")));
                }
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(ParseError::at_line(FORMAT, line, format!("unsupported format {other}")));
                    }
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse::<usize>()
                    .map_err(|_| ParseError::at_line(FORMAT, line, format!("invalid element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count_ty, item_ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| ParseError::at_line(FORMAT, line, "property before any element"))?;
                let count = Scalar::parse(count_ty)
                    .filter(|s| s.is_integer())
                    .ok_or_else(|| ParseError::at_line(FORMAT, line, format!("unknown list count type {count_ty}")))?;
                let item = Scalar::parse(item_ty)
                    .ok_or_else(|| ParseError::at_line(FORMAT, line, format!("unknown property type {item_ty}")))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::List { count, item },
                });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| ParseError::at_line(FORMAT, line, "property before any element"))?;
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| ParseError::at_line(FORMAT, line, format!("unknown property type {ty}")))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind: PropertyKind::Scalar(scalar),
                });
            }
            ["end_header"] => break,
            _ => return Err(ParseError::at_line(FORMAT, line, format!("unrecognized header line {text:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| ParseError::new(FORMAT, "missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: pos,
    })
}

/// Sequential value source over an ASCII or binary body.
trait ValueReader {
    fn read(&mut self, ty: Scalar) -> Result<f64, ParseError>;
}

struct AsciiReader<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl ValueReader for AsciiReader<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64, ParseError> {
        let tok = self
            .tokens
            .next()
            .ok_or_else(|| ParseError::new(FORMAT, "unexpected end of ASCII body"))?;
        if ty.is_float() {
            tok.parse::<f64>()
                .map_err(|_| ParseError::new(FORMAT, format!("invalid float {tok:?}")))
        } else {
            let v = tok
                .parse::<i64>()
                .map_err(|_| ParseError::new(FORMAT, format!("invalid integer {tok:?}")))?;
            let (lo, hi) = match ty {
                Scalar::I8 => (i8::MIN as i64, i8::MAX as i64),
                Scalar::U8 => (0, u8::MAX as i64),
                Scalar::I16 => (i16::MIN as i64, i16::MAX as i64),
                Scalar::U16 => (0, u16::MAX as i64),
                Scalar::I32 => (i32::MIN as i64, i32::MAX as i64),
                _ => (0, u32::MAX as i64),
            };
            if v < lo || v > hi {
                return Err(ParseError::new(FORMAT, format!("integer {v} out of range")));
            }
            Ok(v as f64)
        }
    }
}

struct BinaryReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BinaryReader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ParseError> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ParseError::new(FORMAT, "unexpected end of binary body"))?;
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(out)
    }
}

impl ValueReader for BinaryReader<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64, ParseError> {
        Ok(match ty {
            Scalar::I8 => i8::from_le_bytes(self.take()?) as f64,
            Scalar::U8 => u8::from_le_bytes(self.take()?) as f64,
            Scalar::I16 => i16::from_le_bytes(self.take()?) as f64,
            Scalar::U16 => u16::from_le_bytes(self.take()?) as f64,
            Scalar::I32 => i32::from_le_bytes(self.take()?) as f64,
            Scalar::U32 => u32::from_le_bytes(self.take()?) as f64,
            Scalar::F32 => f32::from_le_bytes(self.take()?) as f64,
            Scalar::F64 => f64::from_le_bytes(self.take()?),
        })
    }
}

/// Minimum number of body bytes an element instance can occupy; bounds
/// preallocation against lying counts.
fn min_instance_bytes(element: &Element, encoding: PlyEncoding) -> usize {
    match encoding {
        PlyEncoding::Ascii => 2 * element.properties.len().max(1),
        PlyEncoding::BinaryLittleEndian => element
            .properties
            .iter()
            .map(|p| match p.kind {
                PropertyKind::Scalar(s) => s.size(),
                PropertyKind::List { count, .. } => count.size(),
            })
            .sum::<usize>()
            .max(1),
    }
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyGeometry> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(read_ply_bytes(&bytes)?)
}

pub fn read_ply_bytes(bytes: &[u8]) -> Result<PlyGeometry, ParseError> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    match header.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| ParseError::new(FORMAT, "ASCII body is not UTF-8"))?;
            let mut reader = AsciiReader {
                tokens: text.split_ascii_whitespace(),
            };
            read_body(&header, body.len(), &mut reader)
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut reader = BinaryReader { bytes: body, pos: 0 };
            read_body(&header, body.len(), &mut reader)
        }
    }
}

fn read_body(header: &Header, body_len: usize, reader: &mut dyn ValueReader) -> Result<PlyGeometry, ParseError> {
    let mut vertices: Option<Vec<Vec3>> = None;
    let mut colors: Option<Vec<Rgb8>> = None;
    let mut faces: Option<Vec<[usize; 3]>> = None;

    for element in &header.elements {
        let capacity = element
            .count
            .min(body_len / min_instance_bytes(element, header.encoding) + 1);
        match element.name.as_str() {
            "vertex" => {
                let find = |name: &str| element.properties.iter().position(|p| p.name == name);
                let mut coord = [0usize; 3];
                for (slot, name) in coord.iter_mut().zip(["x", "y", "z"]) {
                    let idx = find(name)
                        .ok_or_else(|| ParseError::new(FORMAT, format!("vertex element lacks property {name}")))?;
                    match element.properties[idx].kind {
                        PropertyKind::Scalar(s) if s.is_float() => *slot = idx,
                        _ => {
                            return Err(ParseError::new(
                                FORMAT,
                                format!("vertex property {name} must be float or double"),
                            ));
                        }
                    }
                }
                let color_idx = [["red", "r"], ["green", "g"], ["blue", "b"]]
                    .iter()
                    .map(|alts| {
                        alts.iter()
                            .find_map(|n| find(n))
                            .filter(|&i| matches!(element.properties[i].kind, PropertyKind::Scalar(Scalar::U8)))
                    })
                    .collect::<Option<Vec<usize>>>();
                let mut verts = Vec::with_capacity(capacity);
                let mut cols = color_idx.as_ref().map(|_| Vec::with_capacity(capacity));
                let mut row = vec![0.0; element.properties.len()];
                for _ in 0..element.count {
                    read_instance(element, reader, &mut row)?;
                    let v = Vec3::new(row[coord[0]], row[coord[1]], row[coord[2]]);
                    if !v.iter().all(|c| c.is_finite()) {
                        return Err(ParseError::new(FORMAT, format!("non-finite vertex {}", verts.len())));
                    }
                    verts.push(v);
                    if let (Some(cols), Some(ci)) = (cols.as_mut(), color_idx.as_ref()) {
                        cols.push([row[ci[0]] as u8, row[ci[1]] as u8, row[ci[2]] as u8]);
                    }
                }
                vertices = Some(verts);
                colors = cols;
            }
            "face" => {
                let list_idx = element
                    .properties
                    .iter()
                    .position(|p| {
                        (p.name == "vertex_indices" || p.name == "vertex_index")
                            && matches!(p.kind, PropertyKind::List { item, .. } if item.is_integer())
                    })
                    .ok_or_else(|| ParseError::new(FORMAT, "face element lacks an integer vertex_indices list"))?;
                let mut tris = Vec::with_capacity(capacity);
                for f in 0..element.count {
                    for (pi, prop) in element.properties.iter().enumerate() {
                        match prop.kind {
                            PropertyKind::Scalar(s) => {
                                reader.read(s)?;
                            }
                            PropertyKind::List { count, item } => {
                                let n = reader.read(count)?;
                                if n < 0.0 {
                                    return Err(ParseError::new(FORMAT, "negative list length"));
                                }
                                let n = n as usize;
                                if pi == list_idx {
                                    if n < 3 {
                                        return Err(ParseError::new(FORMAT, format!("face {f} has {n} vertices")));
                                    }
                                    let mut poly = Vec::with_capacity(n.min(64));
                                    for _ in 0..n {
                                        let v = reader.read(item)?;
                                        if v < 0.0 {
                                            return Err(ParseError::new(FORMAT, format!("face {f} has negative index")));
                                        }
                                        poly.push(v as usize);
                                    }
                                    for k in 1..n - 1 {
                                        tris.push([poly[0], poly[k], poly[k + 1]]);
                                    }
                                } else {
                                    for _ in 0..n {
                                        reader.read(item)?;
                                    }
                                }
                            }
                        }
                    }
                }
                faces = Some(tris);
            }
            _ if element.properties.is_empty() => {}
            _ => {
                let mut row = vec![0.0; element.properties.len()];
                for _ in 0..element.count {
                    read_instance(element, reader, &mut row)?;
                }
            }
        }
    }

    let vertices = vertices.ok_or_else(|| ParseError::new(FORMAT, "no vertex element"))?;
    match faces {
        Some(triangles) => {
            if let Some(bad) = triangles.iter().flatten().find(|&&i| i >= vertices.len()) {
                return Err(ParseError::new(
                    FORMAT,
                    format!("face index {bad} out of range for {} vertices", vertices.len()),
                ));
            }
            Ok(PlyGeometry::Mesh(TriangleMesh { vertices, triangles }))
        }
        None => Ok(PlyGeometry::Cloud(PointCloud {
            points: vertices,
            colors,
        })),
    }
}

/// Reads one element instance; list properties are consumed and recorded as their length.
fn read_instance(element: &Element, reader: &mut dyn ValueReader, row: &mut [f64]) -> Result<(), ParseError> {
    for (slot, prop) in row.iter_mut().zip(&element.properties) {
        match prop.kind {
            PropertyKind::Scalar(s) => *slot = reader.read(s)?,
            PropertyKind::List { count, item } => {
                let n = reader.read(count)?;
                if n < 0.0 {
                    return Err(ParseError::new(FORMAT, "negative list length"));
                }
                for _ in 0..n as usize {
                    reader.read(item)?;
                }
                *slot = n;
            }
        }
    }
    Ok(())
}

fn write_header(out: &mut Vec<u8>, encoding: PlyEncoding, n_vertices: usize, colors: bool, n_faces: Option<usize>) {
    let mut h = String::from("ply\n");
    h.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(h, "element vertex {n_vertices}");
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors {
        h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if let Some(n) = n_faces {
        let _ = writeln!(h, "element face {n}");
        h.push_str("property list uchar uint vertex_indices\n");
    }
    h.push_str("end_header\n");
    out.extend_from_slice(h.as_bytes());
}

fn write_vertex(out: &mut Vec<u8>, encoding: PlyEncoding, v: &Vec3, color: Option<&Rgb8>) {
    match encoding {
        PlyEncoding::Ascii => {
            let mut line = format!("{} {} {}", v.x, v.y, v.z);
            if let Some(c) = color {
                let _ = write!(line, " {} {} {}", c[0], c[1], c[2]);
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for c in v.iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
            if let Some(c) = color {
                out.extend_from_slice(c);
            }
        }
    }
}

pub fn ply_bytes_for_cloud(cloud: &PointCloud, encoding: PlyEncoding) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, encoding, cloud.len(), cloud.colors.is_some(), None);
    for (i, p) in cloud.points.iter().enumerate() {
        write_vertex(&mut out, encoding, p, cloud.colors.as_ref().map(|c| &c[i]));
    }
    out
}

pub fn ply_bytes_for_mesh(mesh: &TriangleMesh, encoding: PlyEncoding) -> Vec<u8> {
    let mut out = Vec::new();
    write_header(&mut out, encoding, mesh.vertices.len(), false, Some(mesh.triangles.len()));
    for v in &mesh.vertices {
        write_vertex(&mut out, encoding, v, None);
    }
    for t in &mesh.triangles {
        match encoding {
            PlyEncoding::Ascii => {
                out.extend_from_slice(format!("3 {} {} {}\n", t[0], t[1], t[2]).as_bytes());
            }
            PlyEncoding::BinaryLittleEndian => {
                out.push(3);
                for &i in t {
                    out.extend_from_slice(&(i as u32).to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_ply_cloud(cloud: &PointCloud, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ply_bytes_for_cloud(cloud, encoding)).map_err(|e| Error::io(path, e))
}

pub fn write_ply_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ply_bytes_for_mesh(mesh, encoding)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_mesh() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let mesh = read_ply_bytes(text.as_bytes()).unwrap().into_mesh().unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn ascii_cloud_with_colors() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 0 255 0 0\n1 2 3 0 128 255\n";
        match read_ply_bytes(text.as_bytes()).unwrap() {
            PlyGeometry::Cloud(c) => {
                assert_eq!(c.len(), 2);
                assert_eq!(c.colors.unwrap()[1], [0, 128, 255]);
            }
            PlyGeometry::Mesh(_) => panic!("expected cloud"),
        }
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_index\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let mesh = read_ply_bytes(text.as_bytes()).unwrap().into_mesh().unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn index_out_of_range() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n";
        let err = read_ply_bytes(text.as_bytes()).unwrap_err();
        assert!(err.message.contains("out of range"));
    }

    #[test]
    fn unknown_type_rejected() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float128 x\nend_header\n0\n";
        assert!(read_ply_bytes(text.as_bytes()).unwrap_err().message.contains("float128"));
        let int_coords = "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\nproperty int z\nend_header\n0 0 0\n";
        assert!(read_ply_bytes(int_coords.as_bytes()).is_err());
    }

    #[test]
    fn binary_round_trip_mesh() {
        let mesh = TriangleMesh::new(
            vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.5, 2.0, 1e-9), Vec3::new(3.0, 4.0, 5.0)],
            vec![[0, 1, 2], [2, 1, 0]],
        )
        .unwrap();
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let bytes = ply_bytes_for_mesh(&mesh, enc);
            assert_eq!(read_ply_bytes(&bytes).unwrap(), PlyGeometry::Mesh(mesh.clone()));
        }
    }

    #[test]
    fn lying_count_does_not_allocate() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 18446744073709551615\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        assert!(read_ply_bytes(text.as_bytes()).is_err());
    }
}
