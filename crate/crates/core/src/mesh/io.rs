use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{MeshError, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Off,
    Ply,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(Self::Off),
            "ply" => Some(Self::Ply),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }
}

impl FromStr for MeshFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "ply" => Ok(Self::Ply),
            "obj" => Ok(Self::Obj),
            other => Err(format!("unknown mesh format `{other}`")),
        }
    }
}

/// Reads and cleans a mesh. The id is the file stem.
pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string();
    parse_mesh(&bytes, format, id)
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat, id: impl Into<String>) -> Result<TriangleMesh, MeshError> {
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(text(bytes)?)?,
        MeshFormat::Obj => parse_obj(text(bytes)?)?,
        MeshFormat::Ply => parse_ply(bytes)?,
    };
    TriangleMesh::new(id, vertices, faces)
}

/// Writes an ASCII OFF file. Coordinates use the shortest round-trip
/// representation so a write/read cycle is lossless.
pub fn write_off(mesh: &TriangleMesh, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", mesh.vertex_count(), mesh.face_count())?;
    for p in mesh.vertices() {
        writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

type RawMesh = (Vec<Point3<f64>>, Vec<[usize; 3]>);

fn text(bytes: &[u8]) -> Result<&str, MeshError> {
    std::str::from_utf8(bytes).map_err(|e| parse_err(0, format!("invalid utf-8: {e}")))
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, message: message.into() }
}

fn fan(poly: &[usize], faces: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
}

fn number<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} `{tok}`")))
}

fn parse_off(src: &str) -> Result<RawMesh, MeshError> {
    // (line number, tokens) with comments and blank lines removed
    let mut lines = src
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (ln, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let rest = first
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(ln, "missing OFF header"))?
        .trim();
    let (ln, counts) = if rest.is_empty() {
        lines.next().ok_or_else(|| parse_err(ln, "missing counts line"))?
    } else {
        (ln, rest)
    };
    let mut it = counts.split_whitespace();
    let nv: usize = number(it.next(), ln, "vertex count")?;
    let nf: usize = number(it.next(), ln, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(ln, "unexpected end of vertex list"))?;
        let mut it = l.split_whitespace();
        let x = number(it.next(), ln, "x")?;
        let y = number(it.next(), ln, "y")?;
        let z = number(it.next(), ln, "z")?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(ln, "unexpected end of face list"))?;
        let mut it = l.split_whitespace();
        let n: usize = number(it.next(), ln, "polygon size")?;
        let poly = (0..n)
            .map(|_| number::<usize>(it.next(), ln, "vertex index"))
            .collect::<Result<Vec<_>, _>>()?;
        if n < 3 {
            return Err(parse_err(ln, "polygon with fewer than 3 vertices"));
        }
        fan(&poly, &mut faces);
    }
    Ok((vertices, faces))
}

fn parse_obj(src: &str) -> Result<RawMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let x = number(it.next(), ln, "x")?;
                let y = number(it.next(), ln, "y")?;
                let z = number(it.next(), ln, "z")?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| parse_err(ln, format!("bad face index `{tok}`")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(parse_err(ln, "face index 0 is invalid in OBJ"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(ln, format!("relative index `{tok}` before first vertex")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(parse_err(ln, "polygon with fewer than 3 vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
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
    fn parse(name: &str, line: usize) -> Result<Self, MeshError> {
        Ok(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(parse_err(line, format!("unknown PLY type `{other}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Pulls values for one element record out of either ASCII tokens or a
/// little-endian byte stream.
trait PlySource {
    fn next(&mut self, ty: Scalar) -> Result<f64, MeshError>;
}

struct AsciiSource<'a> {
    tokens: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl PlySource for AsciiSource<'_> {
    fn next(&mut self, _ty: Scalar) -> Result<f64, MeshError> {
        let (ln, tok) = self.tokens.next().ok_or_else(|| parse_err(0, "unexpected end of PLY body"))?;
        tok.parse().map_err(|_| parse_err(ln, format!("bad number `{tok}`")))
    }
}

struct BinarySource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PlySource for BinarySource<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        let end = self.pos + ty.size();
        if end > self.bytes.len() {
            return Err(parse_err(0, "unexpected end of binary PLY body"));
        }
        let v = ty.read_le(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(v)
    }
}

fn parse_ply(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let marker = b"end_header";
    let header_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(1, "missing end_header"))?;
    let mut body_start = header_end + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = text(&bytes[..header_end])?;

    let mut lines = header.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(1, "missing ply magic")),
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines = 1;
    for (ln, line) in lines {
        header_lines = ln;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                binary = Some(match toks.get(1).copied() {
                    Some("ascii") => false,
                    Some("binary_little_endian") => true,
                    Some(other) => return Err(parse_err(ln, format!("unsupported PLY format `{other}`"))),
                    None => return Err(parse_err(ln, "missing PLY format")),
                });
            }
            Some("element") => {
                let name = toks.get(1).ok_or_else(|| parse_err(ln, "element without name"))?.to_string();
                let count = number(toks.get(2).copied(), ln, "element count")?;
                elements.push(Element { name, count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| parse_err(ln, "property before element"))?;
                if toks.get(1) == Some(&"list") {
                    if toks.len() < 5 {
                        return Err(parse_err(ln, "malformed list property"));
                    }
                    el.props.push(Property::List {
                        count: Scalar::parse(toks[2], ln)?,
                        item: Scalar::parse(toks[3], ln)?,
                        name: toks[4].to_string(),
                    });
                } else {
                    if toks.len() < 3 {
                        return Err(parse_err(ln, "malformed property"));
                    }
                    el.props.push(Property::Scalar { ty: Scalar::parse(toks[1], ln)?, name: toks[2].to_string() });
                }
            }
            _ => {}
        }
    }
    let binary = binary.ok_or_else(|| parse_err(header_lines, "missing format line"))?;

    let body = &bytes[body_start..];
    let mut ascii;
    let mut bin;
    let source: &mut dyn PlySource = if binary {
        bin = BinarySource { bytes: body, pos: 0 };
        &mut bin
    } else {
        let body_text = text(body)?;
        let offset = header_lines + 1;
        let iter: Box<dyn Iterator<Item = (usize, &str)>> = Box::new(
            body_text
                .lines()
                .enumerate()
                .flat_map(move |(i, l)| l.split_whitespace().map(move |t| (i + offset, t))),
        );
        ascii = AsciiSource { tokens: iter.peekable() };
        &mut ascii
    };

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for prop in &el.props {
                match prop {
                    Property::Scalar { name, ty } => {
                        let v = source.next(*ty)?;
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            _ => {}
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = source.next(*count)? as usize;
                        let mut poly = Vec::with_capacity(n);
                        for _ in 0..n {
                            let v = source.next(*item)?;
                            if v < 0.0 {
                                return Err(parse_err(0, "negative face index"));
                            }
                            poly.push(v as usize);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if poly.len() < 3 {
                                return Err(parse_err(0, "polygon with fewer than 3 vertices"));
                            }
                            fan(&poly, &mut faces);
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    Ok((vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA_OFF: &str = "OFF\n# tetrahedron\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn tetrahedron_off() {
        let mesh = parse_mesh(TETRA_OFF.as_bytes(), MeshFormat::Off, "tet").unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.face_count(), 4);
    }

    #[test]
    fn off_counts_on_header_line_and_quads() {
        let src = "OFF 4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let mesh = parse_mesh(src.as_bytes(), MeshFormat::Off, "quad").unwrap();
        assert_eq!(mesh.face_count(), 2);
    }

    #[test]
    fn one_zero_area_face_among_ten_is_dropped() {
        // fan of 9 triangles around vertex 0 plus one collinear triangle
        let mut src = String::from("OFF\n12 10 0\n0 0 0\n");
        for i in 0..10 {
            let a = i as f64 * 0.3;
            src.push_str(&format!("{} {} 0\n", a.cos(), a.sin()));
        }
        src.push_str("0.5 0 0\n");
        for i in 1..10 {
            src.push_str(&format!("3 0 {} {}\n", i, i + 1));
        }
        // 0, (1,0,0) and (0.5,0,0) are collinear
        src.push_str("3 0 11 1\n");
        let mesh = parse_mesh(src.as_bytes(), MeshFormat::Off, "fan").unwrap();
        assert_eq!(mesh.face_count(), 9);
    }

    #[test]
    fn truncated_off_is_parse_error() {
        let src = "OFF\n4 4 0\n0 0 0\n1 0 0\n";
        let err = parse_mesh(src.as_bytes(), MeshFormat::Off, "bad").unwrap_err();
        assert!(matches!(err, MeshError::Parse { .. }));
    }

    #[test]
    fn obj_with_slashes_and_negative_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvn 0 0 1\nf 1/1/1 3//1 2\nf -4 -3 -1\nf 1 4 3\nf 2 3 4\n";
        let mesh = parse_mesh(src.as_bytes(), MeshFormat::Obj, "tet").unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.faces()[0], [0, 2, 1]);
        assert_eq!(mesh.faces()[1], [0, 1, 3]);
    }

    #[test]
    fn ascii_ply() {
        let src = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                   property uchar red\nelement face 4\nproperty list uchar int vertex_indices\nend_header\n\
                   0 0 0 255\n1 0 0 0\n0 1 0 0\n0 0 1 0\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
        let mesh = parse_mesh(src.as_bytes(), MeshFormat::Ply, "tet").unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.face_count(), 4);
        assert_eq!(mesh.vertices()[3], Point3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn binary_little_endian_ply() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 4\nproperty double x\nproperty double y\n\
property double z\nelement face 4\nproperty list uchar uint vertex_indices\nend_header\n"
            .to_vec();
        for v in [[0.0f64, 0., 0.], [1., 0., 0.], [0., 1., 0.], [0., 0., 1.]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        for f in [[0u32, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]] {
            bytes.push(3);
            for i in f {
                bytes.extend_from_slice(&i.to_le_bytes());
            }
        }
        let mesh = parse_mesh(&bytes, MeshFormat::Ply, "tet").unwrap();
        assert_eq!(mesh.face_count(), 4);
        assert_eq!(mesh.faces()[3], [1, 2, 3]);
    }

    #[test]
    fn off_write_read_is_lossless() {
        let src = "OFF\n4 4 0\n0.1 0.2 0.30000000000000004\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
        let mesh = parse_mesh(src.as_bytes(), MeshFormat::Off, "tet").unwrap();
        let mut out = Vec::new();
        write_off(&mesh, &mut out).unwrap();
        let again = parse_mesh(&out, MeshFormat::Off, "tet").unwrap();
        assert_eq!(mesh, again);
    }

    #[test]
    fn header_counts_match_independent_scan() {
        let mesh = parse_mesh(TETRA_OFF.as_bytes(), MeshFormat::Off, "tet").unwrap();
        let counts: Vec<usize> = TETRA_OFF
            .lines()
            .find(|l| l.split_whitespace().count() == 3 && !l.starts_with('#') && l.chars().all(|c| c.is_ascii_digit() || c == ' '))
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(mesh.vertex_count(), counts[0]);
        assert_eq!(mesh.face_count(), counts[1]);
    }
}
