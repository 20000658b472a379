//! PLY polygon-mesh reading and writing (ascii and binary).
//!
//! Recognized vertex properties: `x y z`, `nx ny nz`, `red green blue`,
//! `label`, `instance` and `sampled`. Anything else is skipped. Faces must be
//! triangles. An optional `edge` element (`vertex1 vertex2`) carries edges that
//! are not triangle sides.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Edge, Mesh, Vertex, VertexOrigin};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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

    fn decode(self, bytes: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr = bytes.try_into().expect("scalar width");
                (if big_endian {
                    <$t>::from_be_bytes(arr)
                } else {
                    <$t>::from_le_bytes(arr)
                }) as f64
            }};
        }
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => num!(i16),
            Scalar::U16 => num!(u16),
            Scalar::I32 => num!(i32),
            Scalar::U32 => num!(u32),
            Scalar::F32 => num!(f32),
            Scalar::F64 => num!(f64),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

impl Element {
    fn index_of(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name() == name)
    }
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    lines: usize,
}

fn header_error(line: usize, message: impl Into<String>) -> Error {
    Error::format_at_line(line, message)
}

fn read_header(reader: &mut impl BufRead) -> Result<(Header, usize)> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut bytes = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| header_error(lineno + 1, e.to_string()))?;
        if n == 0 {
            return Err(header_error(lineno, "unexpected end of header"));
        }
        bytes += n;
        lineno += 1;
        let mut tok = line.split_whitespace();
        let keyword = tok.next().unwrap_or("");
        if lineno == 1 {
            if keyword != "ply" {
                return Err(header_error(1, "missing `ply` magic"));
            }
            continue;
        }
        match keyword {
            "format" => {
                format = Some(match tok.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some("binary_big_endian") => PlyFormat::BinaryBigEndian,
                    other => return Err(header_error(lineno, format!("unknown format {other:?}"))),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = tok.next().ok_or_else(|| header_error(lineno, "element name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| header_error(lineno, "element count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_error(lineno, "property before element"))?;
                let ty = tok.next().ok_or_else(|| header_error(lineno, "property type"))?;
                let prop = if ty == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    let name = tok.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) => Property::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(header_error(lineno, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| header_error(lineno, format!("unknown type `{ty}`")))?;
                    let name = tok.next().ok_or_else(|| header_error(lineno, "property name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(header_error(lineno, format!("unknown header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| header_error(lineno, "missing format line"))?;
    Ok((
        Header {
            format,
            elements,
            lines: lineno,
        },
        bytes,
    ))
}

/// One decoded record: scalar values, and for list properties the list items.
#[derive(Default)]
struct Record {
    scalars: Vec<f64>,
    lists: Vec<Vec<f64>>,
}

trait RecordSource {
    fn next_record(&mut self, element: &Element, record: &mut Record) -> Result<()>;
}

struct AsciiSource<R> {
    reader: R,
    line: String,
    lineno: usize,
}

impl<R: BufRead> RecordSource for AsciiSource<R> {
    fn next_record(&mut self, element: &Element, record: &mut Record) -> Result<()> {
        loop {
            self.line.clear();
            self.lineno += 1;
            let n = self
                .reader
                .read_line(&mut self.line)
                .map_err(|e| Error::format_at_line(self.lineno, e.to_string()))?;
            if n == 0 {
                return Err(Error::format_at_line(
                    self.lineno,
                    format!("unexpected end of file in element `{}`", element.name),
                ));
            }
            if !self.line.trim().is_empty() {
                break;
            }
        }
        let lineno = self.lineno;
        let mut tokens = self.line.split_whitespace();
        let mut next = || -> Result<f64> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::format_at_line(lineno, "too few values"))?;
            tok.parse::<f64>()
                .map_err(|_| Error::format_at_line(lineno, format!("invalid number `{tok}`")))
        };
        record.scalars.clear();
        record.lists.clear();
        for prop in &element.properties {
            match prop {
                Property::Scalar { .. } => record.scalars.push(next()?),
                Property::List { .. } => {
                    let count = next()?;
                    if count < 0.0 || count.fract() != 0.0 {
                        return Err(Error::format_at_line(lineno, "invalid list length"));
                    }
                    let items = (0..count as usize).map(|_| next()).collect::<Result<_>>()?;
                    record.scalars.push(count);
                    record.lists.push(items);
                }
            }
        }
        if tokens.next().is_some() {
            return Err(Error::format_at_line(lineno, "too many values"));
        }
        Ok(())
    }
}

struct BinarySource<R> {
    reader: R,
    offset: usize,
    big_endian: bool,
    buf: [u8; 8],
}

impl<R: Read> BinarySource<R> {
    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        let size = ty.size();
        self.reader
            .read_exact(&mut self.buf[..size])
            .map_err(|e| Error::Format {
                location: format!("byte offset {}", self.offset),
                message: e.to_string(),
            })?;
        self.offset += size;
        Ok(ty.decode(&self.buf[..size], self.big_endian))
    }
}

impl<R: Read> RecordSource for BinarySource<R> {
    fn next_record(&mut self, element: &Element, record: &mut Record) -> Result<()> {
        record.scalars.clear();
        record.lists.clear();
        for prop in &element.properties {
            match *prop {
                Property::Scalar { ty, .. } => {
                    let v = self.scalar(ty)?;
                    record.scalars.push(v);
                }
                Property::List { count, item, .. } => {
                    let n = self.scalar(count)?;
                    let items = (0..n as usize)
                        .map(|_| self.scalar(item))
                        .collect::<Result<_>>()?;
                    record.scalars.push(n);
                    record.lists.push(items);
                }
            }
        }
        Ok(())
    }
}

impl<R> BinarySource<R> {
    fn location(&self) -> String {
        format!("byte offset {}", self.offset)
    }
}

impl<R> AsciiSource<R> {
    fn location(&self) -> String {
        format!("line {}", self.lineno)
    }
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_mesh_from(BufReader::new(file))
}

pub fn read_mesh_from(mut reader: impl BufRead) -> Result<Mesh> {
    let (header, header_bytes) = read_header(&mut reader)?;
    match header.format {
        PlyFormat::Ascii => {
            let mut src = AsciiSource {
                reader,
                line: String::new(),
                lineno: header.lines,
            };
            let mesh = decode_body(&header, &mut src, |s| s.location())?;
            Ok(mesh)
        }
        PlyFormat::BinaryLittleEndian | PlyFormat::BinaryBigEndian => {
            let mut src = BinarySource {
                reader,
                offset: header_bytes,
                big_endian: header.format == PlyFormat::BinaryBigEndian,
                buf: [0; 8],
            };
            decode_body(&header, &mut src, |s| s.location())
        }
    }
}

fn decode_body<S: RecordSource>(
    header: &Header,
    src: &mut S,
    location: impl Fn(&S) -> String,
) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut extra = Vec::new();
    let mut has_normals = false;
    let mut record = Record::default();

    for element in &header.elements {
        match element.name.as_str() {
            "vertex" => {
                let idx = |n: &str| element.index_of(n);
                let (x, y, z) = match (idx("x"), idx("y"), idx("z")) {
                    (Some(x), Some(y), Some(z)) => (x, y, z),
                    _ => {
                        return Err(Error::Format {
                            location: "header".into(),
                            message: "vertex element lacks x/y/z".into(),
                        })
                    }
                };
                let normal = match (idx("nx"), idx("ny"), idx("nz")) {
                    (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                    _ => None,
                };
                has_normals = normal.is_some();
                let color = match (idx("red"), idx("green"), idx("blue")) {
                    (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                    _ => None,
                };
                let color_scale = match color.map(|c| &element.properties[c[0]]) {
                    Some(Property::Scalar {
                        ty: Scalar::F32 | Scalar::F64,
                        ..
                    }) => 1.0,
                    _ => 255.0,
                };
                let label = idx("label");
                let instance = idx("instance");
                let sampled = idx("sampled");
                // list properties are not expected on vertices; indices map 1:1 onto scalars
                vertices.reserve(element.count);
                for _ in 0..element.count {
                    src.next_record(element, &mut record)?;
                    let s = &record.scalars;
                    let mut v = Vertex::at([s[x], s[y], s[z]]);
                    if let Some(n) = normal {
                        v.normal = [s[n[0]], s[n[1]], s[n[2]]];
                    }
                    if let Some(c) = color {
                        v.color = [
                            (s[c[0]] / color_scale) as f32,
                            (s[c[1]] / color_scale) as f32,
                            (s[c[2]] / color_scale) as f32,
                        ];
                    }
                    v.semantic_class = label.map(|i| s[i] as u32);
                    v.instance_id = instance.map(|i| s[i] as u32);
                    if sampled.is_some_and(|i| s[i] != 0.0) {
                        v.origin = VertexOrigin::Sampled;
                    }
                    vertices.push(v);
                }
            }
            "face" => {
                let list = element
                    .properties
                    .iter()
                    .filter(|p| matches!(p, Property::List { .. }))
                    .position(|p| matches!(p.name(), "vertex_indices" | "vertex_index"))
                    .ok_or_else(|| Error::Format {
                        location: "header".into(),
                        message: "face element lacks vertex_indices".into(),
                    })?;
                triangles.reserve(element.count);
                for _ in 0..element.count {
                    src.next_record(element, &mut record)?;
                    let items = &record.lists[list];
                    if items.len() != 3 {
                        return Err(Error::UnsupportedFace {
                            location: location(src),
                            vertices: items.len(),
                        });
                    }
                    triangles.push([items[0] as u32, items[1] as u32, items[2] as u32]);
                }
            }
            "edge" => {
                let (a, b) = match (element.index_of("vertex1"), element.index_of("vertex2")) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::Format {
                            location: "header".into(),
                            message: "edge element lacks vertex1/vertex2".into(),
                        })
                    }
                };
                for _ in 0..element.count {
                    src.next_record(element, &mut record)?;
                    if let Some(e) = Edge::new(record.scalars[a] as u32, record.scalars[b] as u32) {
                        extra.push(e);
                    }
                }
            }
            _ => {
                for _ in 0..element.count {
                    src.next_record(element, &mut record)?;
                }
            }
        }
    }

    let mut mesh = Mesh::new(vertices, triangles, &extra).map_err(|e| Error::Format {
        location: "body".into(),
        message: e.to_string(),
    })?;
    if !has_normals {
        mesh.compute_normals();
    }
    Ok(mesh)
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &Mesh, comments: &[String]) -> Result<()> {
    write_mesh_as(path, mesh, comments, PlyFormat::Ascii)
}

pub fn write_mesh_as(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    comments: &[String],
    format: PlyFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_mesh_to(&mut w, mesh, comments, format)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_mesh_to(
    w: &mut impl Write,
    mesh: &Mesh,
    comments: &[String],
    format: PlyFormat,
) -> std::io::Result<()> {
    let labels = mesh.has_labels();
    let any_sampled = mesh.vertices.iter().any(|v| v.origin == VertexOrigin::Sampled);
    let extra = mesh.extra_edges();

    writeln!(w, "ply")?;
    writeln!(
        w,
        "format {} 1.0",
        match format {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
            PlyFormat::BinaryBigEndian => "binary_big_endian",
        }
    )?;
    for c in comments {
        writeln!(w, "comment {c}")?;
    }
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property double {p}")?;
    }
    for p in ["nx", "ny", "nz"] {
        writeln!(w, "property float {p}")?;
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}")?;
    }
    if labels {
        writeln!(w, "property int label")?;
        writeln!(w, "property int instance")?;
    }
    if any_sampled {
        writeln!(w, "property uchar sampled")?;
    }
    writeln!(w, "element face {}", mesh.triangles.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    if !extra.is_empty() {
        writeln!(w, "element edge {}", extra.len())?;
        writeln!(w, "property int vertex1")?;
        writeln!(w, "property int vertex2")?;
    }
    writeln!(w, "end_header")?;

    let to_u8 = |c: f32| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
    let big = format == PlyFormat::BinaryBigEndian;
    macro_rules! put {
        ($v:expr) => {
            if big {
                w.write_all(&$v.to_be_bytes())?
            } else {
                w.write_all(&$v.to_le_bytes())?
            }
        };
    }

    for v in &mesh.vertices {
        let normal = v.normal.map(|c| c as f32);
        let color = v.color.map(to_u8);
        let label = v.semantic_class.unwrap_or(0) as i32;
        let instance = v.instance_id.unwrap_or(0) as i32;
        let sampled = (v.origin == VertexOrigin::Sampled) as u8;
        if format == PlyFormat::Ascii {
            let p = v.position;
            write!(
                w,
                "{} {} {} {} {} {} {} {} {}",
                p[0], p[1], p[2], normal[0], normal[1], normal[2], color[0], color[1], color[2]
            )?;
            if labels {
                write!(w, " {label} {instance}")?;
            }
            if any_sampled {
                write!(w, " {sampled}")?;
            }
            writeln!(w)?;
        } else {
            for c in v.position {
                put!(c);
            }
            for c in normal {
                put!(c);
            }
            w.write_all(&color)?;
            if labels {
                put!(label);
                put!(instance);
            }
            if any_sampled {
                w.write_all(&[sampled])?;
            }
        }
    }
    for t in &mesh.triangles {
        if format == PlyFormat::Ascii {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        } else {
            w.write_all(&[3u8])?;
            for &i in t {
                put!(i as i32);
            }
        }
    }
    for e in &extra {
        if format == PlyFormat::Ascii {
            writeln!(w, "{} {}", e.0, e.1)?;
        } else {
            put!(e.0 as i32);
            put!(e.1 as i32);
        }
    }
    Ok(())
}
