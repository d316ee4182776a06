//! OBJ and binary little-endian PLY reading/writing.
//!
//! PLY positions, normals and extra per-vertex scalars (e.g. `contact`) are written as
//! float32; faces as `list uchar int vertex_indices`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GeomError, PointCloud, TriMesh, Vec3};

/// Contents of a PLY file: vertex data, optional triangle faces and named scalars.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub faces: Vec<[u32; 3]>,
    /// Extra per-vertex float properties keyed by name.
    pub scalars: BTreeMap<String, Vec<f64>>,
}

impl PlyData {
    pub fn from_mesh(mesh: &TriMesh) -> Self {
        Self {
            vertices: mesh.vertices().to_vec(),
            normals: None,
            faces: mesh.faces().to_vec(),
            scalars: BTreeMap::new(),
        }
    }

    pub fn from_point_cloud(cloud: &PointCloud) -> Self {
        Self {
            vertices: cloud.points.clone(),
            normals: Some(cloud.normals.clone()),
            faces: Vec::new(),
            scalars: BTreeMap::new(),
        }
    }

    pub fn with_scalar(mut self, name: &str, values: Vec<f64>) -> Self {
        self.scalars.insert(name.to_string(), values);
        self
    }

    pub fn to_mesh(&self) -> Result<TriMesh, GeomError> {
        TriMesh::new(self.vertices.clone(), self.faces.clone())
    }

    pub fn to_point_cloud(&self) -> Result<PointCloud, GeomError> {
        let normals = self.normals.clone().ok_or(GeomError::MissingNormals)?;
        PointCloud::new(self.vertices.clone(), normals)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn read(self, r: &mut impl Read) -> std::io::Result<f64> {
        macro_rules! rd {
            ($t:ty) => {{
                let mut b = [0u8; std::mem::size_of::<$t>()];
                r.read_exact(&mut b)?;
                <$t>::from_le_bytes(b) as f64
            }};
        }
        Ok(match self {
            Scalar::I8 => rd!(i8),
            Scalar::U8 => rd!(u8),
            Scalar::I16 => rd!(i16),
            Scalar::U16 => rd!(u16),
            Scalar::I32 => rd!(i32),
            Scalar::U32 => rd!(u32),
            Scalar::F32 => rd!(f32),
            Scalar::F64 => rd!(f64),
        })
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn parse_err(line: usize, message: impl Into<String>) -> GeomError {
    GeomError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_ply(reader: impl Read) -> Result<PlyData, GeomError> {
    let mut reader = BufReader::new(reader);
    let mut elements: Vec<Element> = Vec::new();
    let mut line_no = 0;
    let mut format_ok = false;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(parse_err(line_no, "unexpected end of header"));
        }
        line_no += 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(parse_err(1, "missing 'ply' magic")),
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, _] => {
                return Err(parse_err(line_no, format!("unsupported PLY format '{other}'")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before element"))?;
                let c = Scalar::parse(count_ty).ok_or_else(|| parse_err(line_no, "bad list count type"))?;
                let i = Scalar::parse(item_ty).ok_or_else(|| parse_err(line_no, "bad list item type"))?;
                el.properties.push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before element"))?;
                let t = Scalar::parse(ty).ok_or_else(|| parse_err(line_no, format!("bad type '{ty}'")))?;
                el.properties.push(Property::Scalar(name.to_string(), t));
            }
            ["end_header"] => break,
            _ => return Err(parse_err(line_no, format!("unrecognized header line '{}'", line.trim()))),
        }
    }
    if !format_ok {
        return Err(parse_err(line_no, "missing format line"));
    }

    let mut data = PlyData::default();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::Scalar(name, t) => columns
                                .entry(name.clone())
                                .or_default()
                                .push(t.read(&mut reader)?),
                            Property::List(_, c, t) => {
                                let n = c.read(&mut reader)? as usize;
                                for _ in 0..n {
                                    t.read(&mut reader)?;
                                }
                            }
                        }
                    }
                }
                let take = |cols: &mut BTreeMap<String, Vec<f64>>, k: &str| cols.remove(k);
                let (x, y, z) = (
                    take(&mut columns, "x"),
                    take(&mut columns, "y"),
                    take(&mut columns, "z"),
                );
                let (Some(x), Some(y), Some(z)) = (x, y, z) else {
                    return Err(parse_err(line_no, "vertex element lacks x/y/z"));
                };
                data.vertices = (0..el.count).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
                if let (Some(nx), Some(ny), Some(nz)) = (
                    take(&mut columns, "nx"),
                    take(&mut columns, "ny"),
                    take(&mut columns, "nz"),
                ) {
                    // float32 storage: renormalize so unit-length invariants hold in f64.
                    data.normals = Some(
                        (0..el.count)
                            .map(|i| {
                                Vec3::new(nx[i], ny[i], nz[i])
                                    .try_normalize(0.0)
                                    .unwrap_or_else(Vec3::z)
                            })
                            .collect(),
                    );
                }
                data.scalars = columns;
            }
            "face" => {
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::List(name, c, t)
                                if name == "vertex_indices" || name == "vertex_index" =>
                            {
                                let n = c.read(&mut reader)? as usize;
                                let mut idx = Vec::with_capacity(n);
                                for _ in 0..n {
                                    idx.push(t.read(&mut reader)? as u32);
                                }
                                for k in 1..n.saturating_sub(1) {
                                    data.faces.push([idx[0], idx[k], idx[k + 1]]);
                                }
                            }
                            Property::List(_, c, t) => {
                                let n = c.read(&mut reader)? as usize;
                                for _ in 0..n {
                                    t.read(&mut reader)?;
                                }
                            }
                            Property::Scalar(_, t) => {
                                t.read(&mut reader)?;
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.properties {
                        match p {
                            Property::Scalar(_, t) => {
                                t.read(&mut reader)?;
                            }
                            Property::List(_, c, t) => {
                                let n = c.read(&mut reader)? as usize;
                                for _ in 0..n {
                                    t.read(&mut reader)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(data)
}

pub fn write_ply(writer: impl Write, data: &PlyData) -> Result<(), GeomError> {
    let n = data.vertices.len();
    if let Some(normals) = &data.normals {
        if normals.len() != n {
            return Err(GeomError::LengthMismatch { what: "PLY normals", expected: n, actual: normals.len() });
        }
    }
    for (name, v) in &data.scalars {
        if v.len() != n {
            return Err(GeomError::LengthMismatch { what: "PLY scalar", expected: n, actual: v.len() });
        }
        if name.split_whitespace().count() != 1 {
            return Err(GeomError::InvalidPropertyName(name.clone()));
        }
    }
    let mut w = BufWriter::new(writer);
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {n}")?;
    for c in ["x", "y", "z"] {
        writeln!(w, "property float {c}")?;
    }
    if data.normals.is_some() {
        for c in ["nx", "ny", "nz"] {
            writeln!(w, "property float {c}")?;
        }
    }
    for name in data.scalars.keys() {
        writeln!(w, "property float {name}")?;
    }
    if !data.faces.is_empty() {
        writeln!(w, "element face {}", data.faces.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")?;
    let put = |w: &mut BufWriter<_>, v: f64| w.write_all(&(v as f32).to_le_bytes());
    for i in 0..n {
        let v = data.vertices[i];
        put(&mut w, v.x)?;
        put(&mut w, v.y)?;
        put(&mut w, v.z)?;
        if let Some(normals) = &data.normals {
            put(&mut w, normals[i].x)?;
            put(&mut w, normals[i].y)?;
            put(&mut w, normals[i].z)?;
        }
        for values in data.scalars.values() {
            put(&mut w, values[i])?;
        }
    }
    for f in &data.faces {
        w.write_all(&[3u8])?;
        for &i in f {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_obj(reader: impl Read) -> Result<TriMesh, GeomError> {
    let reader = BufReader::new(reader);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(line_no, format!("bad vertex: {e}")))?;
                if c.len() != 3 {
                    return Err(parse_err(line_no, "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let v: i64 = first
                            .parse()
                            .map_err(|_| parse_err(line_no, format!("bad face index '{t}'")))?;
                        let resolved = if v < 0 { vertices.len() as i64 + v } else { v - 1 };
                        if resolved < 0 {
                            return Err(parse_err(line_no, "face index out of range"));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn write_obj(writer: impl Write, mesh: &TriMesh) -> Result<(), GeomError> {
    let mut w = BufWriter::new(writer);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a mesh from `.obj` or `.ply` by extension.
pub fn load_mesh(path: &Path) -> Result<TriMesh, GeomError> {
    let file = File::open(path).map_err(|e| GeomError::File { path: path.display().to_string(), source: e })?;
    match extension(path).as_deref() {
        Some("obj") => read_obj(file),
        Some("ply") => read_ply(file)?.to_mesh(),
        other => Err(GeomError::UnsupportedFormat(other.unwrap_or("").to_string())),
    }
}

pub fn load_ply(path: &Path) -> Result<PlyData, GeomError> {
    let file = File::open(path).map_err(|e| GeomError::File { path: path.display().to_string(), source: e })?;
    read_ply(file)
}

pub fn save_ply(path: &Path, data: &PlyData) -> Result<(), GeomError> {
    let file = File::create(path).map_err(|e| GeomError::File { path: path.display().to_string(), source: e })?;
    write_ply(file, data)
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}
