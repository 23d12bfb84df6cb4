//! Binary little-endian PLY in the common 3DGS layout.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::splat::sh::{coeffs_for_degree, ShCoeffs};
use crate::splat::{normalize_quaternion, GaussianKernel, SplatScene, QUATERNION_DRIFT_WARN};

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
    fn parse(s: &str) -> Option<Scalar> {
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

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |offset: usize, msg: String| Error::parse(path, offset as u64, msg);
    let mut offset = 0;
    let next_line = |offset: &mut usize| -> Result<(usize, String)> {
        let start = *offset;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(start, "unterminated header".into()))?;
        *offset = start + end + 1;
        let line = std::str::from_utf8(&bytes[start..start + end])
            .map_err(|_| err(start, "header is not ASCII".into()))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };
    let (_, magic) = next_line(&mut offset)?;
    if magic != "ply" {
        return Err(err(0, "missing 'ply' magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    loop {
        let (at, line) = next_line(&mut offset)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, version] => {
                if *fmt != "binary_little_endian" {
                    return Err(err(at, format!("unsupported PLY format {fmt:?}; only binary_little_endian is read")));
                }
                if *version != "1.0" {
                    return Err(err(at, format!("unsupported PLY version {version}")));
                }
                format_seen = true;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| err(at, format!("bad element count {count:?}")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count, item, _name] => {
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(err(at, format!("bad list property types in {line:?}")));
                };
                let el = elements.last_mut().ok_or_else(|| err(at, "property before any element".into()))?;
                el.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| err(at, format!("unknown property type {ty:?}")))?;
                let el = elements.last_mut().ok_or_else(|| err(at, "property before any element".into()))?;
                el.properties.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(err(at, format!("malformed header line {line:?}"))),
        }
    }
    if !format_seen {
        return Err(err(0, "missing format line".into()));
    }
    Ok(Header { elements, body_offset: offset })
}

/// Column layout of the vertex element.
struct Layout {
    stride: usize,
    columns: Vec<(String, Scalar, usize)>,
}

impl Layout {
    fn find(&self, name: &str) -> Option<(Scalar, usize)> {
        self.columns.iter().find(|c| c.0 == name).map(|c| (c.1, c.2))
    }
}

/// Reads a splat scene; object ids come from an `object_id` property, else
/// from a `<path>.segments` sidecar, else are zero.
pub fn load_ply(path: &Path) -> Result<SplatScene> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut scene = parse_ply(&bytes, path)?;
    if !scene.has_object_property {
        let sidecar = segments_path(path);
        if sidecar.exists() {
            let ids = super::sidecar::load_segments(&sidecar)?;
            if ids.len() != scene.scene.len() {
                return Err(Error::parse(
                    &sidecar,
                    0,
                    format!("{} segment ids for {} kernels", ids.len(), scene.scene.len()),
                ));
            }
            for (k, id) in scene.scene.kernels.iter_mut().zip(ids) {
                k.object_id = id;
            }
        }
    }
    Ok(scene.scene)
}

/// Path of the segment sidecar for a PLY file.
pub fn segments_path(ply: &Path) -> PathBuf {
    let mut s = ply.as_os_str().to_owned();
    s.push(".segments");
    PathBuf::from(s)
}

pub(crate) struct Parsed {
    pub scene: SplatScene,
    pub has_object_property: bool,
}

pub(crate) fn parse_ply(bytes: &[u8], path: &Path) -> Result<Parsed> {
    let header = parse_header(bytes, path)?;
    let err = |offset: usize, msg: String| Error::parse(path, offset as u64, msg);
    let mut offset = header.body_offset;
    let mut vertex = None;
    for el in &header.elements {
        if el.name == "vertex" {
            vertex = Some(el);
            break;
        }
        // Skip elements stored before the vertices.
        for _ in 0..el.count {
            for p in &el.properties {
                offset = skip_property(bytes, offset, p).ok_or_else(|| err(bytes.len(), format!("truncated {} element", el.name)))?;
            }
        }
    }
    let el = vertex.ok_or_else(|| err(0, "no vertex element".into()))?;
    let mut columns = Vec::new();
    let mut stride = 0;
    for p in &el.properties {
        match p {
            Property::Scalar { name, ty } => {
                columns.push((name.clone(), *ty, stride));
                stride += ty.size();
            }
            Property::List { .. } => return Err(err(0, "list properties are not supported on vertices".into())),
        }
    }
    let layout = Layout { stride, columns };
    let need = |name: &str| layout.find(name).ok_or_else(|| err(0, format!("missing mandatory property {name:?}")));
    let xyz = ["x", "y", "z"].map(need);
    let dc = ["f_dc_0", "f_dc_1", "f_dc_2"].map(need);
    let scale = ["scale_0", "scale_1", "scale_2"].map(need);
    let rot = ["rot_0", "rot_1", "rot_2", "rot_3"].map(need);
    let opacity = need("opacity")?;
    let (xyz, dc, scale, rot) = (transpose(xyz)?, transpose(dc)?, transpose(scale)?, transpose(rot)?);
    let rest_count = (0..).take_while(|i| layout.find(&format!("f_rest_{i}")).is_some()).count();
    let degree = (0..=3u8)
        .find(|&d| 3 * (coeffs_for_degree(d) - 1) == rest_count)
        .ok_or_else(|| err(0, format!("{rest_count} f_rest properties; expected 0, 9, 24 or 45")))?;
    let rest: Vec<(Scalar, usize)> = (0..rest_count).map(|i| layout.find(&format!("f_rest_{i}")).unwrap()).collect();
    let object_id = layout.find("object_id");
    if let Some((ty, _)) = object_id {
        if !ty.is_integer() {
            return Err(err(0, "object_id must be an integer property".into()));
        }
    }
    let body_len = el.count.checked_mul(layout.stride).ok_or_else(|| err(offset, "vertex count overflows".into()))?;
    if bytes.len() < offset + body_len {
        return Err(err(bytes.len(), format!("truncated body: {} vertices need {body_len} bytes after offset {offset}", el.count)));
    }
    let per_channel = coeffs_for_degree(degree) - 1;
    let mut kernels = Vec::with_capacity(el.count);
    let mut drifted = 0usize;
    for i in 0..el.count {
        let rec = offset + i * layout.stride;
        let get = |(ty, at): (Scalar, usize)| ty.read(&bytes[rec + at..]);
        let mean = Vector3::new(get(xyz[0]), get(xyz[1]), get(xyz[2]));
        let mut sh = ShCoeffs { degree, ..ShCoeffs::default() };
        for c in 0..3 {
            sh.coeffs[0][c] = get(dc[c]);
            for k in 0..per_channel {
                sh.coeffs[k + 1][c] = get(rest[c * per_channel + k]);
            }
        }
        let logit = get(opacity);
        let alpha = (1.0 / (1.0 + (-logit).exp())).max(f64::MIN_POSITIVE);
        let s = Vector3::new(get(scale[0]).exp(), get(scale[1]).exp(), get(scale[2]).exp());
        let (rotation, drift) = normalize_quaternion(get(rot[0]), get(rot[1]), get(rot[2]), get(rot[3]))
            .map_err(|e| err(rec, format!("vertex {i}: {e}")))?;
        if drift > QUATERNION_DRIFT_WARN {
            drifted += 1;
        }
        let id = object_id.map(get).unwrap_or(0.0);
        if id < 0.0 || id > u32::MAX as f64 {
            return Err(err(rec, format!("vertex {i}: object_id {id} out of range")));
        }
        let k = GaussianKernel { mean, rotation, scale: s, opacity: alpha, sh, object_id: id as u32 };
        k.validate().map_err(|e| err(rec, format!("vertex {i}: {e}")))?;
        kernels.push(k);
    }
    if drifted > 0 {
        log::warn!("{}: {drifted} quaternions were far from unit norm and renormalized", path.display());
    }
    Ok(Parsed { scene: SplatScene::new(kernels), has_object_property: object_id.is_some() })
}

fn transpose<const N: usize>(a: [Result<(Scalar, usize)>; N]) -> Result<[(Scalar, usize); N]> {
    let mut out = [(Scalar::F32, 0); N];
    for (o, r) in out.iter_mut().zip(a) {
        *o = r?;
    }
    Ok(out)
}

fn skip_property(bytes: &[u8], offset: usize, p: &Property) -> Option<usize> {
    match p {
        Property::Scalar { ty, .. } => {
            let end = offset + ty.size();
            (end <= bytes.len()).then_some(end)
        }
        Property::List { count, item } => {
            let head = offset + count.size();
            if head > bytes.len() {
                return None;
            }
            let n = count.read(&bytes[offset..]);
            if n < 0.0 {
                return None;
            }
            let end = head + n as usize * item.size();
            (end <= bytes.len()).then_some(end)
        }
    }
}

/// Writes a scene as float32 3DGS PLY. Object ids go into a `uchar`
/// property, or `uint` when some id exceeds 255.
pub fn save_ply(scene: &SplatScene, path: &Path) -> Result<()> {
    let bytes = encode_ply(scene);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_ply(scene: &SplatScene) -> Vec<u8> {
    let degree = scene.kernels.iter().map(|k| k.sh.degree).max().unwrap_or(0);
    let per_channel = coeffs_for_degree(degree) - 1;
    let wide_ids = scene.kernels.iter().any(|k| k.object_id > u8::MAX as u32);
    let mut out = Vec::new();
    let mut h = String::new();
    h += "ply\nformat binary_little_endian 1.0\n";
    h += &format!("element vertex {}\n", scene.len());
    for name in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"] {
        h += &format!("property float {name}\n");
    }
    for i in 0..3 * per_channel {
        h += &format!("property float f_rest_{i}\n");
    }
    for name in ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"] {
        h += &format!("property float {name}\n");
    }
    h += if wide_ids { "property uint object_id\n" } else { "property uchar object_id\n" };
    h += "end_header\n";
    out.extend_from_slice(h.as_bytes());
    let put = |out: &mut Vec<u8>, v: f64| out.write_all(&(v as f32).to_le_bytes()).unwrap();
    for k in &scene.kernels {
        for c in 0..3 {
            put(&mut out, k.mean[c]);
        }
        for c in 0..3 {
            put(&mut out, k.sh.coeffs[0][c]);
        }
        for c in 0..3 {
            for j in 0..per_channel {
                put(&mut out, k.sh.coeffs[j + 1][c]);
            }
        }
        put(&mut out, (k.opacity / (1.0 - k.opacity)).ln());
        for c in 0..3 {
            put(&mut out, k.scale[c].ln());
        }
        let q = k.rotation.quaternion();
        for v in [q.w, q.i, q.j, q.k] {
            put(&mut out, v);
        }
        if wide_ids {
            out.extend_from_slice(&k.object_id.to_le_bytes());
        } else {
            out.push(k.object_id as u8);
        }
    }
    out
}
