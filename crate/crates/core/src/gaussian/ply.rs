//! Binary little-endian PLY in the standard splatting vertex layout.
//!
//! Scales are stored as natural logs and opacity as a logit; the in-memory
//! cloud always holds the activated values.

use std::sync::LazyLock;

use nalgebra::Vector3;
use thiserror::Error;

use super::{quat_from_wxyz, Gaussian, GaussianCloud, SH_REST_LEN, SH_REST_PER_CHANNEL};

#[derive(Debug, Error, PartialEq)]
pub enum PlyError {
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("missing required vertex property `{0}`")]
    MissingProperty(String),
    #[error("vertex property `{name}` has unsupported type `{ty}`")]
    UnsupportedProperty { name: String, ty: String },
    #[error("truncated payload: expected {expected} bytes of vertex data, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("cannot encode gaussian {index}: field `{field}` = {value} ({reason})")]
    Encode {
        index: usize,
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Vertex property names in file order.
pub static PLY_PROPERTIES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut v: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    v.extend((0..SH_REST_LEN).map(|i| format!("f_rest_{i}")));
    v.push("opacity".into());
    v.extend((0..3).map(|i| format!("scale_{i}")));
    v.extend((0..4).map(|i| format!("rot_{i}")));
    v
});

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn header(count: usize) -> String {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    h.push_str(&format!("element vertex {count}\n"));
    for name in PLY_PROPERTIES.iter() {
        h.push_str(&format!("property float {name}\n"));
    }
    h.push_str("end_header\n");
    h
}

pub fn save_ply(cloud: &GaussianCloud) -> Result<Vec<u8>, PlyError> {
    let head = header(cloud.len());
    let mut out = Vec::with_capacity(head.len() + cloud.len() * PLY_PROPERTIES.len() * 4);
    out.extend_from_slice(head.as_bytes());
    let mut push = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for (index, g) in cloud.gaussians.iter().enumerate() {
        for axis in 0..3 {
            if !(g.scale[axis] > 0.0) {
                return Err(PlyError::Encode {
                    index,
                    field: ["scale_0", "scale_1", "scale_2"][axis],
                    value: g.scale[axis],
                    reason: "log of a non-positive scale",
                });
            }
        }
        if !(g.opacity > 0.0 && g.opacity < 1.0) {
            return Err(PlyError::Encode {
                index,
                field: "opacity",
                value: g.opacity,
                reason: "logit is undefined outside (0, 1)",
            });
        }
        g.mean.iter().for_each(|&v| push(v));
        (0..3).for_each(|_| push(0.0));
        g.sh_dc.iter().for_each(|&v| push(v));
        g.sh_rest.iter().for_each(|&v| push(v));
        push(logit(g.opacity));
        g.scale.iter().for_each(|&v| push(v.ln()));
        let q = g.rotation.quaternion();
        [q.w, q.i, q.j, q.k].iter().for_each(|&v| push(v));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(ty: &str) -> Option<Self> {
        Some(match ty {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
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

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes(b[..2].try_into().unwrap()) as f64,
            Self::U16 => u16::from_le_bytes(b[..2].try_into().unwrap()) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.props.iter().map(|(_, s)| s.size()).sum()
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, usize), PlyError> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| PlyError::MalformedHeader("no end_header line".into()))?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| PlyError::MalformedHeader("header is not UTF-8".into()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(PlyError::MalformedHeader("missing `ply` magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *fmt != "binary_little_endian" {
                    return Err(PlyError::MalformedHeader(format!("unsupported format `{fmt}`")));
                }
                if *version != "1.0" {
                    return Err(PlyError::MalformedHeader(format!("unsupported version `{version}`")));
                }
                format_seen = true;
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| PlyError::MalformedHeader(format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", .., name] => {
                return Err(PlyError::UnsupportedProperty {
                    name: name.to_string(),
                    ty: "list".into(),
                })
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| {
                    PlyError::MalformedHeader(format!("property `{name}` before any element"))
                })?;
                let scalar = Scalar::parse(ty).ok_or_else(|| PlyError::UnsupportedProperty {
                    name: name.to_string(),
                    ty: ty.to_string(),
                })?;
                el.props.push((name.to_string(), scalar));
            }
            _ => return Err(PlyError::MalformedHeader(format!("unrecognized line `{line}`"))),
        }
    }
    if !format_seen {
        return Err(PlyError::MalformedHeader("missing format line".into()));
    }
    Ok((elements, end + END.len()))
}

pub fn load_ply(bytes: &[u8]) -> Result<GaussianCloud, PlyError> {
    let (elements, body_start) = parse_header(bytes)?;
    let mut offset = body_start;
    let mut vertex = None;
    for el in &elements {
        if el.name == "vertex" {
            vertex = Some(el);
            break;
        }
        offset += el.count * el.stride();
    }
    let vertex = vertex.ok_or_else(|| PlyError::MalformedHeader("no vertex element".into()))?;

    let find = |name: &str| -> Option<(usize, Scalar)> {
        let mut off = 0;
        for (n, s) in &vertex.props {
            if n == name {
                return Some((off, *s));
            }
            off += s.size();
        }
        None
    };
    let mut required = Vec::with_capacity(REQUIRED.len());
    for name in REQUIRED {
        let (off, s) = find(name).ok_or_else(|| PlyError::MissingProperty(name.into()))?;
        if !matches!(s, Scalar::F32 | Scalar::F64) {
            return Err(PlyError::UnsupportedProperty {
                name: name.into(),
                ty: format!("{s:?}").to_lowercase(),
            });
        }
        required.push((off, s));
    }
    // Lower SH degrees store fewer coefficients per channel, still channel-major.
    let rest_count = (0..).take_while(|i| find(&format!("f_rest_{i}")).is_some()).count();
    let per_channel = rest_count / 3;
    if rest_count % 3 != 0 || per_channel > SH_REST_PER_CHANNEL {
        return Err(PlyError::MalformedHeader(format!(
            "unexpected number of f_rest properties: {rest_count}"
        )));
    }
    let rest: Vec<(usize, Scalar)> = (0..rest_count)
        .map(|i| find(&format!("f_rest_{i}")).unwrap())
        .collect();

    let stride = vertex.stride();
    let expected = vertex.count * stride;
    let available = bytes.len().saturating_sub(offset);
    if available < expected {
        return Err(PlyError::Truncated {
            expected,
            actual: available,
        });
    }

    let mut gaussians = Vec::with_capacity(vertex.count);
    for v in 0..vertex.count {
        let row = &bytes[offset + v * stride..offset + (v + 1) * stride];
        let f = |k: usize| {
            let (off, s) = required[k];
            s.read(&row[off..])
        };
        let mut sh_rest = [0.0; SH_REST_LEN];
        for (i, (off, s)) in rest.iter().enumerate() {
            let (ch, k) = (i / per_channel, i % per_channel);
            sh_rest[ch * SH_REST_PER_CHANNEL + k] = s.read(&row[*off..]);
        }
        gaussians.push(Gaussian {
            mean: Vector3::new(f(0), f(1), f(2)),
            sh_dc: [f(3), f(4), f(5)],
            opacity: sigmoid(f(6)),
            scale: Vector3::new(f(7).exp(), f(8).exp(), f(9).exp()),
            rotation: quat_from_wxyz(f(10), f(11), f(12), f(13)),
            sh_rest,
        });
    }
    Ok(GaussianCloud {
        gaussians,
        label: String::new(),
    })
}
