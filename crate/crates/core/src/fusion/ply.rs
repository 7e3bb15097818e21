use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{MvsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    BinaryLittleEndian,
    Ascii,
}

/// Writes `vertex` elements with `x y z nx ny nz` as float, plus
/// `red green blue` when the cloud has colors.
pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    cloud.validate()?;
    let mut out = Vec::with_capacity(64 + cloud.len() * 27);
    let name = match format {
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
        PlyFormat::Ascii => "ascii",
    };
    let mut header = format!("ply\nformat {name} 1.0\nelement vertex {}\n", cloud.len());
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        header.push_str(&format!("property float {p}\n"));
    }
    if cloud.colors.is_some() {
        for p in ["red", "green", "blue"] {
            header.push_str(&format!("property uchar {p}\n"));
        }
    }
    header.push_str("end_header\n");
    out.extend_from_slice(header.as_bytes());
    for i in 0..cloud.len() {
        let (p, n) = (cloud.points[i], cloud.normals[i]);
        let vals = [p.x, p.y, p.z, n.x, n.y, n.z].map(|v| v as f32);
        let color = cloud.colors.as_ref().map(|c| c[i]);
        match format {
            PlyFormat::BinaryLittleEndian => {
                for v in vals {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(c) = color {
                    out.extend_from_slice(&c);
                }
            }
            PlyFormat::Ascii => {
                let mut line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
                if let Some(c) = color {
                    line.extend(c.iter().map(|v| v.to_string()));
                }
                writeln!(out, "{}", line.join(" ")).expect("write to vec");
            }
        }
    }
    fs::write(path, out).map_err(|e| MvsError::io(path, e))
}

#[derive(Clone, Copy)]
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Reads the `vertex` element of an ASCII or binary little-endian PLY file.
/// Missing normals default to +z; colors are kept when all three channels exist.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| MvsError::io(path, e))?;
    let bad = |line: usize, msg: &str| MvsError::format(path, line, msg);

    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| bad(lines.len() + 1, "header is not terminated by end_header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| bad(lines.len() + 1, "header is not UTF-8"))?
            .trim_end_matches('\r')
            .to_string();
        pos += end + 1;
        let done = line == "end_header";
        lines.push(line);
        if done {
            break;
        }
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(bad(1, "missing ply magic"));
    }

    let mut ascii = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => ascii = Some(true),
            ["format", "binary_little_endian", _] => ascii = Some(false),
            ["format", other, ..] => return Err(bad(i + 1, &format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(bad(i + 1, "duplicate vertex element"));
                }
                count = Some(n.parse::<usize>().map_err(|_| bad(i + 1, "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => {
                if count.is_none() {
                    return Err(bad(i + 1, "vertex must be the first element"));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => return Err(bad(i + 1, "list properties on vertices are unsupported")),
            ["property", ty, name] if in_vertex => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(i + 1, &format!("unknown type {ty}")))?;
                props.push((name.to_string(), ty));
            }
            _ => {}
        }
    }
    let ascii = ascii.ok_or_else(|| bad(1, "missing format line"))?;
    let count = count.ok_or_else(|| bad(1, "missing vertex element"))?;
    let col = |name: &str| props.iter().position(|(n, _)| n == name);
    let xyz = [col("x"), col("y"), col("z")];
    let Some([ix, iy, iz]) = xyz.iter().copied().collect::<Option<Vec<_>>>().map(|v| [v[0], v[1], v[2]]) else {
        return Err(bad(1, "vertex needs x, y and z"));
    };
    let normal_cols = [col("nx"), col("ny"), col("nz")];
    let color_cols = [col("red"), col("green"), col("blue")];
    let has_normals = normal_cols.iter().all(Option::is_some);
    let has_colors = color_cols.iter().all(Option::is_some);

    let header_lines = lines.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    if ascii {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad(header_lines + 1, "body is not UTF-8"))?;
        let mut body = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        for _ in 0..count {
            let (n, line) = body.next().ok_or_else(|| bad(header_lines + 1, "fewer vertices than declared"))?;
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| bad(header_lines + n + 1, "unparsable vertex value"))?;
            if vals.len() < props.len() {
                return Err(bad(header_lines + n + 1, "too few vertex values"));
            }
            rows.push(vals);
        }
    } else {
        let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
        if bytes.len() - pos < stride * count {
            return Err(bad(header_lines, "binary body is truncated"));
        }
        for v in 0..count {
            let mut off = pos + v * stride;
            let mut row = Vec::with_capacity(props.len());
            for (_, t) in &props {
                row.push(t.read_le(&bytes[off..]));
                off += t.size();
            }
            rows.push(row);
        }
    }

    let mut cloud = PointCloud {
        colors: has_colors.then(Vec::new),
        ..PointCloud::default()
    };
    for r in rows {
        cloud.points.push(Vector3::new(r[ix], r[iy], r[iz]));
        cloud.normals.push(if has_normals {
            let [a, b, c] = normal_cols.map(|i| r[i.unwrap()]);
            Vector3::new(a, b, c).try_normalize(1e-12).unwrap_or(Vector3::z())
        } else {
            Vector3::z()
        });
        if let Some(colors) = cloud.colors.as_mut() {
            colors.push(color_cols.map(|i| r[i.unwrap()].clamp(0.0, 255.0) as u8));
        }
    }
    Ok(cloud)
}
