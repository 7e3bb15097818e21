use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::{Image, ScalarField, VectorField};
use crate::error::{MvsError, Result};
use crate::scalar::Real;

fn image_err(path: &Path, e: impl std::fmt::Display) -> MvsError {
    MvsError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Decodes an 8-bit PNG/PPM into luma `(0.299 R + 0.587 G + 0.114 B) / 255`.
pub fn load_gray(path: &Path) -> Result<Image<f32>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).clamp(0.0, 1.0)
                as f32
        })
        .collect();
    Image::new(w, h, data)
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes an image as 8-bit grayscale PNG.
pub fn save_gray_png<T: Real>(path: &Path, img: &Image<T>) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|v| to_u8(v.f64())).collect();
    image::save_buffer(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        image::ColorType::L8,
    )
    .map_err(|e| image_err(path, e))
}

/// Writes a boolean mask as a black/white PNG.
pub fn save_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|m| if *m { 255 } else { 0 }).collect();
    image::save_buffer(path, &bytes, width as u32, height as u32, image::ColorType::L8)
        .map_err(|e| image_err(path, e))
}

/// Decoded PFM payload: top-down row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmData {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmData {
    /// Invalid entries become NaN.
    pub fn from_scalar<T: Real>(field: &ScalarField<T>) -> Self {
        let data = field
            .values()
            .iter()
            .zip(field.valid_mask())
            .map(|(v, ok)| if *ok { v.f64() as f32 } else { f32::NAN })
            .collect();
        Self {
            width: field.width(),
            height: field.height(),
            channels: 1,
            data,
        }
    }

    pub fn from_vector<T: Real>(field: &VectorField<T>) -> Self {
        let mut data = Vec::with_capacity(field.values().len() * 3);
        for (v, ok) in field.values().iter().zip(field.valid_mask()) {
            if *ok {
                data.extend([v.x.f64() as f32, v.y.f64() as f32, v.z.f64() as f32]);
            } else {
                data.extend([f32::NAN; 3]);
            }
        }
        Self {
            width: field.width(),
            height: field.height(),
            channels: 3,
            data,
        }
    }

    pub fn to_scalar<T: Real>(&self) -> Result<ScalarField<T>> {
        if self.channels != 1 {
            return Err(MvsError::invalid("expected a single-channel PFM"));
        }
        Ok(ScalarField::from_fn(self.width, self.height, |x, y| {
            let v = self.data[y * self.width + x];
            v.is_finite().then(|| T::lit(v as f64))
        }))
    }

    pub fn to_vector<T: Real>(&self) -> Result<VectorField<T>> {
        if self.channels != 3 {
            return Err(MvsError::invalid("expected a three-channel PFM"));
        }
        Ok(VectorField::from_fn(self.width, self.height, |x, y| {
            let i = 3 * (y * self.width + x);
            let v = &self.data[i..i + 3];
            v.iter()
                .all(|c| c.is_finite())
                .then(|| Vector3::new(T::lit(v[0] as f64), T::lit(v[1] as f64), T::lit(v[2] as f64)))
        }))
    }
}

/// Writes little-endian PFM (scale -1.0) with rows stored bottom-up.
pub fn write_pfm(path: &Path, pfm: &PfmData) -> Result<()> {
    let magic = match pfm.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(MvsError::invalid(format!("PFM supports 1 or 3 channels, got {c}"))),
    };
    let mut out = Vec::with_capacity(pfm.data.len() * 4 + 32);
    write!(out, "{magic}\n{} {}\n-1.0\n", pfm.width, pfm.height).expect("in-memory write");
    let row = pfm.width * pfm.channels;
    for y in (0..pfm.height).rev() {
        for v in &pfm.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| MvsError::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<PfmData> {
    let bytes = fs::read(path).map_err(|e| MvsError::io(path, e))?;
    let mut pos = 0;
    let mut next_token = |line: usize| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(MvsError::format(path, line, "truncated PFM header"));
        }
        let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok(tok)
    };
    let channels = match next_token(1)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(MvsError::format(path, 1, format!("bad PFM magic `{other}`"))),
    };
    let parse = |s: String, line: usize| -> Result<usize> {
        s.parse()
            .map_err(|_| MvsError::format(path, line, format!("bad PFM dimension `{s}`")))
    };
    let width = parse(next_token(2)?, 2)?;
    let height = parse(next_token(2)?, 2)?;
    let scale: f64 = next_token(3)?
        .parse()
        .map_err(|_| MvsError::format(path, 3, "bad PFM scale"))?;
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let little = scale < 0.0;
    let n = width * height * channels;
    if bytes.len() < pos + 4 * n {
        return Err(MvsError::format(path, 4, "PFM payload truncated"));
    }
    let row = width * channels;
    let mut data = vec![0f32; n];
    for (k, chunk) in bytes[pos..pos + 4 * n].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(PfmData {
        width,
        height,
        channels,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let field = ScalarField::from_fn(2, 2, |x, y| (x + y != 2).then_some((y * 2 + x) as f64));
        write_pfm(&path, &PfmData::from_scalar(&field)).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        let body = &bytes[12..];
        // First stored row is the bottom image row: (0,1) = 2.0, (1,1) = invalid.
        assert_eq!(&body[0..4], &2.0f32.to_le_bytes());
        assert!(f32::from_le_bytes(body[4..8].try_into().unwrap()).is_nan());
        let back: ScalarField<f64> = read_pfm(&path).unwrap().to_scalar().unwrap();
        assert_eq!(back, field);
    }

    #[test]
    fn pfm_vector_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.pfm");
        let field = VectorField::from_fn(3, 2, |x, y| {
            (x != 1 || y != 0).then(|| Vector3::new(x as f64, y as f64, -1.0).normalize())
        });
        let pfm = PfmData::from_vector(&field);
        write_pfm(&path, &pfm).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.channels, 3);
        let f: VectorField<f64> = back.to_vector().unwrap();
        assert_eq!(f.valid_mask(), field.valid_mask());
        for (a, b) in f.values().iter().zip(field.values()) {
            assert!((a - b).norm() < 1e-6 || !a.iter().all(|c| c.is_finite()) || b.norm() == 0.0);
        }
    }

    #[test]
    fn png_luma_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let rgb = vec![255u8, 0, 0, 0, 255, 0, 0, 0, 255, 200, 200, 200];
        image::save_buffer(&path, &rgb, 4, 1, image::ColorType::Rgb8).unwrap();
        let img = load_gray(&path).unwrap();
        let expect = [0.299, 0.587, 0.114, 200.0 / 255.0];
        for (a, b) in img.data().iter().zip(expect) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn truncated_pfm_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        fs::write(&path, b"Pf\n4 4\n-1.0\n\0\0\0\0").unwrap();
        assert!(matches!(read_pfm(&path), Err(MvsError::Format { .. })));
    }
}
