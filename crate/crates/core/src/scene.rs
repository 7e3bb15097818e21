//! Calibrated views and on-disk scene layout.
//!
//! A scene directory holds `images/<id>.png` (or `.ppm`) and
//! `cams/cam_<id>.txt`. Camera files look like
//!
//! ```text
//! extrinsic
//! r11 r12 r13 t1
//! r21 r22 r23 t2
//! r31 r32 r33 t3
//!
//! intrinsic
//! fx  s   cx
//! 0   fy  cy
//! 0   0   1
//!
//! d_min d_max
//! ```
//!
//! where `[R|t]` maps world to camera coordinates and depths are camera
//! z-coordinates.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::error::{MvsError, Result};
use crate::geometry::{nearest_rotation, CameraModel};
use crate::imaging::{load_gray, Image};

/// One calibrated grayscale image.
#[derive(Debug, Clone)]
pub struct View {
    pub id: String,
    pub camera: CameraModel<f64>,
    pub image: Image<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub views: Vec<View>,
}

impl Scene {
    pub fn new(views: Vec<View>) -> Self {
        Self { views }
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn require_views(&self, needed: usize) -> Result<()> {
        if self.views.len() < needed {
            return Err(MvsError::InsufficientViews {
                needed,
                got: self.views.len(),
            });
        }
        Ok(())
    }

    /// Loads every `cams/cam_<id>.txt` with its matching image, sorted by id.
    pub fn load(dir: &Path) -> Result<Self> {
        let cam_dir = dir.join("cams");
        let entries = fs::read_dir(&cam_dir).map_err(|e| MvsError::io(&cam_dir, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| MvsError::io(&cam_dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_prefix("cam_").and_then(|s| s.strip_suffix(".txt")) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        let mut views = Vec::with_capacity(ids.len());
        for id in ids {
            let image_path = find_image(&dir.join("images"), &id)?;
            let image = load_gray(&image_path)?;
            let cam_path = cam_dir.join(format!("cam_{id}.txt"));
            let camera = read_camera_file(&cam_path, image.width(), image.height())?;
            views.push(View { id, camera, image });
        }
        Ok(Self { views })
    }
}

fn find_image(dir: &Path, id: &str) -> Result<PathBuf> {
    for ext in ["png", "ppm", "pgm"] {
        let p = dir.join(format!("{id}.{ext}"));
        if p.exists() {
            return Ok(p);
        }
    }
    Err(MvsError::io(
        dir.join(format!("{id}.png")),
        std::io::Error::new(std::io::ErrorKind::NotFound, "image for camera not found"),
    ))
}

pub fn read_camera_file(path: &Path, width: usize, height: usize) -> Result<CameraModel<f64>> {
    let text = fs::read_to_string(path).map_err(|e| MvsError::io(path, e))?;
    parse_camera(&text, path, width, height)
}

/// Parses the camera text format; errors carry the 1-based line number.
pub fn parse_camera(text: &str, path: &Path, width: usize, height: usize) -> Result<CameraModel<f64>> {
    let lines: Vec<&str> = text.lines().collect();
    let line = |i: usize| lines.get(i).map(|l| l.trim()).unwrap_or("");
    let expect_tag = |i: usize, tag: &str| -> Result<()> {
        if line(i) != tag {
            return Err(MvsError::format(path, i + 1, format!("expected `{tag}`")));
        }
        Ok(())
    };
    let numbers = |i: usize, n: usize| -> Result<Vec<f64>> {
        let vals: std::result::Result<Vec<f64>, _> =
            line(i).split_whitespace().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
            Ok(v) => Err(MvsError::format(
                path,
                i + 1,
                format!("expected {n} numbers, found {}", v.len()),
            )),
            Err(e) => Err(MvsError::format(path, i + 1, format!("bad number: {e}"))),
        }
    };

    expect_tag(0, "extrinsic")?;
    let mut rot = Matrix3::zeros();
    let mut t = Vector3::zeros();
    for r in 0..3 {
        let v = numbers(1 + r, 4)?;
        for c in 0..3 {
            rot[(r, c)] = v[c];
        }
        t[r] = v[3];
    }
    expect_tag(5, "intrinsic")?;
    let mut k = Matrix3::zeros();
    for r in 0..3 {
        let v = numbers(6 + r, 3)?;
        for c in 0..3 {
            k[(r, c)] = v[c];
        }
    }
    let range = numbers(10, 2)?;

    // Accept rotations rounded to a few decimals and snap them back.
    let ortho_err = (rot.transpose() * rot - Matrix3::identity()).amax();
    if ortho_err > 1e-4 || rot.determinant() <= 0.0 {
        return Err(MvsError::format(path, 2, "extrinsic rotation is not orthonormal"));
    }
    let rot = nearest_rotation(&rot)
        .ok_or_else(|| MvsError::format(path, 2, "rotation SVD failed"))?;
    CameraModel::new(k, rot, t, [range[0], range[1]], width, height)
        .map_err(|e| MvsError::format(path, 7, e.to_string()))
}

/// Serializes a camera in the text format (round-trip exact).
pub fn format_camera(camera: &CameraModel<f64>) -> String {
    let mut s = String::from("extrinsic\n");
    let (r, t, k) = (camera.rotation(), camera.translation(), camera.intrinsics());
    for i in 0..3 {
        let _ = writeln!(s, "{:?} {:?} {:?} {:?}", r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
    }
    s.push_str("\nintrinsic\n");
    for i in 0..3 {
        let _ = writeln!(s, "{:?} {:?} {:?}", k[(i, 0)], k[(i, 1)], k[(i, 2)]);
    }
    let [d0, d1] = camera.depth_range();
    let _ = writeln!(s, "\n{d0:?} {d1:?}");
    s
}

pub fn write_camera_file(path: &Path, camera: &CameraModel<f64>) -> Result<()> {
    fs::write(path, format_camera(camera)).map_err(|e| MvsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle;

    fn sample_camera() -> CameraModel<f64> {
        CameraModel::simple(
            512.5,
            (319.5, 239.5),
            axis_angle(&Vector3::new(0.0, 1.0, 0.0), 0.1),
            Vector3::new(-0.3, 0.01, 0.02),
            [1.5, 9.0],
            640,
            480,
        )
        .unwrap()
    }

    #[test]
    fn camera_text_round_trip() {
        let cam = sample_camera();
        let text = format_camera(&cam);
        let back = parse_camera(&text, Path::new("cam_0.txt"), 640, 480).unwrap();
        assert!((back.rotation() - cam.rotation()).amax() < 1e-15);
        assert_eq!(back.translation(), cam.translation());
        assert_eq!(back.intrinsics(), cam.intrinsics());
        assert_eq!(back.depth_range(), cam.depth_range());
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "extrinsic");
        assert_eq!(lines[4], "");
        assert_eq!(lines[5], "intrinsic");
        assert_eq!(lines[9], "");
        assert_eq!(lines.len(), 11);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let text = format_camera(&sample_camera()).replace("intrinsic\n512.5", "intrinsic\n5x2.5");
        match parse_camera(&text, Path::new("cams/cam_7.txt"), 640, 480) {
            Err(MvsError::Format { file, line, .. }) => {
                assert_eq!(line, 7);
                assert!(file.ends_with("cam_7.txt"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let missing = "extrinsic\n1 0 0 0\n0 1 0 0\n";
        assert!(matches!(
            parse_camera(missing, Path::new("c.txt"), 4, 4),
            Err(MvsError::Format { line: 4, .. })
        ));
    }

    #[test]
    fn rounded_rotation_is_accepted() {
        let text = "extrinsic\n0.995004 0 0.099833 0\n0 1 0 0\n-0.099833 0 0.995004 0\n\nintrinsic\n500 0 320\n0 500 240\n0 0 1\n\n1 10\n";
        let cam = parse_camera(text, Path::new("c.txt"), 640, 480).unwrap();
        assert!((cam.rotation().determinant() - 1.0).abs() < 1e-12);
    }
}
