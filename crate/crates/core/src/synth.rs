//! Synthetic planar scenes with analytic ground truth.
//!
//! The world frame is the reference (first) camera's frame. Textures are
//! value noise painted in plane coordinates; textureless surfaces are a
//! constant 0.5 gray.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{MvsError, Result};
use crate::fusion::{write_ply, PlyFormat, PointCloud};
use crate::geometry::CameraModel;
use crate::imaging::{save_gray_png, save_mask_png, write_pfm, Image, PfmData, ScalarField, VectorField};
use crate::scene::{write_camera_file, Scene, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    TexturedPlane,
    TwoPlaneLowtex,
    BoxRoom,
}

impl Template {
    pub const ALL: [Template; 3] = [Self::TexturedPlane, Self::TwoPlaneLowtex, Self::BoxRoom];

    pub fn name(self) -> &'static str {
        match self {
            Self::TexturedPlane => "textured-plane",
            Self::TwoPlaneLowtex => "two-plane-lowtex",
            Self::BoxRoom => "box-room",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| MvsError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub template: Template,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    /// Gaussian image noise, in gray levels.
    pub noise: f64,
    /// Amplitude of the value-noise texture around 0.5.
    pub contrast: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            template: Template::TexturedPlane,
            views: 3,
            width: 640,
            height: 480,
            noise: 0.0,
            contrast: 0.35,
            seed: 0,
        }
    }
}

/// Rendered scene plus per-view ground truth.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub scene: Scene,
    pub depth: Vec<ScalarField<f64>>,
    /// Camera-frame normals, camera-facing.
    pub normal: Vec<VectorField<f64>>,
    /// Pixels showing a textureless surface.
    pub textureless: Vec<Vec<bool>>,
    /// Pixels whose surface point is unoccluded and in frame in at least one
    /// other view.
    pub covisible: Vec<Vec<bool>>,
}

impl SynthScene {
    /// Ground-truth world points of every view, sampled every `stride` pixels.
    pub fn gt_cloud(&self, stride: usize) -> PointCloud {
        let mut cloud = PointCloud::default();
        for (v, view) in self.scene.views.iter().enumerate() {
            let cam = &view.camera;
            for y in (0..cam.height()).step_by(stride.max(1)) {
                for x in (0..cam.width()).step_by(stride.max(1)) {
                    let (Some(d), Some(n)) = (self.depth[v].get(x, y), self.normal[v].get(x, y)) else {
                        continue;
                    };
                    let p = cam.ray(&Vector2::new(x as f64, y as f64)) * d;
                    cloud.points.push(cam.camera_to_world(&p));
                    cloud.normals.push(cam.rotation().transpose() * n);
                }
            }
        }
        cloud
    }

    /// Writes `images/`, `cams/` and `gt/` (depth and normal PFMs, textureless
    /// and covisibility masks and a ground-truth PLY).
    pub fn write(&self, dir: &Path) -> Result<()> {
        for sub in ["images", "cams", "gt"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| MvsError::io(&p, e))?;
        }
        for (v, view) in self.scene.views.iter().enumerate() {
            save_gray_png(&dir.join("images").join(format!("{}.png", view.id)), &view.image)?;
            write_camera_file(&dir.join("cams").join(format!("cam_{}.txt", view.id)), &view.camera)?;
            let gt = dir.join("gt");
            write_pfm(&gt.join(format!("depth_{}.pfm", view.id)), &PfmData::from_scalar(&self.depth[v]))?;
            write_pfm(&gt.join(format!("normal_{}.pfm", view.id)), &PfmData::from_vector(&self.normal[v]))?;
            save_mask_png(
                &gt.join(format!("textureless_{}.png", view.id)),
                view.camera.width(),
                view.camera.height(),
                &self.textureless[v],
            )?;
            save_mask_png(
                &gt.join(format!("covisible_{}.png", view.id)),
                view.camera.width(),
                view.camera.height(),
                &self.covisible[v],
            )?;
        }
        write_ply(&dir.join("gt").join("points.ply"), &self.gt_cloud(2), PlyFormat::BinaryLittleEndian)
    }
}

/// A planar patch of the scene: `n . X + d = 0` restricted by `bounds`.
struct Surface {
    normal: Vector3<f64>,
    offset: f64,
    /// In-plane axes for texture coordinates.
    u: Vector3<f64>,
    v: Vector3<f64>,
    bounds: Box<dyn Fn(&Vector3<f64>) -> bool + Send + Sync>,
    textured: Box<dyn Fn(&Vector3<f64>) -> bool + Send + Sync>,
}

impl Surface {
    fn new(
        normal: Vector3<f64>,
        point: Vector3<f64>,
        bounds: impl Fn(&Vector3<f64>) -> bool + Send + Sync + 'static,
        textured: impl Fn(&Vector3<f64>) -> bool + Send + Sync + 'static,
    ) -> Self {
        let normal = normal.normalize();
        let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = helper.cross(&normal).normalize();
        let v = normal.cross(&u);
        Self {
            normal,
            offset: -normal.dot(&point),
            u,
            v,
            bounds: Box::new(bounds),
            textured: Box::new(textured),
        }
    }
}

/// Smooth lattice noise in `[-1, 1]` with a fixed random table.
struct ValueNoise {
    table: Vec<f64>,
}

const NOISE_SIZE: usize = 256;

impl ValueNoise {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            table: (0..NOISE_SIZE * NOISE_SIZE).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        }
    }

    fn lattice(&self, i: i64, j: i64) -> f64 {
        let (i, j) = (i.rem_euclid(NOISE_SIZE as i64) as usize, j.rem_euclid(NOISE_SIZE as i64) as usize);
        self.table[j * NOISE_SIZE + i]
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = (x.floor(), y.floor());
        let (tx, ty) = (x - fx, y - fy);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (sx, sy) = (s(tx), s(ty));
        let (i, j) = (fx as i64, fy as i64);
        let a = self.lattice(i, j) + (self.lattice(i + 1, j) - self.lattice(i, j)) * sx;
        let b = self.lattice(i, j + 1) + (self.lattice(i + 1, j + 1) - self.lattice(i, j + 1)) * sx;
        a + (b - a) * sy
    }

    /// Two octaves; `cell` is the coarse lattice spacing in scene units.
    fn texture(&self, u: f64, v: f64, cell: f64) -> f64 {
        let (x, y) = (u / cell, v / cell);
        0.7 * self.sample(x, y) + 0.3 * self.sample(1.7 * x + 17.0, 1.7 * y + 31.0)
    }
}

/// Rotation (world to camera) looking from `center` toward `target`, with the
/// camera x axis kept horizontal.
fn look_at(center: &Vector3<f64>, target: &Vector3<f64>) -> Matrix3<f64> {
    let z = (target - center).normalize();
    let x = Vector3::y().cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

fn cameras(spec: &SynthSpec, target: Vector3<f64>, baseline: f64, range: [f64; 2]) -> Result<Vec<CameraModel<f64>>> {
    let (w, h) = (spec.width, spec.height);
    let f = 0.9 * w as f64;
    let pp = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut cams = vec![CameraModel::simple(f, pp, Matrix3::identity(), Vector3::zeros(), range, w, h)?];
    let others = spec.views.saturating_sub(1);
    for k in 0..others {
        let angle = std::f64::consts::TAU * k as f64 / others as f64;
        let center = Vector3::new(baseline * angle.cos(), 0.4 * baseline * angle.sin(), 0.0);
        let r = look_at(&center, &target);
        cams.push(CameraModel::simple(f, pp, r, -(r * center), range, w, h)?);
    }
    Ok(cams)
}

/// Nearest surface hit along the ray of `pixel`: `(surface index, world point, camera depth)`.
fn intersect(cam: &CameraModel<f64>, surfaces: &[Surface], pixel: &Vector2<f64>) -> Option<(usize, Vector3<f64>, f64)> {
    let origin = cam.center();
    let dir = cam.rotation().transpose() * cam.ray(pixel);
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for (i, s) in surfaces.iter().enumerate() {
        let denom = s.normal.dot(&dir);
        if denom.abs() < 1e-12 {
            continue;
        }
        let t = -(s.normal.dot(&origin) + s.offset) / denom;
        if t <= 0.0 {
            continue;
        }
        let p = origin + dir * t;
        if !(s.bounds)(&p) {
            continue;
        }
        if best.as_ref().is_none_or(|b| t < b.2) {
            best = Some((i, p, t));
        }
    }
    // `dir` has unit camera z, so the ray parameter is the z-depth.
    best
}

fn surfaces(template: Template, reference: &CameraModel<f64>) -> (Vec<Surface>, Vector3<f64>, f64, [f64; 2]) {
    let all = |_: &Vector3<f64>| true;
    match template {
        Template::TexturedPlane => {
            let s = Surface::new(Vector3::new(0.15, -0.1, -1.0), Vector3::new(0.0, 0.0, 5.0), all, all);
            (vec![s], Vector3::new(0.0, 0.0, 5.0), 0.5, [2.0, 10.0])
        }
        Template::TwoPlaneLowtex => {
            let (w, h) = (reference.width() as f64, reference.height() as f64);
            let k = *reference.intrinsics();
            let wall_z = 6.0;
            // Crease where the wall meets the floor, at image row h/2.
            let yc = wall_z * (h / 2.0 - 0.5 - k[(1, 2)]) / k[(1, 1)];
            let slope = 1.5;
            let (fx, cx) = (k[(0, 0)], k[(0, 2)]);
            // Textureless: points seen by the reference in columns [w/4, 3w/4).
            let (lo, hi) = (w / 4.0 - 0.5, 3.0 * w / 4.0 - 0.5);
            let textured = move |p: &Vector3<f64>| {
                let u = fx * p.x / p.z + cx;
                !(u >= lo && u < hi)
            };
            let wall = Surface::new(Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.0, yc, wall_z), move |p| p.y <= yc, textured);
            let floor = Surface::new(
                Vector3::new(0.0, -slope, -1.0),
                Vector3::new(0.0, yc, wall_z),
                move |p| p.y >= yc,
                textured,
            );
            (vec![wall, floor], Vector3::new(0.0, 0.0, wall_z), 0.5, [2.0, 12.0])
        }
        Template::BoxRoom => {
            let (hx, hy, back) = (2.5, 1.8, 7.0);
            let inside = move |p: &Vector3<f64>| p.x.abs() <= hx + 1e-9 && p.y.abs() <= hy + 1e-9 && p.z <= back + 1e-9;
            let left_half = |p: &Vector3<f64>| p.y < 0.0;
            let s = vec![
                Surface::new(Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.0, 0.0, back), inside, |_: &Vector3<f64>| false),
                Surface::new(Vector3::new(0.0, -1.0, 0.0), Vector3::new(0.0, hy, 0.0), inside, all),
                Surface::new(Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, -hy, 0.0), inside, left_half),
                Surface::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(-hx, 0.0, 0.0), inside, all),
                Surface::new(Vector3::new(-1.0, 0.0, 0.0), Vector3::new(hx, 0.0, 0.0), inside, all),
            ];
            (s, Vector3::new(0.0, 0.0, back), 0.35, [0.3, 12.0])
        }
    }
}

/// Renders `spec` with exact per-pixel ground truth.
pub fn render(spec: &SynthSpec) -> Result<SynthScene> {
    if spec.views < 1 || spec.width < 8 || spec.height < 8 {
        return Err(MvsError::invalid("synthetic scene needs a view and at least 8x8 pixels"));
    }
    let probe = CameraModel::simple(
        0.9 * spec.width as f64,
        ((spec.width as f64 - 1.0) / 2.0, (spec.height as f64 - 1.0) / 2.0),
        Matrix3::identity(),
        Vector3::zeros(),
        [1.0, 2.0],
        spec.width,
        spec.height,
    )?;
    let (surfs, target, baseline, range) = surfaces(spec.template, &probe);
    let cams = cameras(spec, target, baseline, range)?;
    let noise = ValueNoise::new(spec.seed);
    // Lattice spacing of about 12 reference pixels at the target depth.
    let cell = 12.0 * target.z / cams[0].intrinsics()[(0, 0)];

    let mut out = SynthScene {
        scene: Scene::default(),
        depth: Vec::new(),
        normal: Vec::new(),
        textureless: Vec::new(),
        covisible: Vec::new(),
    };
    for (v, cam) in cams.into_iter().enumerate() {
        let (w, h) = (spec.width, spec.height);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0xA5A5 + v as u64));
        let mut img = vec![0.5f32; w * h];
        let mut depth = vec![0.0; w * h];
        let mut normal = vec![Vector3::zeros(); w * h];
        let mut valid = vec![false; w * h];
        let mut flat = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let px = Vector2::new(x as f64, y as f64);
                let mut value = 0.5;
                if let Some((s, p, d)) = intersect(&cam, &surfs, &px) {
                    let surf = &surfs[s];
                    if (surf.textured)(&p) {
                        let t = noise.texture(surf.u.dot(&p) + 100.0 * s as f64, surf.v.dot(&p), cell);
                        value = 0.5 + spec.contrast * t;
                    } else {
                        flat[i] = true;
                    }
                    depth[i] = d;
                    let n_cam = cam.rotation() * surf.normal;
                    normal[i] = if n_cam.dot(&cam.ray(&px)) < 0.0 { n_cam } else { -n_cam };
                    valid[i] = cam.contains_depth(d);
                }
                if spec.noise > 0.0 {
                    value += spec.noise / 255.0 * rng.sample::<f64, _>(StandardNormal);
                }
                // Quantize as an 8-bit image would be.
                img[i] = ((value.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32;
            }
        }
        let id = format!("{v:04}");
        out.scene.views.push(View {
            id,
            camera: cam,
            image: Image::new(w, h, img)?,
        });
        out.depth.push(ScalarField::new(w, h, depth, valid.clone())?);
        out.normal.push(VectorField::new(w, h, normal, valid)?);
        out.textureless.push(flat);
    }
    out.covisible = (0..out.scene.len()).map(|v| covisibility(&out, v)).collect();
    Ok(out)
}

fn covisibility(s: &SynthScene, v: usize) -> Vec<bool> {
    let cam = &s.scene.views[v].camera;
    let (w, h) = (cam.width(), cam.height());
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let Some(d) = s.depth[v].get(x, y) else { continue };
            let world = cam.camera_to_world(&(cam.ray(&Vector2::new(x as f64, y as f64)) * d));
            mask[y * w + x] = s.scene.views.iter().enumerate().any(|(o, other)| {
                let c = &other.camera;
                let local = c.world_to_camera(&world);
                o != v
                    && c.project(&local).is_some_and(|q| {
                        let (qx, qy) = (q.x.round(), q.y.round());
                        c.in_bounds(&q)
                            && s.depth[o]
                                .get(qx as usize, qy as usize)
                                .is_some_and(|z| (z - local.z).abs() <= 1e-2 * local.z)
                    })
            });
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{homography, warp, Hypothesis, PlaneParams};

    fn small(template: Template) -> SynthScene {
        render(&SynthSpec {
            template,
            views: 3,
            width: 160,
            height: 120,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn textured_plane_depth_is_analytic() {
        let s = small(Template::TexturedPlane);
        let cam = &s.scene.views[0].camera;
        let plane = PlaneParams::from_point_normal(&Vector3::new(0.0, 0.0, 5.0), &Vector3::new(0.15, -0.1, -1.0).normalize());
        for y in 0..120 {
            for x in 0..160 {
                let d = s.depth[0].get(x, y).unwrap();
                let p = cam.ray(&Vector2::new(x as f64, y as f64)) * d;
                assert!(plane.residual(&p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lowtex_mask_is_the_central_band() {
        let s = small(Template::TwoPlaneLowtex);
        let mask = &s.textureless[0];
        for y in 0..120 {
            for x in 0..160 {
                assert_eq!(mask[y * 160 + x], (40..120).contains(&x), "({x},{y})");
            }
        }
        assert_eq!(mask.iter().filter(|m| **m).count(), 160 * 120 / 2);
    }

    #[test]
    fn warped_view_matches_reference() {
        let s = small(Template::TexturedPlane);
        let (a, b) = (&s.scene.views[0], &s.scene.views[1]);
        let mut worst: f64 = 0.0;
        for y in 0..120 {
            for x in 0..160 {
                let px = Vector2::new(x as f64, y as f64);
                let h = Hypothesis::new(s.depth[0].get(x, y).unwrap(), s.normal[0].get(x, y).unwrap(), &a.camera.ray(&px));
                let hom = homography(&a.camera, &b.camera, &px, &h).unwrap();
                let q = warp(&hom, &px).unwrap();
                if b.camera.in_bounds(&q) {
                    let diff = (b.image.sample_clamped(q.x, q.y) - a.image.get(x, y)).abs() as f64 * 255.0;
                    worst = worst.max(diff);
                }
            }
        }
        assert!(worst < 2.0, "worst {worst} gray levels");
    }

    #[test]
    fn box_room_has_five_planes_and_mixed_texture() {
        let s = small(Template::BoxRoom);
        assert!(s.depth[0].valid_count() == 160 * 120);
        let flat = s.textureless[0].iter().filter(|m| **m).count();
        assert!(flat > 0 && flat < 160 * 120);
        assert!(matches!(Template::parse("nope"), Err(MvsError::UnknownTemplate(_))));
    }

    #[test]
    fn covisibility_marks_the_unobserved_border() {
        let s = small(Template::TexturedPlane);
        let frac = |v: usize| s.covisible[v].iter().filter(|m| **m).count() as f64 / (160.0 * 120.0);
        assert!(frac(0) > 0.95);
        assert!(frac(1) < 1.0 && frac(2) < 1.0);
        let alone = render(&SynthSpec {
            views: 1,
            width: 40,
            height: 30,
            ..SynthSpec::default()
        })
        .unwrap();
        assert!(alone.covisible[0].iter().all(|m| !m));
    }
}
