//! Multi-view consistency fusion of depth maps and point-cloud metrics.

mod metrics;
mod ply;

use nalgebra::{Vector2, Vector3};

use crate::error::{MvsError, Result};
use crate::patchmatch::DepthNormalMap;
use crate::scene::Scene;

pub use metrics::{evaluate, evaluate_depth, DepthErrors, Metrics};
pub use ply::{read_ply, write_ply, PlyFormat};

/// Points in the world frame with unit normals and optional colors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks parallel-array lengths and unit normals.
    pub fn validate(&self) -> Result<()> {
        if self.normals.len() != self.points.len() {
            return Err(MvsError::invalid("point and normal counts differ"));
        }
        if self.colors.as_ref().is_some_and(|c| c.len() != self.points.len()) {
            return Err(MvsError::invalid("point and color counts differ"));
        }
        if self.normals.iter().any(|n| (n.norm() - 1.0).abs() > 1e-4) {
            return Err(MvsError::invalid("normals must be unit length"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Views that must agree, counting the seed view.
    pub min_consistent: usize,
    /// Round-trip reprojection error, in pixels.
    pub max_reproj: f64,
    pub max_rel_depth_diff: f64,
    /// Degrees.
    pub max_normal_angle: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            min_consistent: 2,
            max_reproj: 2.0,
            max_rel_depth_diff: 0.01,
            max_normal_angle: 30.0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.max_reproj > 0.0 && self.max_rel_depth_diff > 0.0 && self.max_normal_angle > 0.0;
        if self.min_consistent == 0 || !positive {
            return Err(MvsError::invalid("fusion thresholds must be positive"));
        }
        Ok(())
    }
}

/// Fuses one map per view into a point cloud.
///
/// Seeds are visited view by view in row-major order. A seed emits the mean
/// of its own point and all agreeing observations, and every contributing
/// pixel is then marked visited so it is never emitted again.
pub fn fuse(scene: &Scene, maps: &[DepthNormalMap], cfg: &FusionConfig) -> Result<PointCloud> {
    cfg.validate()?;
    if maps.len() != scene.len() {
        return Err(MvsError::invalid(format!("{} maps for {} views", maps.len(), scene.len())));
    }
    for (view, map) in scene.views.iter().zip(maps) {
        if map.width() != view.camera.width() || map.height() != view.camera.height() {
            return Err(MvsError::invalid(format!("map size does not match view {}", view.id)));
        }
    }
    let cos_max = cfg.max_normal_angle.to_radians().cos();
    let mut visited: Vec<Vec<bool>> = maps.iter().map(|m| vec![false; m.len()]).collect();
    let mut cloud = PointCloud {
        colors: Some(Vec::new()),
        ..PointCloud::default()
    };
    let observe = |v: usize, x: usize, y: usize| {
        let cam = &scene.views[v].camera;
        let h = maps[v].hypothesis(x, y);
        let p = cam.ray(&Vector2::new(x as f64, y as f64)) * h.depth;
        (cam.camera_to_world(&p), cam.rotation().transpose() * h.normal)
    };

    for r in 0..scene.len() {
        let (w, h) = (maps[r].width(), maps[r].height());
        let ref_cam = &scene.views[r].camera;
        for y in 0..h {
            for x in 0..w {
                if !maps[r].is_valid(x, y) || visited[r][y * w + x] {
                    continue;
                }
                let (point, normal) = observe(r, x, y);
                let mut members = vec![(r, y * w + x)];
                let (mut sum_p, mut sum_n) = (point, normal);
                let mut gray = scene.views[r].image.get(x, y) as f64;
                for s in 0..scene.len() {
                    if s == r {
                        continue;
                    }
                    let cam = &scene.views[s].camera;
                    let local = cam.world_to_camera(&point);
                    let Some(q) = cam.project(&local) else { continue };
                    let (sx, sy) = (q.x.round(), q.y.round());
                    if sx < 0.0 || sy < 0.0 || sx >= cam.width() as f64 || sy >= cam.height() as f64 {
                        continue;
                    }
                    let (sx, sy) = (sx as usize, sy as usize);
                    let si = sy * cam.width() + sx;
                    if !maps[s].is_valid(sx, sy) || visited[s][si] {
                        continue;
                    }
                    let looked_up = maps[s].hypothesis(sx, sy).depth;
                    if ((local.z - looked_up) / looked_up).abs() > cfg.max_rel_depth_diff {
                        continue;
                    }
                    let (back, back_n) = observe(s, sx, sy);
                    let Some(round_trip) = ref_cam.project(&ref_cam.world_to_camera(&back)) else {
                        continue;
                    };
                    if (round_trip - Vector2::new(x as f64, y as f64)).norm() > cfg.max_reproj {
                        continue;
                    }
                    if normal.dot(&back_n) < cos_max {
                        continue;
                    }
                    members.push((s, si));
                    sum_p += back;
                    sum_n += back_n;
                    gray += scene.views[s].image.get(sx, sy) as f64;
                }
                if members.len() < cfg.min_consistent {
                    continue;
                }
                let k = members.len() as f64;
                let n = sum_n.try_normalize(1e-12).unwrap_or(normal);
                let g = ((gray / k).clamp(0.0, 1.0) * 255.0).round() as u8;
                cloud.points.push(sum_p / k);
                cloud.normals.push(n);
                cloud.colors.as_mut().unwrap().push([g; 3]);
                for (v, i) in members {
                    visited[v][i] = true;
                }
            }
        }
    }
    Ok(cloud)
}
