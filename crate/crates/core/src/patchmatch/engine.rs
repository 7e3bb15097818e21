//! Checkerboard PatchMatch driver: initialization, propagation with
//! extensible non-local regions, refinement and validity.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::PropagationConfig;
use super::cost::{
    aggregate_cost, extension_threshold, row_is_reliable, top_k_mean, view_weights, CostMatrix,
    PatchParams, RefPatch, MAX_COST,
};
use super::geometric::GeoLink;
use super::regions::SamplingRegions;
use super::rng::pixel_rng;
use super::state::DepthNormalMap;
use crate::error::{MvsError, Result};
use crate::geometry::{axis_angle, homography_from_pose, orient_towards_camera, CameraModel, Hypothesis};
use crate::prior::{prior_assisted_cost, PlanarPriorModel, PriorConfig};
use crate::scene::{Scene, View};

/// Pixel color on the checkerboard: red pixels have even `x + y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Red,
    Black,
}

impl Color {
    fn parity(self) -> usize {
        match self {
            Self::Red => 0,
            Self::Black => 1,
        }
    }
}

/// Hypotheses plus the per-pixel view weights chosen by the last propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatchState {
    pub map: DepthNormalMap,
    sources: usize,
    weights: Vec<f64>,
}

impl PatchMatchState {
    pub fn new(map: DepthNormalMap, sources: usize) -> Self {
        let weights = vec![1.0; map.len() * sources];
        Self {
            map,
            sources,
            weights,
        }
    }

    pub fn weights(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.map.width() + x) * self.sources;
        &self.weights[i..i + self.sources]
    }

    pub fn into_map(self) -> DepthNormalMap {
        self.map
    }
}

struct Source<'a> {
    view: &'a View,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    geo: Option<GeoLink<'a>>,
}

struct Update {
    x: usize,
    y: usize,
    best: Option<(Hypothesis<f64>, f64, f64)>,
    weights: Option<Vec<f64>>,
}

#[derive(Default)]
struct Scratch {
    photo: Vec<f64>,
    geo: Vec<f64>,
    rows_geo: Vec<f64>,
    samples: Vec<(f64, usize, usize)>,
}

/// One PatchMatch configuration for a reference view: the objective
/// (photometric, optionally prior-assisted and geometric) and the schedule.
pub struct PatchMatch<'a> {
    reference: &'a View,
    view_index: usize,
    cfg: &'a PropagationConfig,
    patch: PatchParams,
    regions: SamplingRegions,
    sources: Vec<Source<'a>>,
    prior: Option<(&'a PlanarPriorModel, &'a PriorConfig)>,
    geometric: bool,
    stage: u64,
}

impl<'a> PatchMatch<'a> {
    /// Every other view of `scene` serves as a source.
    pub fn new(scene: &'a Scene, view_index: usize, cfg: &'a PropagationConfig) -> Result<Self> {
        scene.require_views(2)?;
        cfg.validate()?;
        let reference = scene
            .views
            .get(view_index)
            .ok_or_else(|| MvsError::invalid(format!("no view {view_index}")))?;
        let sources = scene
            .views
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != view_index)
            .map(|(_, v)| {
                let (r, t) = reference.camera.relative_pose(&v.camera);
                Source {
                    view: v,
                    r,
                    t,
                    geo: None,
                }
            })
            .collect();
        Ok(Self {
            reference,
            view_index,
            cfg,
            patch: PatchParams::from(cfg),
            regions: SamplingRegions::new(cfg.effective_radius(), cfg.effective_extensions()),
            sources,
            prior: None,
            geometric: false,
            stage: 0,
        })
    }

    /// Adds the prior-assistance term.
    pub fn with_prior(mut self, model: &'a PlanarPriorModel, cfg: &'a PriorConfig) -> Result<Self> {
        let cam = &self.reference.camera;
        if model.width() != cam.width() || model.height() != cam.height() {
            return Err(MvsError::invalid("prior model size differs from the reference image"));
        }
        self.prior = Some((model, cfg));
        Ok(self)
    }

    /// Adds the geometric-consistency term against `maps` (one per scene view;
    /// the reference entry is ignored).
    pub fn with_geometry(mut self, scene: &'a Scene, maps: &'a [DepthNormalMap]) -> Result<Self> {
        if maps.len() != scene.len() {
            return Err(MvsError::invalid("need one depth map per view"));
        }
        let reference = &self.reference.camera;
        let others = (0..scene.len()).filter(|j| *j != self.view_index);
        for (src, j) in self.sources.iter_mut().zip(others) {
            let cam = &scene.views[j].camera;
            if maps[j].width() != cam.width() || maps[j].height() != cam.height() {
                return Err(MvsError::invalid(format!("depth map {j} has the wrong size")));
            }
            src.geo = Some(GeoLink::new(reference, cam, &maps[j]));
        }
        self.geometric = true;
        Ok(self)
    }

    /// Distinguishes RNG streams of successive stages on the same view.
    pub fn with_stage(mut self, stage: u64) -> Self {
        self.stage = stage;
        self
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn regions(&self) -> &SamplingRegions {
        &self.regions
    }

    fn camera(&self) -> &CameraModel<f64> {
        &self.reference.camera
    }

    fn width(&self) -> usize {
        self.reference.image.width()
    }

    fn height(&self) -> usize {
        self.reference.image.height()
    }

    fn rng_key(&self, t_iter: usize, pass: u64, x: usize, y: usize) -> [u64; 5] {
        [
            self.view_index as u64,
            self.stage,
            t_iter as u64,
            pass,
            (y * self.width() + x) as u64,
        ]
    }

    fn eval_views(&self, patch: &RefPatch, px: &Vector2<f64>, h: &Hypothesis<f64>, photo: &mut [f64], geo: &mut [f64]) {
        let cam = self.camera();
        for (j, s) in self.sources.iter().enumerate() {
            photo[j] = match homography_from_pose(cam, &s.view.camera, &s.r, &s.t, px, h) {
                Ok(hom) => patch.cost(&s.view.image, &hom),
                Err(_) => MAX_COST,
            };
            if let Some(g) = &s.geo {
                geo[j] = g.cost(px, h.depth, self.cfg.geom_clamp);
            }
        }
    }

    fn objective(&self, x: usize, y: usize, h: &Hypothesis<f64>, photo: f64, geo: f64) -> f64 {
        let mut c = photo;
        if let Some((model, pcfg)) = self.prior {
            c = prior_assisted_cost(c, h, model.get(x, y), pcfg);
        }
        if self.geometric {
            c += self.cfg.geom_weight * geo;
        }
        c
    }

    /// Objective and photometric cost of `h` at `(x, y)` under the state's
    /// current view weights.
    pub fn score(&self, state: &PatchMatchState, x: usize, y: usize, h: &Hypothesis<f64>) -> Option<(f64, f64)> {
        let patch = RefPatch::new(&self.reference.image, x, y, &self.patch)?;
        let mut sc = self.scratch();
        let px = Vector2::new(x as f64, y as f64);
        self.eval_views(&patch, &px, h, &mut sc.photo, &mut sc.geo);
        let p = aggregate_cost(&sc.photo, state.weights(x, y));
        let g = aggregate_cost(&sc.geo, state.weights(x, y));
        Some((self.objective(x, y, h, p, g), p))
    }

    fn prior_at(&self, x: usize, y: usize) -> Option<&Hypothesis<f64>> {
        self.prior.and_then(|(m, _)| m.get(x, y))
    }

    /// Scores `h` with the mean of the `k` best views (no view weights yet).
    fn score_top_k(&self, patch: &RefPatch, x: usize, y: usize, h: &Hypothesis<f64>, sc: &mut Scratch) -> (f64, f64) {
        let px = Vector2::new(x as f64, y as f64);
        self.eval_views(patch, &px, h, &mut sc.photo, &mut sc.geo);
        let photo = top_k_mean(&sc.photo, self.cfg.top_k);
        let geo = sc.geo.iter().sum::<f64>() / sc.geo.len() as f64;
        (self.objective(x, y, h, photo, geo), photo)
    }

    fn scratch(&self) -> Scratch {
        let n = self.sources.len();
        Scratch {
            photo: vec![MAX_COST; n],
            geo: vec![self.cfg.geom_clamp; n],
            rows_geo: vec![self.cfg.geom_clamp; CostMatrix::ROWS * n],
            samples: Vec::new(),
        }
    }

    /// Random hypotheses scored by the mean of the `k` best views.
    pub fn random_init(&self) -> PatchMatchState {
        let (w, h) = (self.width(), self.height());
        let mut state = PatchMatchState::new(DepthNormalMap::invalid(w, h), self.sources.len());
        let rows: Vec<Vec<(Hypothesis<f64>, f64, f64)>> = (0..h)
            .into_par_iter()
            .map_init(
                || self.scratch(),
                |sc, y| {
                    (0..w)
                        .map(|x| {
                            let mut rng = pixel_rng(self.cfg.seed, &self.rng_key(0, 0, x, y));
                            let hyp = random_hypothesis(&mut rng, self.camera(), x, y);
                            match RefPatch::new(&self.reference.image, x, y, &self.patch) {
                                Some(patch) => {
                                    let (c, p) = self.score_top_k(&patch, x, y, &hyp, sc);
                                    (hyp, c, p)
                                }
                                None => {
                                    let c = self.objective(x, y, &hyp, MAX_COST, self.cfg.geom_clamp);
                                    (hyp, c, MAX_COST)
                                }
                            }
                        })
                        .collect()
                },
            )
            .collect();
        for (y, row) in rows.into_iter().enumerate() {
            for (x, (hyp, c, p)) in row.into_iter().enumerate() {
                state.map.set(x, y, &hyp, c, p, false);
            }
        }
        state
    }

    /// Re-scores every pixel under this objective (view weights reset) and,
    /// when a prior is present, adopts the prior hypothesis where it scores
    /// better. Used when the objective changes between stages.
    pub fn rescore(&self, state: &mut PatchMatchState) {
        let (w, h) = (self.width(), self.height());
        let map = &state.map;
        let rows: Vec<Vec<(Hypothesis<f64>, f64, f64)>> = (0..h)
            .into_par_iter()
            .map_init(
                || self.scratch(),
                |sc, y| {
                    (0..w)
                        .map(|x| {
                            let cur = map.hypothesis(x, y);
                            let patch = RefPatch::new(&self.reference.image, x, y, &self.patch);
                            let mut score = |hyp: &Hypothesis<f64>| match &patch {
                                Some(p) => self.score_top_k(p, x, y, hyp, sc),
                                None => {
                                    let geo = self.geo_mean(x, y, hyp);
                                    (self.objective(x, y, hyp, MAX_COST, geo), MAX_COST)
                                }
                            };
                            let (c, p) = score(&cur);
                            let mut best = (cur, c, p);
                            if let Some(ph) = self.prior_at(x, y) {
                                let (pc, pp) = score(ph);
                                if pc < best.1 {
                                    best = (*ph, pc, pp);
                                }
                            }
                            best
                        })
                        .collect()
                },
            )
            .collect();
        for (y, row) in rows.into_iter().enumerate() {
            for (x, (hyp, c, p)) in row.into_iter().enumerate() {
                let valid = state.map.is_valid(x, y);
                state.map.set(x, y, &hyp, c, p, valid);
            }
        }
        state.weights.iter_mut().for_each(|v| *v = 1.0);
    }

    fn geo_mean(&self, x: usize, y: usize, h: &Hypothesis<f64>) -> f64 {
        if !self.geometric {
            return self.cfg.geom_clamp;
        }
        let px = Vector2::new(x as f64, y as f64);
        let sum: f64 = self
            .sources
            .iter()
            .map(|s| s.geo.as_ref().map_or(self.cfg.geom_clamp, |g| g.cost(&px, h.depth, self.cfg.geom_clamp)))
            .sum();
        sum / self.sources.len() as f64
    }

    /// Runs `iterations` rounds of red/black propagation then red/black
    /// refinement. With `trace`, the stored costs after every step are recorded.
    pub fn run(&self, state: &mut PatchMatchState, mut trace: Option<&mut Vec<Vec<f64>>>) {
        for t in 1..=self.cfg.iterations {
            for step in 0..4 {
                let color = if step % 2 == 0 { Color::Red } else { Color::Black };
                if step < 2 {
                    self.propagate(state, t, color);
                } else {
                    self.refine(state, t, color);
                }
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(state.map.costs().to_vec());
                }
            }
        }
    }

    fn apply(&self, state: &mut PatchMatchState, updates: Vec<Vec<Update>>) {
        let n = self.sources.len();
        let w = self.width();
        for u in updates.into_iter().flatten() {
            if let Some((hyp, c, p)) = u.best {
                let valid = state.map.is_valid(u.x, u.y);
                state.map.set(u.x, u.y, &hyp, c, p, valid);
            }
            if let Some(wt) = u.weights {
                let i = (u.y * w + u.x) * n;
                state.weights[i..i + n].copy_from_slice(&wt);
            }
        }
    }

    fn pass(&self, state: &PatchMatchState, color: Color, f: impl Fn(&PatchMatchState, usize, usize, &mut Scratch) -> Option<Update> + Sync) -> Vec<Vec<Update>> {
        let (w, h) = (self.width(), self.height());
        (0..h)
            .into_par_iter()
            .map_init(
                || self.scratch(),
                |sc, y| {
                    let x0 = (color.parity() + y) % 2;
                    (x0..w).step_by(2).filter_map(|x| f(state, x, y, sc)).collect()
                },
            )
            .collect()
    }

    /// One checkerboard propagation pass over pixels of `color`.
    pub fn propagate(&self, state: &mut PatchMatchState, t_iter: usize, color: Color) {
        let updates = self.pass(state, color, |st, x, y, sc| self.propagate_pixel(st, x, y, t_iter, sc));
        self.apply(state, updates);
    }

    /// Lowest-cost sample (ties: first in region order) whose plane reaches
    /// the pixel ray in front of the camera and within range.
    fn best_sample(
        &self,
        map: &DepthNormalMap,
        samples: &[(i32, i32)],
        x: usize,
        y: usize,
        ray: &Vector3<f64>,
        sc: &mut Scratch,
    ) -> Option<(usize, Hypothesis<f64>)> {
        let (w, h) = (self.width() as i64, self.height() as i64);
        sc.samples.clear();
        for (k, &(dx, dy)) in samples.iter().enumerate() {
            let (sx, sy) = (x as i64 + dx as i64, y as i64 + dy as i64);
            if sx >= 0 && sy >= 0 && sx < w && sy < h {
                let (sx, sy) = (sx as usize, sy as usize);
                sc.samples.push((map.cost(sx, sy), k, sy * w as usize + sx));
            }
        }
        sc.samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let cam = self.camera();
        for &(_, _, idx) in &sc.samples {
            let (sx, sy) = (idx % w as usize, idx / w as usize);
            if let Some(hyp) = transfer(cam, &map.hypothesis(sx, sy), sx, sy, ray) {
                return Some((idx, hyp));
            }
        }
        None
    }

    fn propagate_pixel(&self, st: &PatchMatchState, x: usize, y: usize, t_iter: usize, sc: &mut Scratch) -> Option<Update> {
        let patch = RefPatch::new(&self.reference.image, x, y, &self.patch)?;
        let map = &st.map;
        let n = self.sources.len();
        let px = Vector2::new(x as f64, y as f64);
        let ray = self.camera().ray(&px);
        let mut m = CostMatrix::new(n);
        let mut cands: [Option<Hypothesis<f64>>; 8] = [None; 8];
        let max_level = self.regions.max_level();
        let mut photo = std::mem::take(&mut sc.photo);
        let mut geo = std::mem::take(&mut sc.geo);
        let mut rows_geo = std::mem::take(&mut sc.rows_geo);
        for (i, region) in self.regions.regions().iter().enumerate() {
            let mut current: Option<usize> = None;
            let mut level = 0;
            loop {
                if let Some((idx, hyp)) = self.best_sample(map, region.samples(level), x, y, &ray, sc) {
                    if current != Some(idx) {
                        current = Some(idx);
                        self.eval_views(&patch, &px, &hyp, &mut photo, &mut geo);
                        m.set_row(i, &photo);
                        rows_geo[i * n..(i + 1) * n].copy_from_slice(&geo);
                        cands[i] = Some(hyp);
                    }
                }
                if level >= max_level {
                    break;
                }
                let tau = extension_threshold(self.cfg.tau_good, self.cfg.alpha, self.cfg.max_extensions, t_iter, level);
                if m.row(i).is_some_and(|r| row_is_reliable(r, tau, self.cfg)) {
                    break;
                }
                level += 1;
            }
        }
        let weights = view_weights(&m, self.cfg).weights;
        let mut best: Option<(Hypothesis<f64>, f64, f64)> = None;
        let mut best_cost = map.cost(x, y);
        for (i, cand) in cands.iter().enumerate() {
            let (Some(hyp), Some(row)) = (cand, m.row(i)) else {
                continue;
            };
            let p = aggregate_cost(row, &weights);
            let g = aggregate_cost(&rows_geo[i * n..(i + 1) * n], &weights);
            let c = self.objective(x, y, hyp, p, g);
            if c < best_cost {
                best_cost = c;
                best = Some((*hyp, c, p));
            }
        }
        sc.photo = photo;
        sc.geo = geo;
        sc.rows_geo = rows_geo;
        Some(Update {
            x,
            y,
            best,
            weights: Some(weights),
        })
    }

    /// One refinement pass over pixels of `color`.
    pub fn refine(&self, state: &mut PatchMatchState, t_iter: usize, color: Color) {
        let updates = self.pass(state, color, |st, x, y, sc| self.refine_pixel(st, x, y, t_iter, color, sc));
        self.apply(state, updates);
    }

    /// The seven refinement members for the incumbent `h`, incumbent first.
    pub fn ensemble(&self, rng: &mut impl Rng, x: usize, y: usize, h: &Hypothesis<f64>, t_iter: usize) -> [Hypothesis<f64>; 7] {
        let cam = self.camera();
        let [dmin, dmax] = cam.depth_range();
        let ray = cam.ray(&Vector2::new(x as f64, y as f64));
        let shrink = 0.5f64.powi(t_iter.saturating_sub(1) as i32);
        let delta = self.cfg.depth_perturbation * shrink;
        let delta_n = self.cfg.normal_perturbation_deg.to_radians() * shrink;
        let d_p = (h.depth * (1.0 + rng.random_range(-delta..=delta))).clamp(dmin, dmax);
        let axis = random_unit(rng);
        let angle = rng.random_range(0.0..=delta_n);
        let n_p = orient_towards_camera((axis_angle(&axis, angle) * h.normal).normalize(), &ray);
        let d_r = rng.random_range(dmin..=dmax);
        let n_r = orient_towards_camera(random_unit(rng), &ray);
        let (d, n) = (h.depth, h.normal);
        let mk = |depth: f64, normal: Vector3<f64>| Hypothesis { depth, normal };
        [
            mk(d, n),
            mk(d, n_p),
            mk(d, n_r),
            mk(d_r, n),
            mk(d_r, n_r),
            mk(d_p, n),
            mk(d_p, n_p),
        ]
    }

    fn refine_pixel(&self, st: &PatchMatchState, x: usize, y: usize, t_iter: usize, color: Color, sc: &mut Scratch) -> Option<Update> {
        let patch = RefPatch::new(&self.reference.image, x, y, &self.patch)?;
        let map = &st.map;
        let px = Vector2::new(x as f64, y as f64);
        let mut rng = pixel_rng(self.cfg.seed, &self.rng_key(t_iter, 2 + color.parity() as u64, x, y));
        let members = self.ensemble(&mut rng, x, y, &map.hypothesis(x, y), t_iter);
        let weights = st.weights(x, y);
        let mut best = None;
        let mut best_cost = map.cost(x, y);
        let (mut photo, mut geo) = (std::mem::take(&mut sc.photo), std::mem::take(&mut sc.geo));
        for hyp in &members[1..] {
            self.eval_views(&patch, &px, hyp, &mut photo, &mut geo);
            let p = aggregate_cost(&photo, weights);
            let g = aggregate_cost(&geo, weights);
            let c = self.objective(x, y, hyp, p, g);
            if c < best_cost {
                best_cost = c;
                best = Some((*hyp, c, p));
            }
        }
        sc.photo = photo;
        sc.geo = geo;
        best.map(|b| Update {
            x,
            y,
            best: Some(b),
            weights: None,
        })
    }

    /// Marks pixels valid when the photometric cost is informative, a prior
    /// covers them, or (with geometry) they reproject consistently.
    pub fn finalize(&self, state: &mut PatchMatchState) {
        let (w, h) = (self.width(), self.height());
        let cam = self.camera();
        for y in 0..h {
            for x in 0..w {
                let hyp = state.map.hypothesis(x, y);
                let mut valid = state.map.photo_cost(x, y) < MAX_COST || self.prior_at(x, y).is_some();
                if !valid && self.geometric {
                    let px = Vector2::new(x as f64, y as f64);
                    let geo: Vec<f64> = self
                        .sources
                        .iter()
                        .map(|s| s.geo.as_ref().map_or(self.cfg.geom_clamp, |g| g.cost(&px, hyp.depth, self.cfg.geom_clamp)))
                        .collect();
                    valid = aggregate_cost(&geo, state.weights(x, y)) < self.cfg.geom_clamp;
                }
                valid &= cam.contains_depth(hyp.depth);
                let i = y * w + x;
                state.map.valid[i] = valid;
            }
        }
    }
}

/// Depth where the plane of `h` (seen at pixel `(sx, sy)`) meets `ray`.
fn transfer(cam: &CameraModel<f64>, h: &Hypothesis<f64>, sx: usize, sy: usize, ray: &Vector3<f64>) -> Option<Hypothesis<f64>> {
    let denom = h.normal.dot(ray);
    if denom >= -1e-12 {
        return None;
    }
    let point = cam.ray(&Vector2::new(sx as f64, sy as f64)) * h.depth;
    let depth = h.normal.dot(&point) / denom;
    cam.contains_depth(depth).then_some(Hypothesis {
        depth,
        normal: h.normal,
    })
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Uniform depth in the camera's range and a camera-facing normal uniform on
/// the visible hemisphere.
pub fn random_hypothesis(rng: &mut impl Rng, camera: &CameraModel<f64>, x: usize, y: usize) -> Hypothesis<f64> {
    let [dmin, dmax] = camera.depth_range();
    let depth = rng.random_range(dmin..=dmax);
    let ray = camera.ray(&Vector2::new(x as f64, y as f64));
    Hypothesis {
        depth,
        normal: orient_towards_camera(random_unit(rng), &ray),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_scene() -> Scene {
        let tex = |dx: f64| {
            Image::from_fn(48, 40, move |x, y| {
                let u = x as f64 + dx;
                (0.5 + 0.2 * (u * 0.9).sin() * (y as f64 * 0.7).cos() + 0.15 * (u * 0.31 + y as f64 * 0.53).sin()) as f32
            })
        };
        let cam = |tx: f64| {
            CameraModel::simple(50.0, (23.5, 19.5), Matrix3::identity(), Vector3::new(tx, 0.0, 0.0), [1.0, 6.0], 48, 40)
                .unwrap()
        };
        // Fronto-parallel plane at depth 2.5: a baseline of 0.1 shifts by 2 px.
        Scene::new(vec![
            View {
                id: "0".into(),
                camera: cam(0.0),
                image: tex(0.0),
            },
            View {
                id: "1".into(),
                camera: cam(-0.1),
                image: tex(2.0),
            },
        ])
    }

    #[test]
    fn single_view_is_rejected() {
        let mut scene = tiny_scene();
        scene.views.truncate(1);
        let cfg = PropagationConfig::default();
        assert!(matches!(PatchMatch::new(&scene, 0, &cfg), Err(MvsError::InsufficientViews { needed: 2, got: 1 })));
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let scene = tiny_scene();
        let cfg = PropagationConfig::default();
        let pm = PatchMatch::new(&scene, 0, &cfg).unwrap();
        let a = pm.random_init();
        let b = pm.random_init();
        assert_eq!(a, b);
        for y in 0..40 {
            for x in 0..48 {
                let h = a.map.hypothesis(x, y);
                assert!((1.0..=6.0).contains(&h.depth));
                assert!(h.normal.dot(&scene.views[0].camera.ray(&Vector2::new(x as f64, y as f64))) < 0.0);
                assert!((h.normal.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn costs_never_increase_and_depth_converges() {
        let scene = tiny_scene();
        let cfg = PropagationConfig::default();
        let pm = PatchMatch::new(&scene, 0, &cfg).unwrap();
        let mut st = pm.random_init();
        let mut trace = vec![st.map.costs().to_vec()];
        pm.run(&mut st, Some(&mut trace));
        assert_eq!(trace.len(), 1 + 4 * cfg.iterations);
        for pair in trace.windows(2) {
            assert!(pair[1].iter().zip(&pair[0]).all(|(b, a)| b <= a));
        }
        let mut good = 0;
        let mut total = 0;
        for y in 8..32 {
            for x in 8..40 {
                total += 1;
                good += usize::from((st.map.hypothesis(x, y).depth - 2.5).abs() / 2.5 < 5e-3);
            }
        }
        assert!(good as f64 > 0.9 * total as f64, "{good}/{total}");
    }

    #[test]
    fn ensemble_has_seven_members_led_by_incumbent() {
        let scene = tiny_scene();
        let cfg = PropagationConfig::default();
        let pm = PatchMatch::new(&scene, 0, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Hypothesis::fronto_parallel(2.0);
        let e = pm.ensemble(&mut rng, 10, 10, &h, 1);
        assert_eq!(e.len(), 7);
        assert_eq!(e[0], h);
        for m in &e {
            assert!((1.0..=6.0).contains(&m.depth));
            assert!((m.normal.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_invalid_candidates_keep_the_incumbent() {
        let scene = tiny_scene();
        let cfg = PropagationConfig::default();
        let pm = PatchMatch::new(&scene, 0, &cfg).unwrap();
        let mut st = pm.random_init();
        // Neighbors carry MAX cost and planes facing away from every ray.
        for y in 0..40 {
            for x in 0..48 {
                if (x + y) % 2 == 1 {
                    let h = Hypothesis {
                        depth: 2.0,
                        normal: Vector3::new(0.0, 0.0, 1.0),
                    };
                    st.map.set(x, y, &h, MAX_COST, MAX_COST, false);
                }
            }
        }
        let before = st.map.hypothesis(20, 20);
        pm.propagate(&mut st, 1, Color::Red);
        assert_eq!(st.map.hypothesis(20, 20), before);
    }

    #[test]
    fn depth_samples_are_uniform() {
        let cam = CameraModel::simple(100.0, (50.0, 50.0), Matrix3::identity(), Vector3::zeros(), [2.0, 7.0], 1000, 1000)
            .unwrap();
        let bins = 20;
        let mut hist = vec![0usize; bins];
        let n = 1_000_000;
        for i in 0..n {
            let mut rng = pixel_rng(42, &[0, 0, 0, 0, i as u64]);
            let h = random_hypothesis(&mut rng, &cam, i % 1000, i / 1000);
            let b = (((h.depth - 2.0) / 5.0) * bins as f64) as usize;
            hist[b.min(bins - 1)] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = hist.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 19 degrees of freedom.
        assert!(chi2 < 36.19, "chi2 = {chi2}");
    }
}
