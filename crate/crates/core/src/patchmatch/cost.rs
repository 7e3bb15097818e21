//! Photometric matching cost, cost matrix voting and view weighting.

use nalgebra::{Matrix3, Vector2};

use super::config::PropagationConfig;
use crate::geometry::{homography, Hypothesis};
use crate::imaging::Image;
use crate::scalar::Real;
use crate::scene::View;

/// Worst possible matching cost (NCC = -1), also used for degenerate evaluations.
pub const MAX_COST: f64 = 2.0;

/// Minimum weighted variance for a patch to count as textured.
const MIN_VARIANCE: f64 = 1e-8;

/// A view counts as selected with at least this many good entries in its column...
const VIEW_MIN_GOOD: usize = 2;
/// ...and at most this many bad ones.
const VIEW_MAX_BAD: usize = 3;

/// Matching window settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchParams {
    pub radius: usize,
    pub step: usize,
    pub sigma_spatial: f64,
    pub sigma_range: f64,
}

impl From<&PropagationConfig> for PatchParams {
    fn from(cfg: &PropagationConfig) -> Self {
        Self {
            radius: cfg.patch_radius,
            step: cfg.patch_step,
            sigma_spatial: cfg.sigma_spatial,
            sigma_range: cfg.sigma_range,
        }
    }
}

impl PatchParams {
    /// Tap offsets along one axis: `-r, -r+step, ..., <= r`.
    pub fn axis_offsets(&self) -> Vec<i64> {
        let r = self.radius as i64;
        (-r..=r).step_by(self.step).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    x: f64,
    y: f64,
    value: f64,
    weight: f64,
}

/// Reference-side patch with precomputed bilateral weights.
#[derive(Debug, Clone)]
pub struct RefPatch {
    taps: Vec<Tap>,
    textureless: bool,
}

impl RefPatch {
    /// Returns `None` when the window leaves the reference image.
    pub fn new(image: &Image<f32>, x: usize, y: usize, params: &PatchParams) -> Option<Self> {
        let r = params.radius;
        if x < r || y < r || x + r >= image.width() || y + r >= image.height() {
            return None;
        }
        let center = image.get(x, y) as f64;
        let inv_ss = 1.0 / (2.0 * params.sigma_spatial * params.sigma_spatial);
        let inv_sr = 1.0 / (2.0 * params.sigma_range * params.sigma_range);
        let offsets = params.axis_offsets();
        let mut taps = Vec::with_capacity(offsets.len() * offsets.len());
        for &dy in &offsets {
            for &dx in &offsets {
                let (tx, ty) = ((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                let value = image.get(tx, ty) as f64;
                let d2 = (dx * dx + dy * dy) as f64;
                let di = value - center;
                let weight = (-d2 * inv_ss - di * di * inv_sr).exp();
                taps.push(Tap {
                    x: tx as f64,
                    y: ty as f64,
                    value,
                    weight,
                });
            }
        }
        let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for t in &taps {
            sw += t.weight;
            s1 += t.weight * t.value;
            s2 += t.weight * t.value * t.value;
        }
        let mean = s1 / sw;
        let textureless = s2 / sw - mean * mean < MIN_VARIANCE;
        Some(Self { taps, textureless })
    }

    /// True when the reference window has (near) zero weighted variance.
    pub fn is_textureless(&self) -> bool {
        self.textureless
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    /// `1 - NCC` between this patch and its warp into `source` by `hom`.
    pub fn cost(&self, source: &Image<f32>, hom: &Matrix3<f64>) -> f64 {
        if self.textureless {
            return MAX_COST;
        }
        let (w, h) = (source.width(), source.height());
        let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
        let data = source.data();
        let (mut sw, mut sr, mut srr, mut ss, mut sss, mut srs) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut outside = 0usize;
        for t in &self.taps {
            let z = hom[(2, 0)] * t.x + hom[(2, 1)] * t.y + hom[(2, 2)];
            if !(z > 0.0) {
                outside += 1;
                continue;
            }
            let u = (hom[(0, 0)] * t.x + hom[(0, 1)] * t.y + hom[(0, 2)]) / z;
            let v = (hom[(1, 0)] * t.x + hom[(1, 1)] * t.y + hom[(1, 2)]) / z;
            if !(u >= 0.0 && v >= 0.0 && u <= max_x && v <= max_y) {
                outside += 1;
                continue;
            }
            let (x0, y0) = (u as usize, v as usize);
            let (fx, fy) = (u - x0 as f64, v - y0 as f64);
            let x1 = if x0 + 1 < w { x0 + 1 } else { x0 };
            let y1 = if y0 + 1 < h { y0 + 1 } else { y0 };
            let p00 = data[y0 * w + x0] as f64;
            let p01 = data[y0 * w + x1] as f64;
            let p10 = data[y1 * w + x0] as f64;
            let p11 = data[y1 * w + x1] as f64;
            let top = p00 + (p01 - p00) * fx;
            let bottom = p10 + (p11 - p10) * fx;
            let s = top + (bottom - top) * fy;
            let wt = t.weight;
            sw += wt;
            sr += wt * t.value;
            srr += wt * t.value * t.value;
            ss += wt * s;
            sss += wt * s * s;
            srs += wt * t.value * s;
        }
        if 2 * outside >= self.taps.len() || sw <= 0.0 {
            return MAX_COST;
        }
        let (mr, ms) = (sr / sw, ss / sw);
        let var_r = srr / sw - mr * mr;
        let var_s = sss / sw - ms * ms;
        if var_r < MIN_VARIANCE || var_s < MIN_VARIANCE {
            return MAX_COST;
        }
        let ncc = (srs / sw - mr * ms) / (var_r * var_s).sqrt();
        (1.0 - ncc).clamp(0.0, MAX_COST)
    }
}

/// Photometric cost of hypothesis `h` at `pixel` of `reference` against `source`.
pub fn matching_cost(
    reference: &View,
    source: &View,
    pixel: (usize, usize),
    h: &Hypothesis<f64>,
    params: &PatchParams,
) -> f64 {
    let Some(patch) = RefPatch::new(&reference.image, pixel.0, pixel.1, params) else {
        return MAX_COST;
    };
    let px = Vector2::new(pixel.0 as f64, pixel.1 as f64);
    match homography(&reference.camera, &source.camera, &px, h) {
        Ok(hom) => patch.cost(&source.image, &hom),
        Err(_) => MAX_COST,
    }
}

/// Adaptive good-cost threshold for iteration `t_iter` and extension level `t_ext`.
pub fn extension_threshold<T: Real>(
    tau_good: T,
    alpha: T,
    max_extensions: usize,
    t_iter: usize,
    t_ext: usize,
) -> T {
    let t = T::from_usize(t_iter).unwrap();
    let remaining = T::from_usize(max_extensions.saturating_sub(t_ext)).unwrap();
    tau_good * (-(t * t * remaining) / alpha).exp()
}

/// Weighted mean of per-view costs; `MAX_COST` when every weight is zero.
pub fn aggregate_cost<T: Real>(costs: &[T], weights: &[T]) -> T {
    debug_assert_eq!(costs.len(), weights.len());
    let (mut num, mut den) = (T::zero(), T::zero());
    for (c, w) in costs.iter().zip(weights) {
        num += *c * *w;
        den += *w;
    }
    if den > T::zero() {
        num / den
    } else {
        T::lit(MAX_COST)
    }
}

/// Mean of the `k` smallest costs (all of them when fewer than `k`).
pub fn top_k_mean(costs: &[f64], k: usize) -> f64 {
    if costs.is_empty() {
        return MAX_COST;
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = k.min(sorted.len());
    sorted[..n].iter().sum::<f64>() / n as f64
}

/// Eight candidate rows by `views` source columns. Rows of empty regions are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    views: usize,
    entries: Vec<f64>,
    present: [bool; 8],
}

impl CostMatrix {
    pub const ROWS: usize = 8;

    pub fn new(views: usize) -> Self {
        Self {
            views,
            entries: vec![MAX_COST; Self::ROWS * views],
            present: [false; 8],
        }
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn set_row(&mut self, row: usize, costs: &[f64]) {
        debug_assert_eq!(costs.len(), self.views);
        self.entries[row * self.views..(row + 1) * self.views].copy_from_slice(costs);
        self.present[row] = true;
    }

    pub fn row(&self, row: usize) -> Option<&[f64]> {
        self.present[row].then(|| &self.entries[row * self.views..(row + 1) * self.views])
    }

    pub fn get(&self, row: usize, view: usize) -> f64 {
        self.entries[row * self.views + view]
    }

    pub fn is_present(&self, row: usize) -> bool {
        self.present[row]
    }

    /// Entries of a column over the present rows.
    pub fn column(&self, view: usize) -> impl Iterator<Item = f64> + '_ {
        (0..Self::ROWS)
            .filter(|r| self.present[*r])
            .map(move |r| self.get(r, view))
    }
}

/// True when a row has at least `n_good` entries below `threshold` and at
/// most `n_bad` entries above `tau_bad`.
pub fn row_is_reliable(row: &[f64], threshold: f64, cfg: &PropagationConfig) -> bool {
    let good = row.iter().filter(|m| **m < threshold).count();
    let bad = row.iter().filter(|m| **m > cfg.tau_bad).count();
    good >= cfg.n_good && bad <= cfg.n_bad
}

/// Per-source weights used by the weighted photometric cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights {
    pub weights: Vec<f64>,
    pub selected: Vec<bool>,
}

impl ViewWeights {
    pub fn uniform(views: usize) -> Self {
        Self {
            weights: vec![1.0; views],
            selected: vec![true; views],
        }
    }
}

/// Column voting: a view is selected when enough candidates match well in it
/// and few match badly; selected views are weighted by a Gaussian of their
/// best cost. Falls back to the single view with the smallest column minimum.
pub fn view_weights(m: &CostMatrix, cfg: &PropagationConfig) -> ViewWeights {
    let views = m.views();
    let inv = 1.0 / (2.0 * cfg.view_beta * cfg.view_beta);
    let mut minima = vec![MAX_COST; views];
    let mut selected = vec![false; views];
    for (j, (min, sel)) in minima.iter_mut().zip(selected.iter_mut()).enumerate() {
        let (mut good, mut bad) = (0, 0);
        for c in m.column(j) {
            good += usize::from(c < cfg.tau_good);
            bad += usize::from(c > cfg.tau_bad);
            *min = min.min(c);
        }
        *sel = good >= VIEW_MIN_GOOD && bad <= VIEW_MAX_BAD;
    }
    if !selected.iter().any(|s| *s) && views > 0 {
        let best = (0..views)
            .min_by(|a, b| minima[*a].total_cmp(&minima[*b]))
            .unwrap();
        selected[best] = true;
    }
    let weights = minima
        .iter()
        .zip(&selected)
        .map(|(c, s)| if *s { (-c * c * inv).exp() } else { 0.0 })
        .collect();
    ViewWeights { weights, selected }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraModel;
    use nalgebra::Vector3;

    fn textured(w: usize, h: usize) -> Image<f32> {
        Image::from_fn(w, h, |x, y| {
            let v = ((x * 37 + y * 91) % 23) as f32 / 22.0;
            0.1 + 0.8 * v
        })
    }

    fn view(img: Image<f32>) -> View {
        let camera = CameraModel::simple(
            100.0,
            (16.0, 16.0),
            Matrix3::identity(),
            Vector3::zeros(),
            [0.5, 10.0],
            img.width(),
            img.height(),
        )
        .unwrap();
        View {
            id: "v".into(),
            camera,
            image: img,
        }
    }

    #[test]
    fn self_match_costs_zero() {
        let v = view(textured(32, 32));
        let c = matching_cost(&v, &v, (16, 16), &Hypothesis::fronto_parallel(2.0), &PatchParams::from(&PropagationConfig::default()));
        assert!(c.abs() < 1e-6, "{c}");
    }

    #[test]
    fn inverted_contrast_costs_two() {
        let img = textured(32, 32);
        let inv = Image::from_fn(32, 32, |x, y| 1.0 - img.get(x, y));
        let (a, b) = (view(img), view(inv));
        let c = matching_cost(&a, &b, (16, 16), &Hypothesis::fronto_parallel(2.0), &PatchParams::from(&PropagationConfig::default()));
        assert!((c - 2.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn constant_patch_is_degenerate() {
        let flat = view(Image::filled(32, 32, 0.5));
        let tex = view(textured(32, 32));
        let p = PatchParams::from(&PropagationConfig::default());
        let h = Hypothesis::fronto_parallel(2.0);
        assert_eq!(matching_cost(&flat, &tex, (16, 16), &h, &p), MAX_COST);
        assert_eq!(matching_cost(&tex, &flat, (16, 16), &h, &p), MAX_COST);
        // Window leaving the reference image.
        assert_eq!(matching_cost(&tex, &tex, (2, 16), &h, &p), MAX_COST);
    }

    #[test]
    fn three_by_three_matches_hand_rolled_ncc() {
        let r = [0.1, 0.5, 0.3, 0.9, 0.2, 0.7, 0.4, 0.8, 0.6];
        let s = [0.2, 0.4, 0.35, 0.8, 0.1, 0.75, 0.5, 0.7, 0.65];
        let ref_img = Image::from_fn(3, 3, |x, y| r[y * 3 + x] as f32);
        let src_img = Image::from_fn(3, 3, |x, y| s[y * 3 + x] as f32);
        let params = PatchParams {
            radius: 1,
            step: 1,
            sigma_spatial: 1e7,
            sigma_range: 1e7,
        };
        let patch = RefPatch::new(&ref_img, 1, 1, &params).unwrap();
        let got = patch.cost(&src_img, &Matrix3::identity());
        // Oracle on the exact f32-rounded inputs.
        let rv: Vec<f64> = r.iter().map(|v| *v as f32 as f64).collect();
        let sv: Vec<f64> = s.iter().map(|v| *v as f32 as f64).collect();
        let mr = rv.iter().sum::<f64>() / 9.0;
        let ms = sv.iter().sum::<f64>() / 9.0;
        let cov: f64 = rv.iter().zip(&sv).map(|(a, b)| (a - mr) * (b - ms)).sum();
        let vr: f64 = rv.iter().map(|a| (a - mr).powi(2)).sum();
        let vs: f64 = sv.iter().map(|b| (b - ms).powi(2)).sum();
        let expected = 1.0 - cov / (vr * vs).sqrt();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn default_patch_has_36_taps() {
        let img = textured(32, 32);
        let p = RefPatch::new(&img, 16, 16, &PatchParams::from(&PropagationConfig::default())).unwrap();
        assert_eq!(p.tap_count(), 36);
    }

    #[test]
    fn mostly_outside_warp_is_max_cost() {
        let img = textured(32, 32);
        let p = RefPatch::new(&img, 16, 16, &PatchParams::from(&PropagationConfig::default())).unwrap();
        let shift = Matrix3::new(1.0, 0.0, 20.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(p.cost(&img, &shift), MAX_COST);
    }

    #[test]
    fn extension_threshold_examples() {
        let t = |it, ext| extension_threshold(0.8, 90.0, 3, it, ext);
        for it in 0..20 {
            assert_eq!(t(it, 3), 0.8);
        }
        assert!((t(1, 0) - 0.8 * (-1.0f64 / 30.0).exp()).abs() < 1e-15);
        assert!((t(1, 0) - 0.77377).abs() < 5e-6);
        assert!((t(2, 1) - 0.73196).abs() < 5e-6);
    }

    #[test]
    fn aggregate_examples() {
        assert!((aggregate_cost(&[0.2, 0.4], &[1.0, 1.0]) - 0.3f64).abs() < 1e-15);
        assert!((aggregate_cost(&[0.3, 0.9], &[2.0, 1.0]) - 0.5f64).abs() < 1e-15);
        assert_eq!(aggregate_cost(&[0.3, 0.9], &[0.0, 0.0]), MAX_COST);
        assert!((top_k_mean(&[0.1, 0.5], 4) - 0.3).abs() < 1e-15);
        assert!((top_k_mean(&[0.9, 0.1, 0.5, 0.3, 0.2], 2) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn view_weights_good_and_bad_views() {
        let mut m = CostMatrix::new(2);
        for r in 0..8 {
            m.set_row(r, &[0.1, MAX_COST]);
        }
        let w = view_weights(&m, &PropagationConfig::default());
        assert_eq!(w.selected, vec![true, false]);
        assert!((w.weights[0] - (-0.01f64 / 0.18).exp()).abs() < 1e-15);
        assert_eq!(w.weights[1], 0.0);
    }

    #[test]
    fn view_weights_symmetric_columns() {
        let mut m = CostMatrix::new(3);
        for r in 0..8 {
            let c = 0.1 + 0.05 * r as f64;
            m.set_row(r, &[c, c, c]);
        }
        let w = view_weights(&m, &PropagationConfig::default());
        assert!(w.selected.iter().all(|s| *s));
        assert!(w.weights.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn view_weights_fallback_selects_one() {
        let mut m = CostMatrix::new(4);
        for r in 0..8 {
            m.set_row(r, &[MAX_COST; 4]);
        }
        let w = view_weights(&m, &PropagationConfig::default());
        assert_eq!(w.selected.iter().filter(|s| **s).count(), 1);
        assert_eq!(w.weights.iter().filter(|x| **x > 0.0).count(), 1);
    }

    #[test]
    fn row_vote() {
        let cfg = PropagationConfig::default();
        assert!(row_is_reliable(&[0.3, 1.5], 0.77, &cfg));
        assert!(!row_is_reliable(&[0.9, 0.95], 0.77, &cfg));
        assert!(!row_is_reliable(&[0.1, 1.3, 1.3, 1.3], 0.77, &cfg));
    }
}
