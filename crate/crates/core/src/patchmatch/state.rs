use nalgebra::Vector3;

use super::cost::MAX_COST;
use crate::error::{MvsError, Result};
use crate::geometry::Hypothesis;
use crate::imaging::{ScalarField, VectorField};

/// Dense per-pixel hypotheses with their costs and a validity mask.
///
/// `cost` is the objective the pixel was last optimized under (photometric,
/// possibly prior-assisted and geometric); `photo` is the plain weighted
/// photometric cost of the same hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthNormalMap {
    width: usize,
    height: usize,
    pub(crate) depth: Vec<f64>,
    pub(crate) normal: Vec<Vector3<f64>>,
    pub(crate) cost: Vec<f64>,
    pub(crate) photo: Vec<f64>,
    pub(crate) valid: Vec<bool>,
}

impl DepthNormalMap {
    /// All pixels invalid, fronto-parallel at depth 1.
    pub fn invalid(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            depth: vec![1.0; n],
            normal: vec![Vector3::new(0.0, 0.0, -1.0); n],
            cost: vec![MAX_COST; n],
            photo: vec![MAX_COST; n],
            valid: vec![false; n],
        }
    }

    /// Builds a map from depth/normal fields; costs default to zero where valid.
    pub fn from_fields(
        depth: &ScalarField<f64>,
        normal: &VectorField<f64>,
        cost: Option<&ScalarField<f64>>,
    ) -> Result<Self> {
        let (w, h) = (depth.width(), depth.height());
        if normal.width() != w || normal.height() != h {
            return Err(MvsError::invalid("depth and normal fields differ in size"));
        }
        let mut map = Self::invalid(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if let (Some(d), Some(n)) = (depth.get(x, y), normal.get(x, y)) {
                    map.depth[i] = d;
                    map.normal[i] = n;
                    let c = cost.and_then(|c| c.get(x, y)).unwrap_or(0.0);
                    map.cost[i] = c;
                    map.photo[i] = c;
                    map.valid[i] = true;
                }
            }
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn hypothesis(&self, x: usize, y: usize) -> Hypothesis<f64> {
        let i = y * self.width + x;
        Hypothesis {
            depth: self.depth[i],
            normal: self.normal[i],
        }
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize) -> f64 {
        self.cost[y * self.width + x]
    }

    #[inline]
    pub fn photo_cost(&self, x: usize, y: usize) -> f64 {
        self.photo[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn set(&mut self, x: usize, y: usize, h: &Hypothesis<f64>, cost: f64, photo: f64, valid: bool) {
        let i = y * self.width + x;
        self.depth[i] = h.depth;
        self.normal[i] = h.normal;
        self.cost[i] = cost;
        self.photo[i] = photo;
        self.valid[i] = valid;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    /// Mean objective over valid pixels (NaN if none).
    pub fn mean_cost(&self) -> f64 {
        let (mut s, mut n) = (0.0, 0usize);
        for (c, v) in self.cost.iter().zip(&self.valid) {
            if *v {
                s += c;
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            s / n as f64
        }
    }

    pub fn depth_field(&self) -> ScalarField<f64> {
        ScalarField::new(self.width, self.height, self.depth.clone(), self.valid.clone())
            .expect("consistent buffers")
    }

    pub fn normal_field(&self) -> VectorField<f64> {
        VectorField::new(self.width, self.height, self.normal.clone(), self.valid.clone())
            .expect("consistent buffers")
    }

    pub fn cost_field(&self) -> ScalarField<f64> {
        ScalarField::new(self.width, self.height, self.cost.clone(), self.valid.clone())
            .expect("consistent buffers")
    }

    /// Photometric costs of every pixel, valid or not.
    pub fn photo_field(&self) -> ScalarField<f64> {
        ScalarField::new(self.width, self.height, self.photo.clone(), vec![true; self.len()])
            .expect("consistent buffers")
    }

    /// Coarse copy: per block, the valid pixel holding the lower-median depth
    /// contributes its depth and costs; normals are averaged and renormalized.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(MvsError::invalid("downsample factor must be at least 1"));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.width.div_ceil(factor), self.height.div_ceil(factor));
        let mut out = Self::invalid(w, h);
        let mut members = Vec::with_capacity(factor * factor);
        for cy in 0..h {
            for cx in 0..w {
                members.clear();
                let mut nsum = Vector3::zeros();
                for y in cy * factor..((cy + 1) * factor).min(self.height) {
                    for x in cx * factor..((cx + 1) * factor).min(self.width) {
                        let i = y * self.width + x;
                        if self.valid[i] {
                            members.push(i);
                            nsum += self.normal[i];
                        }
                    }
                }
                let norm = nsum.norm();
                if members.is_empty() || norm < 1e-12 {
                    continue;
                }
                members.sort_by(|a, b| self.depth[*a].total_cmp(&self.depth[*b]).then(a.cmp(b)));
                let m = members[(members.len() - 1) / 2];
                let o = cy * w + cx;
                out.depth[o] = self.depth[m];
                out.normal[o] = nsum / norm;
                out.cost[o] = self.cost[m];
                out.photo[o] = self.photo[m];
                out.valid[o] = true;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_takes_median_sample_costs() {
        let mut m = DepthNormalMap::invalid(2, 2);
        let depths = [1.0, 5.0, 2.0, 3.0];
        for (i, d) in depths.iter().enumerate() {
            let h = Hypothesis::fronto_parallel(*d);
            m.set(i % 2, i / 2, &h, 0.1 * i as f64, 0.01 * i as f64, true);
        }
        let c = m.downsample(2).unwrap();
        assert_eq!((c.width(), c.height()), (1, 1));
        // Sorted depths 1,2,3,5 -> lower median 2 at index 2.
        assert_eq!(c.hypothesis(0, 0).depth, 2.0);
        assert!((c.cost(0, 0) - 0.2).abs() < 1e-15);
        assert!((c.photo_cost(0, 0) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn downsample_skips_invalid_blocks() {
        let mut m = DepthNormalMap::invalid(4, 2);
        m.set(0, 0, &Hypothesis::fronto_parallel(2.0), 0.0, 0.0, true);
        let c = m.downsample(2).unwrap();
        assert!(c.is_valid(0, 0));
        assert!(!c.is_valid(1, 0));
    }
}
