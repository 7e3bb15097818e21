use nalgebra::Vector3;
use rayon::prelude::*;

use super::{Image, ScalarField, VectorField};
use crate::error::{MvsError, Result};
use crate::scalar::Real;

/// Kernel widths for joint bilateral upsampling.
///
/// `sigma_spatial` is measured in guide (full resolution) pixels and
/// `sigma_range` in guide intensity units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JbuParams {
    pub sigma_spatial: f64,
    pub sigma_range: f64,
}

impl JbuParams {
    /// Kernel spanning one coarse cell, edge-stopping at 0.1 intensity.
    pub fn for_scale(scale: usize) -> Self {
        Self {
            sigma_spatial: scale as f64,
            sigma_range: 0.1,
        }
    }
}

/// Fields that can be upsampled to a guide's resolution.
pub trait Upsample: Sized {
    fn joint_bilateral_upsample<G: Real>(&self, guide: &Image<G>, params: JbuParams)
        -> Result<Self>;
}

pub fn joint_bilateral_upsample<F: Upsample, G: Real>(
    coarse: &F,
    guide: &Image<G>,
    params: JbuParams,
) -> Result<F> {
    coarse.joint_bilateral_upsample(guide, params)
}

struct Kernel {
    scale: usize,
    cw: usize,
    ch: usize,
    radius: usize,
    inv_2ss: f64,
    inv_2sr: f64,
    /// Guide intensity at each coarse cell center.
    center_intensity: Vec<f64>,
}

impl Kernel {
    fn new<G: Real>(cw: usize, ch: usize, guide: &Image<G>, params: JbuParams) -> Result<Self> {
        if !(params.sigma_spatial > 0.0 && params.sigma_range > 0.0) {
            return Err(MvsError::invalid("JBU sigmas must be positive"));
        }
        let (gw, gh) = (guide.width(), guide.height());
        if gw < cw || gh < ch {
            return Err(MvsError::invalid(format!(
                "guide {gw}x{gh} smaller than coarse field {cw}x{ch}"
            )));
        }
        let scale = ((gw as f64 / cw as f64).round() as usize).max(1);
        let fits = |g: usize, c: usize| g.div_ceil(scale).abs_diff(c) <= 1;
        if !fits(gw, cw) || !fits(gh, ch) {
            return Err(MvsError::invalid(format!(
                "coarse field {cw}x{ch} is not an integer downscale of guide {gw}x{gh}"
            )));
        }
        let radius = (2.0 * params.sigma_spatial / scale as f64).ceil() as usize;
        let mut center_intensity = Vec::with_capacity(cw * ch);
        for cy in 0..ch {
            for cx in 0..cw {
                let (fx, fy) = (center(cx, scale), center(cy, scale));
                center_intensity.push(guide.sample_clamped(fx, fy).f64());
            }
        }
        Ok(Self {
            scale,
            cw,
            ch,
            radius,
            inv_2ss: 1.0 / (2.0 * params.sigma_spatial * params.sigma_spatial),
            inv_2sr: 1.0 / (2.0 * params.sigma_range * params.sigma_range),
            center_intensity,
        })
    }

    /// Calls `visit(coarse_index, weight)` for every coarse sample in the window of `(px, py)`.
    #[inline]
    fn visit(&self, px: usize, py: usize, intensity: f64, mut visit: impl FnMut(usize, f64)) {
        let c0x = (px / self.scale).min(self.cw - 1);
        let c0y = (py / self.scale).min(self.ch - 1);
        let (x_lo, x_hi) = (c0x.saturating_sub(self.radius), (c0x + self.radius).min(self.cw - 1));
        let (y_lo, y_hi) = (c0y.saturating_sub(self.radius), (c0y + self.radius).min(self.ch - 1));
        for cy in y_lo..=y_hi {
            let dy = py as f64 - center(cy, self.scale);
            for cx in x_lo..=x_hi {
                let dx = px as f64 - center(cx, self.scale);
                let idx = cy * self.cw + cx;
                let di = intensity - self.center_intensity[idx];
                let w = (-(dx * dx + dy * dy) * self.inv_2ss - di * di * self.inv_2sr).exp();
                visit(idx, w);
            }
        }
    }
}

#[inline]
fn center(c: usize, scale: usize) -> f64 {
    (c * scale) as f64 + (scale as f64 - 1.0) / 2.0
}

const MIN_WEIGHT: f64 = 1e-12;

impl<T: Real> Upsample for ScalarField<T> {
    fn joint_bilateral_upsample<G: Real>(
        &self,
        guide: &Image<G>,
        params: JbuParams,
    ) -> Result<Self> {
        let kernel = Kernel::new(self.width, self.height, guide, params)?;
        let gw = guide.width();
        let rows: Vec<Vec<Option<T>>> = (0..guide.height())
            .into_par_iter()
            .map(|py| {
                (0..gw)
                    .map(|px| {
                        let (mut acc, mut total) = (0.0, 0.0);
                        kernel.visit(px, py, guide.get(px, py).f64(), |i, w| {
                            if self.valid[i] {
                                acc += w * self.values[i].f64();
                                total += w;
                            }
                        });
                        (total >= MIN_WEIGHT).then(|| T::lit(acc / total))
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<Option<T>> = rows.into_iter().flatten().collect();
        Ok(Self::from_fn(gw, guide.height(), |x, y| flat[y * gw + x]))
    }
}

impl<T: Real> Upsample for VectorField<T> {
    fn joint_bilateral_upsample<G: Real>(
        &self,
        guide: &Image<G>,
        params: JbuParams,
    ) -> Result<Self> {
        let kernel = Kernel::new(self.width, self.height, guide, params)?;
        let gw = guide.width();
        let rows: Vec<Vec<Option<Vector3<T>>>> = (0..guide.height())
            .into_par_iter()
            .map(|py| {
                (0..gw)
                    .map(|px| {
                        let mut acc = Vector3::<f64>::zeros();
                        let mut total = 0.0;
                        kernel.visit(px, py, guide.get(px, py).f64(), |i, w| {
                            if self.valid[i] {
                                let v = &self.values[i];
                                acc += Vector3::new(v.x.f64(), v.y.f64(), v.z.f64()) * w;
                                total += w;
                            }
                        });
                        let n = acc.norm();
                        (total >= MIN_WEIGHT && n > 1e-12)
                            .then(|| (acc / n).map(T::lit))
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<_> = rows.into_iter().flatten().collect();
        Ok(Self::from_fn(gw, guide.height(), |x, y| flat[y * gw + x]))
    }
}
