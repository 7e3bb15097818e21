use nalgebra::Vector3;

use super::{Image, ScalarField, VectorField};
use crate::error::{MvsError, Result};
use crate::scalar::Real;

/// Block reduction by an integer factor; output sizes use ceil-division.
pub trait Downsample: Sized {
    fn downsample(&self, factor: usize) -> Result<Self>;
}

pub fn downsample<D: Downsample>(input: &D, factor: usize) -> Result<D> {
    input.downsample(factor)
}

fn check_factor(factor: usize) -> Result<()> {
    if factor == 0 {
        Err(MvsError::invalid("downsample factor must be at least 1"))
    } else {
        Ok(())
    }
}

/// Pixel range `[start, end)` covered by coarse cell `c`.
#[inline]
fn block(c: usize, factor: usize, len: usize) -> std::ops::Range<usize> {
    c * factor..((c + 1) * factor).min(len)
}

/// Lower median of a nonempty slice; always one of the inputs. Sorts in place.
pub fn block_median<T: Real>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    values[(values.len() - 1) / 2]
}

impl<T: Real> Downsample for Image<T> {
    /// Area average over each block.
    fn downsample(&self, factor: usize) -> Result<Self> {
        check_factor(factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.width.div_ceil(factor), self.height.div_ceil(factor));
        let mut data = Vec::with_capacity(w * h);
        for cy in 0..h {
            for cx in 0..w {
                let mut sum = T::zero();
                let mut n = 0usize;
                for y in block(cy, factor, self.height) {
                    for x in block(cx, factor, self.width) {
                        sum += self.get(x, y);
                        n += 1;
                    }
                }
                data.push(sum / T::from_usize(n).unwrap());
            }
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

impl<T: Real> Downsample for ScalarField<T> {
    /// Median of the valid entries in each block.
    fn downsample(&self, factor: usize) -> Result<Self> {
        check_factor(factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.width.div_ceil(factor), self.height.div_ceil(factor));
        Ok(Self::from_fn(w, h, |cx, cy| {
            let mut scratch = Vec::with_capacity(factor * factor);
            for y in block(cy, factor, self.height) {
                for x in block(cx, factor, self.width) {
                    if let Some(v) = self.get(x, y) {
                        scratch.push(v);
                    }
                }
            }
            (!scratch.is_empty()).then(|| block_median(&mut scratch))
        }))
    }
}

impl<T: Real> Downsample for VectorField<T> {
    /// Average of the valid vectors in each block, renormalized.
    fn downsample(&self, factor: usize) -> Result<Self> {
        check_factor(factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.width.div_ceil(factor), self.height.div_ceil(factor));
        Ok(Self::from_fn(w, h, |cx, cy| {
            let mut sum = Vector3::zeros();
            for y in block(cy, factor, self.height) {
                for x in block(cx, factor, self.width) {
                    if let Some(v) = self.get(x, y) {
                        sum += v;
                    }
                }
            }
            let n = sum.norm();
            (n > T::lit(1e-12)).then(|| sum / n)
        }))
    }
}
