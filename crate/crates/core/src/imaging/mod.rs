//! Dense images and fields, pyramid downsampling and joint bilateral upsampling.

mod io;
mod jbu;
mod pyramid;

use nalgebra::Vector3;

use crate::error::{MvsError, Result};
use crate::scalar::Real;

pub use io::{load_gray, read_pfm, save_gray_png, save_mask_png, write_pfm, PfmData};
pub use jbu::{joint_bilateral_upsample, JbuParams, Upsample};
pub use pyramid::{block_median, downsample, Downsample};

/// Grayscale intensity image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(MvsError::invalid(format!(
                "image buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(MvsError::invalid(format!(
                "intensity {} outside [0, 1]",
                v.f64()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Bilinear lookup with coordinates clamped to the image.
    pub fn sample_clamped(&self, x: f64, y: f64) -> T {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (T::lit(x - x0 as f64), T::lit(y - y0 as f64));
        let top = self.get(x0, y0) * (T::one() - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (T::one() - fx) + self.get(x1, y1) * fx;
        top * (T::one() - fy) + bottom * fy
    }
}

/// Dense scalar field (depth, cost) with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    valid: Vec<bool>,
}

/// Dense 3-vector field (normals) with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T: Real> {
    width: usize,
    height: usize,
    values: Vec<Vector3<T>>,
    valid: Vec<bool>,
}

macro_rules! field_common {
    ($name:ident, $value:ty) => {
        impl<T: Real> $name<T> {
            /// Builds a field; invalid entries keep whatever value is given.
            pub fn new(
                width: usize,
                height: usize,
                values: Vec<$value>,
                valid: Vec<bool>,
            ) -> Result<Self> {
                if width == 0 || height == 0 {
                    return Err(MvsError::invalid("field must be nonempty"));
                }
                if values.len() != width * height || valid.len() != width * height {
                    return Err(MvsError::invalid("field buffers do not match dimensions"));
                }
                Ok(Self {
                    width,
                    height,
                    values,
                    valid,
                })
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn values(&self) -> &[$value] {
                &self.values
            }

            pub fn valid_mask(&self) -> &[bool] {
                &self.valid
            }

            #[inline]
            pub fn is_valid(&self, x: usize, y: usize) -> bool {
                self.valid[y * self.width + x]
            }

            /// Value at `(x, y)` if the entry is valid.
            #[inline]
            pub fn get(&self, x: usize, y: usize) -> Option<$value> {
                let i = y * self.width + x;
                self.valid[i].then(|| self.values[i])
            }

            pub fn valid_count(&self) -> usize {
                self.valid.iter().filter(|v| **v).count()
            }
        }
    };
}

field_common!(ScalarField, T);
field_common!(VectorField, Vector3<T>);

impl<T: Real> ScalarField<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
            valid: vec![true; width * height],
        }
    }

    /// Field from an optional-valued closure; `None` marks the entry invalid.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> Option<T>) -> Self {
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                valid.push(v.is_some());
                values.push(v.unwrap_or_else(T::zero));
            }
        }
        Self {
            width,
            height,
            values,
            valid,
        }
    }
}

impl<T: Real> VectorField<T> {
    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> Option<Vector3<T>>,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                valid.push(v.is_some());
                values.push(v.unwrap_or_else(Vector3::zeros));
            }
        }
        Self {
            width,
            height,
            values,
            valid,
        }
    }
}
