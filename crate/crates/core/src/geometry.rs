//! Pinhole cameras, plane hypotheses and plane-induced homographies.
//!
//! Conventions used throughout the crate:
//!
//! - Pixel `(x, y)` refers to the pixel *center*; valid pixels satisfy
//!   `0 <= x <= width - 1` and `0 <= y <= height - 1`.
//! - `depth` is the z-coordinate in the camera frame, not the Euclidean ray
//!   length. `backproject(p, d)` therefore returns `d * K^-1 [p, 1]`.
//! - Poses map world to camera: `X_cam = R * X_world + t`.
//! - Normals live in the camera frame and face the camera
//!   (`normal . ray < 0`).

use nalgebra::{Matrix3, Vector2, Vector3, Vector4, SVD};

use crate::error::{MvsError, Result};
use crate::scalar::Real;

/// Calibrated pinhole camera with a scene depth range.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<T: Real> {
    intrinsics: Matrix3<T>,
    intrinsics_inv: Matrix3<T>,
    rotation: Matrix3<T>,
    translation: Vector3<T>,
    depth_range: [T; 2],
    width: usize,
    height: usize,
}

impl<T: Real> CameraModel<T> {
    /// Builds a camera, validating every invariant of the model.
    pub fn new(
        intrinsics: Matrix3<T>,
        rotation: Matrix3<T>,
        translation: Vector3<T>,
        depth_range: [T; 2],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let tol = T::lit(1e-9);
        if width == 0 || height == 0 {
            return Err(MvsError::invalid("camera image size must be nonzero"));
        }
        if (intrinsics[(2, 2)] - T::one()).abs() > tol
            || intrinsics[(1, 0)] != T::zero()
            || intrinsics[(2, 0)] != T::zero()
            || intrinsics[(2, 1)] != T::zero()
        {
            return Err(MvsError::invalid(
                "intrinsics must be upper triangular with K[2][2] = 1",
            ));
        }
        if intrinsics[(0, 0)] <= T::zero() || intrinsics[(1, 1)] <= T::zero() {
            return Err(MvsError::invalid("focal lengths must be positive"));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > tol || (rotation.determinant() - T::one()).abs() > tol {
            return Err(MvsError::invalid("rotation is not a proper orthonormal matrix"));
        }
        let [d_min, d_max] = depth_range;
        if !(d_min > T::zero() && d_min < d_max) {
            return Err(MvsError::invalid("depth range must satisfy 0 < d_min < d_max"));
        }
        let intrinsics_inv = intrinsics
            .try_inverse()
            .ok_or_else(|| MvsError::invalid("intrinsics not invertible"))?;
        Ok(Self {
            intrinsics,
            intrinsics_inv,
            rotation,
            translation,
            depth_range,
            width,
            height,
        })
    }

    /// Simple camera with square pixels and no skew.
    pub fn simple(
        focal: T,
        principal: (T, T),
        rotation: Matrix3<T>,
        translation: Vector3<T>,
        depth_range: [T; 2],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let k = Matrix3::new(
            focal,
            T::zero(),
            principal.0,
            T::zero(),
            focal,
            principal.1,
            T::zero(),
            T::zero(),
            T::one(),
        );
        Self::new(k, rotation, translation, depth_range, width, height)
    }

    pub fn intrinsics(&self) -> &Matrix3<T> {
        &self.intrinsics
    }

    pub fn intrinsics_inv(&self) -> &Matrix3<T> {
        &self.intrinsics_inv
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn depth_range(&self) -> [T; 2] {
        self.depth_range
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains_depth(&self, depth: T) -> bool {
        depth >= self.depth_range[0] && depth <= self.depth_range[1]
    }

    /// True when `pixel` lies inside the image (pixel-center convention).
    pub fn in_bounds(&self, pixel: &Vector2<T>) -> bool {
        pixel.x >= T::zero()
            && pixel.y >= T::zero()
            && pixel.x <= T::from_usize(self.width - 1).unwrap()
            && pixel.y <= T::from_usize(self.height - 1).unwrap()
    }

    /// Camera-frame direction through `pixel` with unit z component.
    #[inline]
    pub fn ray(&self, pixel: &Vector2<T>) -> Vector3<T> {
        self.intrinsics_inv * Vector3::new(pixel.x, pixel.y, T::one())
    }

    /// Lifts `pixel` to the camera-frame point with z-depth `depth`.
    pub fn backproject(&self, pixel: &Vector2<T>, depth: T) -> Result<Vector3<T>> {
        if !(depth > T::zero()) {
            return Err(MvsError::invalid("backprojection depth must be positive"));
        }
        Ok(self.ray(pixel) * depth)
    }

    /// Perspective projection of a camera-frame point; `None` behind the camera.
    #[inline]
    pub fn project(&self, point: &Vector3<T>) -> Option<Vector2<T>> {
        if point.z <= T::zero() {
            return None;
        }
        let p = self.intrinsics * point;
        Some(Vector2::new(p.x / p.z, p.y / p.z))
    }

    #[inline]
    pub fn world_to_camera(&self, world: &Vector3<T>) -> Vector3<T> {
        self.rotation * world + self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, cam: &Vector3<T>) -> Vector3<T> {
        self.rotation.transpose() * (cam - self.translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pose of `other` relative to `self`: `X_other = R * X_self + t`.
    pub fn relative_pose(&self, other: &Self) -> (Matrix3<T>, Vector3<T>) {
        let r = other.rotation * self.rotation.transpose();
        let t = other.translation - r * self.translation;
        (r, t)
    }

    /// Camera for an image downsampled by `factor` with ceil-division sizes.
    ///
    /// Coarse pixel `c` covers fine pixels `[c*f, c*f + f)`, so its center sits
    /// at fine coordinate `c*f + (f-1)/2`.
    pub fn downscaled(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(MvsError::invalid("downscale factor must be positive"));
        }
        let f = T::from_usize(factor).unwrap();
        let shift = (f - T::one()) / T::lit(2.0);
        let mut k = self.intrinsics;
        k[(0, 0)] /= f;
        k[(0, 1)] /= f;
        k[(1, 1)] /= f;
        k[(0, 2)] = (k[(0, 2)] - shift) / f;
        k[(1, 2)] = (k[(1, 2)] - shift) / f;
        Self::new(
            k,
            self.rotation,
            self.translation,
            self.depth_range,
            self.width.div_ceil(factor),
            self.height.div_ceil(factor),
        )
    }

    /// Converts the camera to another scalar type.
    pub fn cast<U: Real>(&self) -> CameraModel<U> {
        let c = |x: T| U::lit(x.f64());
        CameraModel {
            intrinsics: self.intrinsics.map(c),
            intrinsics_inv: self.intrinsics_inv.map(c),
            rotation: self.rotation.map(c),
            translation: self.translation.map(c),
            depth_range: [c(self.depth_range[0]), c(self.depth_range[1])],
            width: self.width,
            height: self.height,
        }
    }
}

/// Per-pixel plane hypothesis: z-depth plus a camera-facing unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis<T: Real> {
    pub depth: T,
    pub normal: Vector3<T>,
}

impl<T: Real> Hypothesis<T> {
    /// Normalizes `normal` and flips it to face the camera along `ray`.
    pub fn new(depth: T, normal: Vector3<T>, ray: &Vector3<T>) -> Self {
        Self {
            depth,
            normal: orient_towards_camera(normal.normalize(), ray),
        }
    }

    /// Fronto-parallel hypothesis at `depth`.
    pub fn fronto_parallel(depth: T) -> Self {
        Self {
            depth,
            normal: Vector3::new(T::zero(), T::zero(), -T::one()),
        }
    }

    pub fn cast<U: Real>(&self) -> Hypothesis<U> {
        Hypothesis {
            depth: U::lit(self.depth.f64()),
            normal: self.normal.map(|x| U::lit(x.f64())),
        }
    }
}

/// Flips `normal` if it does not face the camera along `ray`.
#[inline]
pub fn orient_towards_camera<T: Real>(normal: Vector3<T>, ray: &Vector3<T>) -> Vector3<T> {
    if normal.dot(ray) >= T::zero() {
        -normal
    } else {
        normal
    }
}

/// Plane `a*X + b*Y + c*Z + d = 0` in camera coordinates, unit-norm coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneParams<T: Real> {
    coeffs: Vector4<T>,
}

impl<T: Real> PlaneParams<T> {
    /// Normalizes `coeffs`; fails on a zero vector.
    pub fn from_coeffs(coeffs: Vector4<T>) -> Result<Self> {
        let norm = coeffs.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(MvsError::DegeneratePlane("zero plane coefficients".into()));
        }
        Ok(Self {
            coeffs: coeffs / norm,
        })
    }

    pub fn from_point_normal(point: &Vector3<T>, normal: &Vector3<T>) -> Self {
        let d = -normal.dot(point);
        let c = Vector4::new(normal.x, normal.y, normal.z, d);
        Self {
            coeffs: c / c.norm(),
        }
    }

    pub fn coeffs(&self) -> &Vector4<T> {
        &self.coeffs
    }

    /// Unnormalized normal `(a, b, c)`.
    pub fn normal_part(&self) -> Vector3<T> {
        self.coeffs.xyz()
    }

    /// Signed residual `a*X + b*Y + c*Z + d`.
    pub fn residual(&self, p: &Vector3<T>) -> T {
        self.coeffs.xyz().dot(p) + self.coeffs.w
    }

    /// Z-depth where the viewing ray through `pixel` meets the plane.
    pub fn depth_along_ray(&self, camera: &CameraModel<T>, pixel: &Vector2<T>) -> Option<T> {
        let ray = camera.ray(pixel);
        let denom = self.coeffs.xyz().dot(&ray);
        if denom.abs() < T::lit(1e-15) {
            return None;
        }
        let depth = -self.coeffs.w / denom;
        depth.is_finite().then_some(depth)
    }
}

/// Plane through the lifted pixel with the hypothesis normal.
pub fn plane_from_hypothesis<T: Real>(
    camera: &CameraModel<T>,
    pixel: &Vector2<T>,
    h: &Hypothesis<T>,
) -> PlaneParams<T> {
    let point = camera.ray(pixel) * h.depth;
    PlaneParams::from_point_normal(&point, &h.normal)
}

/// Inverse of [`plane_from_hypothesis`]: intersects the pixel ray with `plane`.
pub fn hypothesis_from_plane<T: Real>(
    camera: &CameraModel<T>,
    pixel: &Vector2<T>,
    plane: &PlaneParams<T>,
) -> Option<Hypothesis<T>> {
    let depth = plane.depth_along_ray(camera, pixel)?;
    let ray = camera.ray(pixel);
    Some(Hypothesis::new(depth, plane.normal_part(), &ray))
}

/// Plane-induced homography mapping reference pixels to source pixels.
pub fn homography<T: Real>(
    reference: &CameraModel<T>,
    source: &CameraModel<T>,
    pixel: &Vector2<T>,
    h: &Hypothesis<T>,
) -> Result<Matrix3<T>> {
    let (r, t) = reference.relative_pose(source);
    homography_from_pose(reference, source, &r, &t, pixel, h)
}

/// Same as [`homography`] with a precomputed relative pose.
#[inline]
pub fn homography_from_pose<T: Real>(
    reference: &CameraModel<T>,
    source: &CameraModel<T>,
    r_rel: &Matrix3<T>,
    t_rel: &Vector3<T>,
    pixel: &Vector2<T>,
    h: &Hypothesis<T>,
) -> Result<Matrix3<T>> {
    let point = reference.ray(pixel) * h.depth;
    let d_plane = -h.normal.dot(&point);
    if d_plane.abs() < T::lit(1e-12) {
        return Err(MvsError::DegeneratePlane(
            "plane passes through the reference camera center".into(),
        ));
    }
    let inner = r_rel - t_rel * h.normal.transpose() / d_plane;
    let mut hom = source.intrinsics * inner * reference.intrinsics_inv;
    // Scale by |w| only: the sign of the mapped third coordinate is the sign
    // of the source-camera depth.
    let w = hom[(2, 2)].abs();
    if w != T::zero() {
        hom /= w;
    }
    Ok(hom)
}

/// Applies a plane-induced homography to a pixel; `None` when the plane point
/// is at infinity or behind the source camera.
#[inline]
pub fn warp<T: Real>(hom: &Matrix3<T>, pixel: &Vector2<T>) -> Option<Vector2<T>> {
    let p = hom * Vector3::new(pixel.x, pixel.y, T::one());
    if !(p.z > T::lit(1e-15)) {
        return None;
    }
    Some(Vector2::new(p.x / p.z, p.y / p.z))
}

/// Closest proper rotation to `m` in the Frobenius sense.
pub fn nearest_rotation<T: Real>(m: &Matrix3<T>) -> Option<Matrix3<T>> {
    let svd = SVD::new(*m, true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < T::zero() {
        let mut u = u;
        let col = -u.column(2);
        u.set_column(2, &col);
        r = u * v_t;
    }
    Some(r)
}

/// Rotation about a unit `axis` by `angle` radians (Rodrigues).
pub fn axis_angle<T: Real>(axis: &Vector3<T>, angle: T) -> Matrix3<T> {
    let (s, c) = (angle.sin(), angle.cos());
    let k = Matrix3::new(
        T::zero(),
        -axis.z,
        axis.y,
        axis.z,
        T::zero(),
        -axis.x,
        -axis.y,
        axis.x,
        T::zero(),
    );
    Matrix3::identity() + k * s + k * k * (T::one() - c)
}
