//! Rotation and camera algebra: rotation representations, the relative-angle metric,
//! frame composition, allocentric/egocentric conversion and pinhole projection.

use std::ops::Mul;

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector2, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::real::{lit, Real};

/// An element of SO(3).
///
/// Stored as a unit quaternion; angle-axis (rotation vector) is the canonical
/// external representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T: Real> {
    q: UnitQuaternion<T>,
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self { q: UnitQuaternion::identity() }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn about_axis(axis: &Vector3<T>, angle: T) -> Self {
        let axis = Unit::new_normalize(*axis);
        Self { q: UnitQuaternion::from_axis_angle(&axis, angle) }
    }

    /// From a rotation vector: direction is the axis, norm the angle in radians.
    pub fn from_axis_angle(rotvec: &Vector3<T>) -> Self {
        Self { q: UnitQuaternion::from_scaled_axis(*rotvec) }
    }

    /// Rotation vector with angle in `[0, π]`.
    pub fn to_axis_angle(&self) -> Vector3<T> {
        self.canonical_quaternion().scaled_axis()
    }

    /// From quaternion components `(w, x, y, z)`; normalized on input.
    pub fn from_quaternion(w: T, x: T, y: T, z: T) -> Self {
        Self { q: UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)) }
    }

    /// Quaternion `[w, x, y, z]` with `w >= 0`.
    pub fn to_quaternion(&self) -> [T; 4] {
        let q = self.canonical_quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// From an orthonormal matrix with determinant +1 (not re-orthogonalized).
    pub fn from_matrix(m: &Matrix3<T>) -> Self {
        let r = Rotation3::from_matrix_unchecked(*m);
        Self { q: UnitQuaternion::from_rotation_matrix(&r) }
    }

    pub fn to_matrix(&self) -> Matrix3<T> {
        self.q.to_rotation_matrix().into_inner()
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<T> {
        &self.q
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<T>) -> Self {
        Self { q }
    }

    pub fn inverse(&self) -> Self {
        Self { q: self.q.inverse() }
    }

    pub fn rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.q.transform_vector(v)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> T {
        let q = self.q.quaternion();
        let vnorm = q.imag().norm();
        lit::<T>(2.0) * vnorm.atan2(q.w.abs())
    }

    /// Uniformly distributed rotation (Shoemake's subgroup algorithm).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        Self::from_unit_cube(lit(u1), lit(u2), lit(u3))
    }

    /// Shoemake's map from `[0,1)^3` onto SO(3); uniform inputs give Haar-uniform rotations.
    pub fn from_unit_cube(u1: T, u2: T, u3: T) -> Self {
        let two_pi = T::two_pi();
        let a = (T::one() - u1).sqrt();
        let b = u1.sqrt();
        let (s2, c2) = (two_pi * u2).sin_cos();
        let (s3, c3) = (two_pi * u3).sin_cos();
        Self {
            q: UnitQuaternion::new_unchecked(Quaternion::new(b * c3, a * s2, a * c2, b * s3)),
        }
    }

    pub fn cast<U: Real>(&self) -> Rotation<U> {
        let q = self.q.quaternion();
        Rotation::from_quaternion(
            lit(crate::real::to_f64(q.w)),
            lit(crate::real::to_f64(q.i)),
            lit(crate::real::to_f64(q.j)),
            lit(crate::real::to_f64(q.k)),
        )
    }

    fn canonical_quaternion(&self) -> UnitQuaternion<T> {
        if self.q.w < T::zero() {
            UnitQuaternion::new_unchecked(-self.q.into_inner())
        } else {
            self.q
        }
    }
}

impl<T: Real> Default for Rotation<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Mul for Rotation<T> {
    type Output = Rotation<T>;
    fn mul(self, rhs: Rotation<T>) -> Rotation<T> {
        Rotation { q: self.q * rhs.q }
    }
}

impl<'a, T: Real> Mul<&'a Rotation<T>> for &'a Rotation<T> {
    type Output = Rotation<T>;
    fn mul(self, rhs: &'a Rotation<T>) -> Rotation<T> {
        Rotation { q: self.q * rhs.q }
    }
}

/// Relative rotation angle between `a` and `b`, in `[0, π]`.
pub fn d_ang<T: Real>(a: &Rotation<T>, b: &Rotation<T>) -> T {
    // |w| of the relative quaternion is the clamped dot product of a and b.
    (a * &b.inverse()).angle()
}

/// `R_{C<-L} * R_{L<-O}`: camera-from-object rotation through a local frame.
pub fn compose_frames<T: Real>(cam_from_local: &Rotation<T>, local_from_object: &Rotation<T>) -> Rotation<T> {
    cam_from_local * local_from_object
}

/// Rigid transform from the object frame to the camera frame (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Rotation<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Rotation<T>, translation: Vector3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn transform(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation.rotate(x) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self { rotation: r, translation: -r.rotate(&self.translation) }
    }

    /// `self ∘ rhs`.
    pub fn compose(&self, rhs: &Pose<T>) -> Self {
        Self {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation.rotate(&rhs.translation) + self.translation,
        }
    }

    /// Same translation, rotation right-multiplied by `s` (an object-frame symmetry).
    pub fn with_object_rotation(&self, s: &Rotation<T>) -> Self {
        Self { rotation: self.rotation * *s, translation: self.translation }
    }
}

/// Pinhole intrinsics in pixels. Pixel `(u, v)` covers `[u, u+1) x [v, v+1)`; its center is `(u+0.5, v+0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(Error::InvalidArgument("principal point must lie inside the image".into()));
        }
        Ok(())
    }

    /// Projects a camera-frame point.
    pub fn project_camera_point(&self, p: &Vector3<T>) -> Result<Vector2<T>> {
        if !(p.z > T::zero()) {
            return Err(Error::NonPositiveDepth(crate::real::to_f64(p.z)));
        }
        Ok(Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Unit viewing ray through image location `pixel` (continuous coordinates).
    pub fn ray(&self, pixel: &Vector2<T>) -> Vector3<T> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, T::one()).normalize()
    }

    /// Shifts the principal point for a crop whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: i64, y0: i64, width: u32, height: u32) -> Self {
        Self {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx - lit(x0 as f64),
            cy: self.cy - lit(y0 as f64),
            width,
            height,
        }
    }

    pub fn diagonal(&self) -> T {
        let w: T = lit(self.width as f64);
        let h: T = lit(self.height as f64);
        (w * w + h * h).sqrt()
    }
}

/// Pinhole projection of `pose · x`.
pub fn project<T: Real>(k: &CameraIntrinsics<T>, pose: &Pose<T>, x: &Vector3<T>) -> Result<Vector2<T>> {
    k.project_camera_point(&pose.transform(x))
}

/// Minimal rotation taking the optical axis `(0,0,1)` onto `ray` (zero roll about the ray).
pub fn optical_axis_alignment<T: Real>(ray: &Vector3<T>) -> Rotation<T> {
    let v = ray.normalize();
    // Half-way quaternion between e_z and v: (1 + e_z·v, e_z × v).
    Rotation::from_quaternion(T::one() + v.z, -v.y, v.x, T::zero())
}

/// Allocentric rotation (relative to the viewing ray) to egocentric (relative to the camera axes).
pub fn allo_to_ego<T: Real>(allocentric: &Rotation<T>, ray_to_object_center: &Vector3<T>) -> Rotation<T> {
    optical_axis_alignment(ray_to_object_center) * *allocentric
}

pub fn ego_to_allo<T: Real>(egocentric: &Rotation<T>, ray_to_object_center: &Vector3<T>) -> Rotation<T> {
    optical_axis_alignment(ray_to_object_center).inverse() * *egocentric
}
