//! Rigid-body poses, pinhole cameras, multi-camera rigs and pose-error metrics.
//!
//! Everything here is generic over the scalar type (`f32` or `f64`). Poses are
//! stored as a rotation matrix plus translation; a [`Pose`] applied to a point
//! maps it from the source frame into the target frame (e.g. a body pose is
//! world-from-body).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, RealField, Rotation3, Unit, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with determinant +1 (residual {0:e})")]
    NotARotation(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("pose must have 12 numbers, got {0}")]
    PoseArity(usize),
    #[error("cannot parse pose component {0:?}")]
    PoseParse(String),
}

/// Tolerance used when validating rotation matrices: 1e-9 for `f64`, scaled up
/// to a few ulps for lower precision types.
pub fn rotation_tolerance<T: RealField + Copy>() -> T {
    let eps = T::default_epsilon() * nalgebra::convert(1.0e4);
    let floor: T = nalgebra::convert(1.0e-9);
    eps.max(floor)
}

pub(crate) fn to_f64<T: RealField + Copy>(x: T) -> f64 {
    nalgebra::try_convert(x).unwrap_or(f64::NAN)
}

/// A rigid transform. Applying it maps points from the source frame into the
/// target frame: `p_target = rotation * p_source + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: RealField + Copy> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: RealField + Copy> Pose<T> {
    /// Builds a pose, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("pose"));
        }
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        let tol = rotation_tolerance::<T>();
        if residual > tol || (det - T::one()).abs() > tol * nalgebra::convert(3.0) {
            return Err(GeometryError::NotARotation(to_f64(
                residual.max((det - T::one()).abs()),
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about a unit axis by `angle` radians.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T, translation: Vector3<T>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Rotation from a scaled-axis (rotation vector) parameterisation.
    pub fn from_scaled_axis(omega: Vector3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: Rotation3::new(omega).into_inner(),
            translation,
        }
    }

    /// Re-orthonormalises a nearly-rotation matrix (SVD projection) and builds a pose.
    pub fn from_approx_rotation(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: nearest_rotation(&rotation),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose<T> {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Row-major rotation followed by translation xyz.
    pub fn to_array(&self) -> [T; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[0],
            t[1],
            t[2],
        ]
    }

    pub fn from_slice(values: &[T]) -> Result<Self, GeometryError> {
        if values.len() != 12 {
            return Err(GeometryError::PoseArity(values.len()));
        }
        let rotation = Matrix3::from_row_slice(&values[..9]);
        let translation = Vector3::new(values[9], values[10], values[11]);
        Self::new(rotation, translation)
    }
}

impl<T: RealField + Copy> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: RealField + Copy + fmt::Display> fmt::Display for Pose<T> {
    /// Twelve space-separated numbers in shortest round-trip form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.to_array().iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl<T: RealField + Copy + FromStr> FromStr for Pose<T> {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let values = s
            .split_whitespace()
            .map(|tok| tok.parse::<T>().map_err(|_| GeometryError::PoseParse(tok.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Pose::from_slice(&values)
    }
}

/// Closest rotation matrix in the Frobenius sense.
pub fn nearest_rotation<T: RealField + Copy>(m: &Matrix3<T>) -> Matrix3<T> {
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Matrix3::identity();
    };
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    u * d * v_t
}

/// Pinhole camera with fixed body-from-camera extrinsic.
///
/// Camera frame convention: +z along the optical axis, +x right, +y down.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<T: RealField + Copy> {
    pub camera_id: usize,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
    /// body-from-camera
    pub extrinsic: Pose<T>,
}

/// Result of projecting a point into a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection<T: RealField + Copy> {
    Pixel(Vector2<T>),
    /// The point has non-positive depth in the camera frame.
    Behind,
}

impl<T: RealField + Copy> Projection<T> {
    pub fn pixel(&self) -> Option<Vector2<T>> {
        match self {
            Projection::Pixel(p) => Some(*p),
            Projection::Behind => None,
        }
    }
}

impl<T: RealField + Copy> CameraModel<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        camera_id: usize,
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: u32,
        height: u32,
        extrinsic: Pose<T>,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            camera_id,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsic,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let w: T = nalgebra::convert(self.width as f64);
        let h: T = nalgebra::convert(self.height as f64);
        if [self.fx, self.fy, self.cx, self.cy].iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("intrinsics"));
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(GeometryError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        if self.cx < T::zero() || self.cx >= w || self.cy < T::zero() || self.cy >= h {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                to_f64(self.cx),
                to_f64(self.cy),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    pub fn width_t(&self) -> T {
        nalgebra::convert(self.width as f64)
    }

    pub fn height_t(&self) -> T {
        nalgebra::convert(self.height as f64)
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project_camera_point(&self, p: &Vector3<T>) -> Projection<T> {
        if p.z <= T::zero() {
            return Projection::Behind;
        }
        Projection::Pixel(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Unit-less normalised ray direction (x/z, y/z, 1) through a pixel.
    pub fn pixel_ray(&self, pixel: &Vector2<T>) -> Vector3<T> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, T::one())
    }

    pub fn in_bounds(&self, pixel: &Vector2<T>) -> bool {
        pixel.x >= T::zero() && pixel.y >= T::zero() && pixel.x < self.width_t() && pixel.y < self.height_t()
    }

    /// camera-from-world for a given world-from-body pose.
    pub fn camera_from_world(&self, body_pose: &Pose<T>) -> Pose<T> {
        body_pose.compose(&self.extrinsic).inverse()
    }
}

/// Projects a world point into `cam` mounted on a body at `body_pose`
/// (world-from-body).
pub fn project<T: RealField + Copy>(
    cam: &CameraModel<T>,
    body_pose: &Pose<T>,
    world_point: &Vector3<T>,
) -> Result<Projection<T>, GeometryError> {
    if world_point.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite("world point"));
    }
    let p_cam = cam.camera_from_world(body_pose).transform_point(world_point);
    Ok(cam.project_camera_point(&p_cam))
}

/// Inverse of [`project`]: the world point on the ray through `pixel` at
/// camera-frame depth `depth`.
pub fn unproject<T: RealField + Copy>(
    cam: &CameraModel<T>,
    body_pose: &Pose<T>,
    pixel: &Vector2<T>,
    depth: T,
) -> Vector3<T> {
    let p_cam = cam.pixel_ray(pixel) * depth;
    body_pose.compose(&cam.extrinsic).transform_point(&p_cam)
}

/// Ordered set of cameras with contiguous ids starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig<T: RealField + Copy> {
    cameras: Vec<CameraModel<T>>,
}

impl<T: RealField + Copy> Rig<T> {
    pub fn new(cameras: Vec<CameraModel<T>>) -> Result<Self, GeometryError> {
        if cameras.is_empty() {
            return Err(GeometryError::InvalidRig("rig needs at least one camera".into()));
        }
        for (i, cam) in cameras.iter().enumerate() {
            if cam.camera_id != i {
                return Err(GeometryError::InvalidRig(format!(
                    "camera at position {i} has id {}; ids must be contiguous from 0",
                    cam.camera_id
                )));
            }
            cam.validate()?;
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[CameraModel<T>] {
        &self.cameras
    }

    pub fn camera(&self, id: usize) -> Option<&CameraModel<T>> {
        self.cameras.get(id)
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// Translation (meters) and rotation (degrees) error between two poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError<T> {
    pub translation_err: T,
    pub rotation_err: T,
}

impl<T: RealField + Copy> PoseError<T> {
    /// Error record for a failed localization: infinite translation error, 180°.
    pub fn failed() -> Self {
        Self {
            translation_err: nalgebra::convert(f64::INFINITY),
            rotation_err: nalgebra::convert(180.0),
        }
    }

    pub fn is_failed(&self) -> bool {
        !self.translation_err.is_finite()
    }
}

/// Geodesic angle between two rotations, in degrees.
pub fn rotation_angle_deg<T: RealField + Copy>(a: &Matrix3<T>, b: &Matrix3<T>) -> T {
    let rel = a * b.transpose();
    let two: T = nalgebra::convert(2.0);
    let cos = ((rel.trace() - T::one()) / two).clamp(-T::one(), T::one());
    // Same angle as acos(cos), but well conditioned near 0 and 180 degrees.
    let skew = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = (skew.norm() / two).min(T::one());
    sin.atan2(cos).to_degrees_generic()
}

trait ToDegrees {
    fn to_degrees_generic(self) -> Self;
}

impl<T: RealField + Copy> ToDegrees for T {
    fn to_degrees_generic(self) -> Self {
        self * nalgebra::convert::<f64, T>(180.0) / T::pi()
    }
}

/// World-frame translation difference and geodesic rotation angle.
pub fn pose_error<T: RealField + Copy>(estimate: &Pose<T>, truth: &Pose<T>) -> PoseError<T> {
    PoseError {
        translation_err: (estimate.translation - truth.translation).norm(),
        rotation_err: rotation_angle_deg(&estimate.rotation, &truth.rotation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn cam() -> CameraModel<f64> {
        CameraModel::new(0, 100.0, 100.0, 50.0, 50.0, 100, 100, Pose::identity()).unwrap()
    }

    fn close(a: &Pose<f64>, b: &Pose<f64>, tol: f64) -> bool {
        a.to_array()
            .iter()
            .zip(b.to_array().iter())
            .all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let p = Pose::from_axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.7, Vector3::new(1.0, -2.0, 3.0));
        assert!(close(&Pose::identity().compose(&p), &p, 0.0));
        assert!(close(&p.compose(&p.inverse()), &Pose::identity(), 1e-12));
    }

    #[test]
    fn two_quarter_turns_make_a_half_turn() {
        let q = Pose::from_axis_angle(&Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let half = q.compose(&q);
        // Rz(90)·Rz(90) by direct multiplication: [[-1,0,0],[0,-1,0],[0,0,1]]
        let expected = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((half.rotation() - expected).amax() < 1e-12);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            Pose::new(m, Vector3::zeros()),
            Err(GeometryError::NotARotation(_))
        ));
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn projection_examples() {
        let c = cam();
        let p = project(&c, &Pose::identity(), &Vector3::new(0.0, 0.0, 7.0)).unwrap();
        assert_eq!(p, Projection::Pixel(Vector2::new(50.0, 50.0)));
        let p = project(&c, &Pose::identity(), &Vector3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!(p, Projection::Pixel(Vector2::new(100.0, 50.0)));
        let p = project(&c, &Pose::identity(), &Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(p, Projection::Behind);
        assert!(project(&c, &Pose::identity(), &Vector3::new(f64::NAN, 0.0, 1.0)).is_err());
    }

    #[test]
    fn invalid_intrinsics() {
        assert!(CameraModel::new(0, 0.0, 1.0, 1.0, 1.0, 10, 10, Pose::<f64>::identity()).is_err());
        assert!(CameraModel::new(0, 1.0, 1.0, 10.0, 1.0, 10, 10, Pose::<f64>::identity()).is_err());
    }

    #[test]
    fn rig_ids_must_be_contiguous() {
        let mut c1 = cam();
        c1.camera_id = 2;
        assert!(Rig::new(vec![cam(), c1]).is_err());
        assert!(Rig::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn pose_error_examples() {
        let p = Pose::<f64>::from_axis_angle(&Vector3::x(), 0.3, Vector3::new(1.0, 1.0, 1.0));
        let e = pose_error(&p, &p);
        assert_eq!(e.translation_err, 0.0);
        assert!(e.rotation_err.abs() < 1e-6_f64);

        let a = Pose::from_translation(Vector3::new(3.0, 4.0, 0.0));
        let e = pose_error(&a, &Pose::identity());
        assert_eq!(e.translation_err, 5.0);
        assert_eq!(e.rotation_err, 0.0);

        let r = Pose::from_axis_angle(&Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let e = pose_error(&r, &Pose::identity());
        assert_eq!(e.translation_err, 0.0);
        assert!((e.rotation_err - 90.0).abs() < 1e-9);
    }

    #[test]
    fn pose_text_round_trip() {
        let p = Pose::from_axis_angle(&Vector3::new(0.3, -1.0, 0.2), 1.1, Vector3::new(0.1, 2.0, -3.5));
        let s = p.to_string();
        let q: Pose<f64> = s.parse().unwrap();
        assert_eq!(p, q);
        assert!("1 2 3".parse::<Pose<f64>>().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = Pose::<f32>::from_axis_angle(&Vector3::z(), 0.5, Vector3::new(1.0, 0.0, 0.0));
        let id = p.compose(&p.inverse());
        assert!((id.rotation() - Matrix3::identity()).amax() < 1e-6);
        assert!(Pose::<f32>::new(*p.rotation(), *p.translation()).is_ok());
    }
}
