//! Pose estimation from 2D-3D correspondences: a minimal P3P solver inside a
//! seeded RANSAC loop, followed by Gauss-Newton refinement. Works for a single
//! camera or jointly across a rig.

mod p3p;
mod ransac;
mod refine;

use nalgebra::{RealField, Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{CameraModel, Pose};

pub use p3p::solve_p3p;
pub use ransac::{localize_pnp_ransac, localize_rig_pnp, LocalizationCounter};
pub use refine::{refine_pose, refine_pose_multi, reprojection_cost};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizerError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("minimal solver needs exactly 3 correspondences, got {0}")]
    WrongSampleSize(usize),
    #[error("pixel ({u}, {v}) outside the {width}x{height} image")]
    PixelOutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("non-finite correspondence")]
    NonFinite,
    #[error("invalid RANSAC config: {0}")]
    InvalidConfig(String),
}

/// A pixel observation paired with the 3D map point it was matched to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T: RealField + Copy> {
    pub pixel: Vector2<T>,
    pub world_point: Vector3<T>,
    pub landmark_id: u64,
}

impl<T: RealField + Copy> Correspondence<T> {
    /// Checks that the pixel lies inside `cam`'s image and the point is finite.
    pub fn new(
        cam: &CameraModel<T>,
        pixel: Vector2<T>,
        world_point: Vector3<T>,
        landmark_id: u64,
    ) -> Result<Self, LocalizerError> {
        if pixel.iter().chain(world_point.iter()).any(|v| !v.is_finite()) {
            return Err(LocalizerError::NonFinite);
        }
        if !cam.in_bounds(&pixel) {
            return Err(LocalizerError::PixelOutOfBounds {
                u: crate::geometry::to_f64(pixel.x),
                v: crate::geometry::to_f64(pixel.y),
                width: cam.width,
                height: cam.height,
            });
        }
        Ok(Self {
            pixel,
            world_point,
            landmark_id,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig<T> {
    pub inlier_threshold_px: T,
    pub max_iterations: usize,
    pub confidence: T,
    pub min_inliers: usize,
    pub rng_seed: u64,
}

impl<T: RealField + Copy> Default for RansacConfig<T> {
    fn default() -> Self {
        Self {
            inlier_threshold_px: nalgebra::convert(2.0),
            max_iterations: 1000,
            confidence: nalgebra::convert(0.99),
            min_inliers: 4,
            rng_seed: 0,
        }
    }
}

impl<T: RealField + Copy> RansacConfig<T> {
    pub fn validate(&self) -> Result<(), LocalizerError> {
        if self.inlier_threshold_px <= T::zero() || !self.inlier_threshold_px.is_finite() {
            return Err(LocalizerError::InvalidConfig("inlier_threshold_px must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(LocalizerError::InvalidConfig("max_iterations must be > 0".into()));
        }
        if !(self.confidence > T::zero() && self.confidence < T::one()) {
            return Err(LocalizerError::InvalidConfig("confidence must lie in (0, 1)".into()));
        }
        if self.min_inliers < 4 {
            return Err(LocalizerError::InvalidConfig("min_inliers must be >= 4".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalizationStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult<T: RealField + Copy> {
    pub status: LocalizationStatus,
    /// Estimated world-from-body pose; `None` when localization failed.
    pub pose: Option<Pose<T>>,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
    pub num_matched_points: usize,
}

impl<T: RealField + Copy> LocalizationResult<T> {
    pub(crate) fn new(
        pose: Option<Pose<T>>,
        inlier_count: usize,
        num_matched_points: usize,
        min_inliers: usize,
    ) -> Self {
        let success = pose.is_some() && inlier_count >= min_inliers;
        Self {
            status: if success {
                LocalizationStatus::Success
            } else {
                LocalizationStatus::Failed
            },
            pose: if success { pose } else { None },
            inlier_count,
            inlier_ratio: inlier_count as f64 / num_matched_points.max(1) as f64,
            num_matched_points,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == LocalizationStatus::Success
    }
}

/// One camera's observations, as consumed by the rig-level solvers.
#[derive(Debug, Clone, Copy)]
pub struct View<'a, T: RealField + Copy> {
    pub camera: &'a CameraModel<T>,
    pub correspondences: &'a [Correspondence<T>],
}

/// Squared reprojection error of `corr` seen by `cam` on a body at `body_pose`,
/// or `None` when the point is behind the camera.
pub(crate) fn squared_residual<T: RealField + Copy>(
    cam: &CameraModel<T>,
    camera_from_world: &Pose<T>,
    corr: &Correspondence<T>,
) -> Option<T> {
    let p = camera_from_world.transform_point(&corr.world_point);
    cam.project_camera_point(&p)
        .pixel()
        .map(|px| (px - corr.pixel).norm_squared())
}

/// Counts correspondences reprojecting within `threshold_px` of their pixel.
pub fn count_inliers<T: RealField + Copy>(
    cam: &CameraModel<T>,
    body_pose: &Pose<T>,
    corrs: &[Correspondence<T>],
    threshold_px: T,
) -> usize {
    let cfw = cam.camera_from_world(body_pose);
    let thr2 = threshold_px * threshold_px;
    corrs
        .iter()
        .filter(|c| squared_residual(cam, &cfw, c).is_some_and(|e| e <= thr2))
        .count()
}
