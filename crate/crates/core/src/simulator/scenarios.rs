//! Ready-made rigs and quality layouts.

use nalgebra::{Matrix3, Vector3};

use super::{CameraQuality, CameraQualityProfile, WorldConfig};
use crate::geometry::{CameraModel, Pose, Rig};

/// A forward-looking body-from-camera extrinsic: camera yawed by `yaw_deg`
/// from the vehicle's +x axis, optical axis level, image +y pointing down.
pub fn yawed_mount(yaw_deg: f64, position: Vector3<f64>) -> Pose<f64> {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    // Columns: camera x (right), y (down), z (forward) in body coordinates.
    let r = Matrix3::from_columns(&[
        Vector3::new(s, -c, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(c, s, 0.0),
    ]);
    Pose::new(r, position).expect("yaw mount is a rotation")
}

/// 640x480 pinhole camera, f = 400 px.
pub fn standard_camera(camera_id: usize, extrinsic: Pose<f64>) -> CameraModel<f64> {
    CameraModel::new(camera_id, 400.0, 400.0, 320.0, 240.0, 640, 480, extrinsic).expect("valid intrinsics")
}

/// Front-left, front-right, side-left and side-right cameras.
pub fn four_camera_rig() -> Rig<f64> {
    let mounts = [
        (40.0, Vector3::new(1.5, 0.5, 1.5)),
        (-40.0, Vector3::new(1.5, -0.5, 1.5)),
        (90.0, Vector3::new(0.0, 0.9, 1.5)),
        (-90.0, Vector3::new(0.0, -0.9, 1.5)),
    ];
    Rig::new(
        mounts
            .iter()
            .enumerate()
            .map(|(i, (yaw, pos))| standard_camera(i, yawed_mount(*yaw, *pos)))
            .collect(),
    )
    .expect("contiguous ids")
}

pub const GOOD: CameraQuality = CameraQuality {
    visible_landmark_fraction: 0.8,
    pixel_noise_sigma_px: 1.0,
    outlier_fraction: 0.2,
    dropout_probability: 0.0,
};

pub const BAD: CameraQuality = CameraQuality {
    visible_landmark_fraction: 0.25,
    pixel_noise_sigma_px: 6.0,
    outlier_fraction: 0.5,
    dropout_probability: 0.6,
};

/// A 10 km route cut into ten 1000-frame slices with four cameras, built so
/// that no single camera is good for a whole slice in the "hard" slices.
///
/// * Normal slice `s`: camera `s % 4` is good everywhere; every other camera
///   is bad in alternating regions.
/// * Hard slice: the slice's 20 regions are split into four blocks of five;
///   camera `c` is good only in block `c` and bad elsewhere.
///
/// A per-slice static camera therefore covers a quarter of each hard slice,
/// while a per-place choice can follow the good camera from block to block.
#[derive(Debug, Clone)]
pub struct WorstCaseScenario {
    pub world: WorldConfig,
    pub rig: Rig<f64>,
    pub profile: CameraQualityProfile,
    pub slice_frames: usize,
    pub hard_slices: Vec<usize>,
}

impl WorstCaseScenario {
    pub const NUM_SLICES: usize = 10;
    pub const REGIONS_PER_SLICE: usize = 20;

    pub fn new(seed: u64) -> Self {
        let world = WorldConfig {
            trajectory_length_m: 10_000.0,
            image_spacing_m: 1.0,
            landmarks_per_region: 500,
            region_length_m: 50.0,
            rng_seed: seed,
            ..WorldConfig::default()
        };
        let rig = four_camera_rig();
        let hard_slices = vec![1, 4, 7];
        let profile = worst_case_profile(rig.len(), &hard_slices);
        Self {
            world,
            rig,
            profile,
            slice_frames: 1000,
            hard_slices,
        }
    }
}

/// Quality layout of [`WorstCaseScenario`] for `num_cameras` cameras.
pub fn worst_case_profile(num_cameras: usize, hard_slices: &[usize]) -> CameraQualityProfile {
    let per_slice = WorstCaseScenario::REGIONS_PER_SLICE;
    let mut profile = CameraQualityProfile::uniform(WorstCaseScenario::NUM_SLICES * per_slice, num_cameras, GOOD);
    for slice in 0..WorstCaseScenario::NUM_SLICES {
        for local in 0..per_slice {
            let region = slice * per_slice + local;
            for cam in 0..num_cameras {
                let good = if hard_slices.contains(&slice) {
                    local * num_cameras / per_slice == cam
                } else {
                    cam == slice % num_cameras || local % 2 == 0
                };
                profile.set(region, cam, if good { GOOD } else { BAD });
            }
        }
    }
    profile
}
