#![allow(dead_code)]

use nalgebra::{Vector2, Vector3};
use placecam::geometry::{project, CameraModel, Pose};
use placecam::localizer::Correspondence;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn camera(id: usize, extrinsic: Pose<f64>) -> CameraModel<f64> {
    CameraModel::new(id, 500.0, 500.0, 320.0, 240.0, 640, 480, extrinsic).unwrap()
}

pub fn random_pose<R: Rng>(rng: &mut R) -> Pose<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    Pose::from_axis_angle(
        &axis,
        rng.random_range(-3.0..3.0),
        Vector3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        ),
    )
}

/// `n` points seen by `cam` on a body at `body`, with Gaussian pixel noise;
/// the last `outliers` correspondences get a uniformly random pixel instead.
pub fn scene<R: Rng>(
    rng: &mut R,
    cam: &CameraModel<f64>,
    body: &Pose<f64>,
    n: usize,
    outliers: usize,
    sigma_px: f64,
) -> Vec<Correspondence<f64>> {
    let wfc = body.compose(&cam.extrinsic);
    let noise = Normal::new(0.0, sigma_px.max(1e-300)).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let px = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let world = wfc.transform_point(&(cam.pixel_ray(&px) * rng.random_range(3.0..40.0)));
        let pixel = if out.len() >= n - outliers {
            Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0))
        } else {
            let clean = project(cam, body, &world).unwrap().pixel().unwrap();
            if sigma_px > 0.0 {
                clean + Vector2::new(noise.sample(rng), noise.sample(rng))
            } else {
                clean
            }
        };
        if let Ok(c) = Correspondence::new(cam, pixel, world, out.len() as u64) {
            out.push(c);
        }
    }
    out
}
