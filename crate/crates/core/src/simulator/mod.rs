//! Synthetic world and traverse generator.
//!
//! A straight (optionally gently weaving) trajectory along +x is flanked by
//! bands of landmarks. The route is split into fixed-length quality regions;
//! a [`CameraQualityProfile`] says, per region and camera, how many visible
//! landmarks get matched, how noisy the pixels are, how many matches are
//! outliers and how often a frame drops out entirely.
//!
//! Every (frame, camera) cell draws from its own RNG stream, so degrading one
//! camera in one region leaves every other cell bit-for-bit unchanged.

mod batch;
pub mod scenarios;
mod traverse;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{GeometryError, Pose, Rig};
use crate::seed::derive_seed;

pub use batch::{cell_seed, run_localization_batch, BatchResults, CellResult};
pub use traverse::{generate_traverse, Frame, Traverse, TraverseRole, TRAVERSE_FORMAT_VERSION};

/// Multiplier applied per unit of condition shift to noise and outlier rates.
pub const K_SHIFT: f64 = 2.0;

/// Correspondences kept when a frame-camera cell drops out; below any valid
/// `min_inliers`.
pub const DROPOUT_KEEP: usize = 3;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("traverse line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub trajectory_length_m: f64,
    pub image_spacing_m: f64,
    pub landmarks_per_region: usize,
    pub region_length_m: f64,
    pub rng_seed: u64,
    /// Standard deviation of the error added to mapped 3D points.
    pub map_point_sigma_m: f64,
    /// Lateral weave amplitude; zero gives a straight line.
    pub lateral_amplitude_m: f64,
    pub lateral_wavelength_m: f64,
    /// Landmarks lie between these lateral distances on either side of the road.
    pub band_inner_m: f64,
    pub band_outer_m: f64,
    pub landmark_height_m: (f64, f64),
    /// Landmarks further than this from a camera are not matched.
    pub max_range_m: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            trajectory_length_m: 1000.0,
            image_spacing_m: 1.0,
            landmarks_per_region: 1000,
            region_length_m: 50.0,
            rng_seed: 0,
            map_point_sigma_m: 0.02,
            lateral_amplitude_m: 0.0,
            lateral_wavelength_m: 200.0,
            band_inner_m: 4.0,
            band_outer_m: 20.0,
            landmark_height_m: (0.0, 8.0),
            max_range_m: 60.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let positive = [
            ("trajectory_length_m", self.trajectory_length_m),
            ("image_spacing_m", self.image_spacing_m),
            ("region_length_m", self.region_length_m),
            ("max_range_m", self.max_range_m),
            ("band_outer_m", self.band_outer_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimulationError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.landmarks_per_region == 0 {
            return Err(SimulationError::Config("landmarks_per_region must be > 0".into()));
        }
        if !(self.band_inner_m >= 0.0 && self.band_inner_m < self.band_outer_m) {
            return Err(SimulationError::Config("need 0 <= band_inner_m < band_outer_m".into()));
        }
        let (lo, hi) = self.landmark_height_m;
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(SimulationError::Config("landmark height range is empty".into()));
        }
        if !(self.map_point_sigma_m >= 0.0 && self.lateral_amplitude_m >= 0.0 && self.lateral_wavelength_m > 0.0) {
            return Err(SimulationError::Config(
                "map_point_sigma_m and lateral_amplitude_m must be >= 0, lateral_wavelength_m > 0".into(),
            ));
        }
        if self.num_frames() == 0 {
            return Err(SimulationError::Config(
                "trajectory shorter than one image spacing".into(),
            ));
        }
        Ok(())
    }

    pub fn num_regions(&self) -> usize {
        ((self.trajectory_length_m / self.region_length_m).ceil() as usize).max(1)
    }

    pub fn num_frames(&self) -> usize {
        (self.trajectory_length_m / self.image_spacing_m + 1e-9).floor() as usize
    }

    /// Along-track distance of frame `index`.
    pub fn frame_distance(&self, index: usize) -> f64 {
        index as f64 * self.image_spacing_m
    }

    pub fn region_of_distance(&self, s: f64) -> usize {
        ((s / self.region_length_m).floor().max(0.0) as usize).min(self.num_regions() - 1)
    }

    /// World-from-body pose at along-track distance `s`.
    pub fn pose_at(&self, s: f64) -> Pose<f64> {
        if self.lateral_amplitude_m == 0.0 {
            return Pose::from_translation(Vector3::new(s, 0.0, 0.0));
        }
        let k = std::f64::consts::TAU / self.lateral_wavelength_m;
        let y = self.lateral_amplitude_m * (k * s).sin();
        let heading = (self.lateral_amplitude_m * k * (k * s).cos()).atan();
        Pose::from_axis_angle(&Vector3::z(), heading, Vector3::new(s, y, 0.0))
    }

    pub fn lateral_offset(&self, s: f64) -> f64 {
        if self.lateral_amplitude_m == 0.0 {
            0.0
        } else {
            self.lateral_amplitude_m * (std::f64::consts::TAU / self.lateral_wavelength_m * s).sin()
        }
    }
}

/// Matching quality of one camera inside one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraQuality {
    pub visible_landmark_fraction: f64,
    pub pixel_noise_sigma_px: f64,
    pub outlier_fraction: f64,
    pub dropout_probability: f64,
}

impl CameraQuality {
    pub const PERFECT: CameraQuality = CameraQuality {
        visible_landmark_fraction: 1.0,
        pixel_noise_sigma_px: 0.0,
        outlier_fraction: 0.0,
        dropout_probability: 0.0,
    };

    pub fn validate(&self) -> Result<(), SimulationError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimulationError::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("visible_landmark_fraction", self.visible_landmark_fraction)?;
        unit("outlier_fraction", self.outlier_fraction)?;
        unit("dropout_probability", self.dropout_probability)?;
        if !(self.pixel_noise_sigma_px >= 0.0 && self.pixel_noise_sigma_px.is_finite()) {
            return Err(SimulationError::Config(format!(
                "pixel_noise_sigma_px must be >= 0, got {}",
                self.pixel_noise_sigma_px
            )));
        }
        Ok(())
    }

    /// Quality after a long-term appearance change of strength `shift`.
    pub fn shifted(&self, shift: f64) -> CameraQuality {
        let k = 1.0 + shift * K_SHIFT;
        CameraQuality {
            pixel_noise_sigma_px: self.pixel_noise_sigma_px * k,
            outlier_fraction: (self.outlier_fraction * k).min(1.0),
            ..*self
        }
    }
}

/// Quality per (region, camera), stored region-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraQualityProfile {
    num_regions: usize,
    num_cameras: usize,
    cells: Vec<CameraQuality>,
}

impl CameraQualityProfile {
    pub fn uniform(num_regions: usize, num_cameras: usize, quality: CameraQuality) -> Self {
        Self {
            num_regions,
            num_cameras,
            cells: vec![quality; num_regions * num_cameras],
        }
    }

    pub fn perfect(num_regions: usize, num_cameras: usize) -> Self {
        Self::uniform(num_regions, num_cameras, CameraQuality::PERFECT)
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn num_cameras(&self) -> usize {
        self.num_cameras
    }

    pub fn get(&self, region: usize, camera: usize) -> &CameraQuality {
        &self.cells[region * self.num_cameras + camera]
    }

    pub fn set(&mut self, region: usize, camera: usize, quality: CameraQuality) {
        self.cells[region * self.num_cameras + camera] = quality;
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        if self.cells.len() != self.num_regions * self.num_cameras {
            return Err(SimulationError::Config("profile size mismatch".into()));
        }
        self.cells.iter().try_for_each(CameraQuality::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Vector3<f64>,
}

/// Landmarks, their mapped (perturbed) positions and the quality layout.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub rig: Rig<f64>,
    pub profile: CameraQualityProfile,
    /// Sorted by x; `landmarks[i].id == i`.
    pub landmarks: Vec<Landmark>,
    /// Mapped position of each landmark (true position plus reconstruction error).
    pub map_points: Vec<Vector3<f64>>,
    /// Which landmarks made it into the map; all of them until a map traverse is applied.
    pub mapped: Vec<bool>,
    /// `[start, end)` along-track extent of every region.
    pub region_bounds: Vec<(f64, f64)>,
}

/// Builds the landmark cloud: `landmarks_per_region` points per region, in
/// bands on both sides of the trajectory. The first and last regions' points
/// spread an extra `max_range_m` beyond the route's ends.
pub fn generate_world(
    cfg: &WorldConfig,
    rig: &Rig<f64>,
    profile: &CameraQualityProfile,
) -> Result<World, SimulationError> {
    cfg.validate()?;
    profile.validate()?;
    let num_regions = cfg.num_regions();
    if profile.num_regions() != num_regions || profile.num_cameras() != rig.len() {
        return Err(SimulationError::Config(format!(
            "profile covers {} regions x {} cameras, world has {} regions x {} cameras",
            profile.num_regions(),
            profile.num_cameras(),
            num_regions,
            rig.len()
        )));
    }

    let region_bounds: Vec<(f64, f64)> = (0..num_regions)
        .map(|r| {
            let start = r as f64 * cfg.region_length_m;
            (start, (start + cfg.region_length_m).min(cfg.trajectory_length_m))
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &[0x1a4d]));
    let mut positions = Vec::with_capacity(num_regions * cfg.landmarks_per_region);
    for (r, &(mut start, mut end)) in region_bounds.iter().enumerate() {
        // The end regions reach past the route so cameras near either end
        // still look at scenery.
        if r == 0 {
            start -= cfg.max_range_m;
        }
        if r + 1 == num_regions {
            end += cfg.max_range_m;
        }
        for _ in 0..cfg.landmarks_per_region {
            let s = rng.random_range(start..end.max(start + f64::EPSILON));
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = rng.random_range(cfg.band_inner_m..cfg.band_outer_m);
            let (zlo, zhi) = cfg.landmark_height_m;
            let z = if zhi > zlo { rng.random_range(zlo..zhi) } else { zlo };
            positions.push(Vector3::new(s, cfg.lateral_offset(s) + side * lateral, z));
        }
    }
    positions.sort_by(|a, b| a.x.total_cmp(&b.x));
    let landmarks: Vec<Landmark> = positions
        .into_iter()
        .enumerate()
        .map(|(i, position)| Landmark { id: i as u64, position })
        .collect();

    let mut map_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &[0x3a9]));
    let map_points = if cfg.map_point_sigma_m > 0.0 {
        let noise = Normal::new(0.0, cfg.map_point_sigma_m).expect("sigma validated");
        landmarks
            .iter()
            .map(|l| {
                l.position
                    + Vector3::new(
                        noise.sample(&mut map_rng),
                        noise.sample(&mut map_rng),
                        noise.sample(&mut map_rng),
                    )
            })
            .collect()
    } else {
        landmarks.iter().map(|l| l.position).collect()
    };

    Ok(World {
        config: cfg.clone(),
        rig: rig.clone(),
        profile: profile.clone(),
        mapped: vec![true; landmarks.len()],
        landmarks,
        map_points,
        region_bounds,
    })
}

impl World {
    pub fn num_regions(&self) -> usize {
        self.region_bounds.len()
    }

    pub fn num_frames(&self) -> usize {
        self.config.num_frames()
    }

    /// Restricts matching to landmarks observed in `map`.
    pub fn apply_map(&mut self, map: &Traverse) {
        self.mapped = vec![false; self.landmarks.len()];
        for frame in &map.frames {
            for obs in &frame.observations {
                for c in obs {
                    if let Some(m) = self.mapped.get_mut(c.landmark_id as usize) {
                        *m = true;
                    }
                }
            }
        }
    }

    pub fn mapped_count(&self) -> usize {
        self.mapped.iter().filter(|m| **m).count()
    }

    /// Indices of landmarks whose x lies within `[lo, hi]`.
    pub(crate) fn landmarks_in_x(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.landmarks.partition_point(|l| l.position.x < lo);
        let b = self.landmarks.partition_point(|l| l.position.x <= hi);
        a..b.max(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world(seed: u64) -> World {
        let cfg = WorldConfig {
            trajectory_length_m: 100.0,
            region_length_m: 10.0,
            landmarks_per_region: 200,
            rng_seed: seed,
            ..WorldConfig::default()
        };
        let rig = scenarios::four_camera_rig();
        let profile = CameraQualityProfile::perfect(cfg.num_regions(), rig.len());
        generate_world(&cfg, &rig, &profile).unwrap()
    }

    #[test]
    fn region_and_landmark_counts() {
        let w = small_world(1);
        assert_eq!(w.num_regions(), 10);
        assert_eq!(w.landmarks.len(), 2000);
        assert_eq!(w.num_frames(), 100);
        let cfg = WorldConfig {
            trajectory_length_m: 50.0,
            region_length_m: 10.0,
            landmarks_per_region: 200,
            ..WorldConfig::default()
        };
        let rig = scenarios::four_camera_rig();
        let w = generate_world(&cfg, &rig, &CameraQualityProfile::perfect(5, 4)).unwrap();
        assert_eq!(w.landmarks.len(), 1000);
    }

    #[test]
    fn same_seed_same_landmarks() {
        let a = small_world(7);
        let b = small_world(7);
        let c = small_world(8);
        assert_eq!(a.landmarks, b.landmarks);
        assert_eq!(a.map_points, b.map_points);
        assert_ne!(a.landmarks, c.landmarks);
    }

    #[test]
    fn landmarks_stay_in_their_bands() {
        let w = small_world(3);
        for l in &w.landmarks {
            let lat = l.position.y.abs();
            assert!((4.0..20.0).contains(&lat));
            assert!((-60.0..160.0).contains(&l.position.x));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let rig = scenarios::four_camera_rig();
        let base = WorldConfig {
            trajectory_length_m: 100.0,
            region_length_m: 10.0,
            ..WorldConfig::default()
        };
        for cfg in [
            WorldConfig {
                trajectory_length_m: 0.0,
                ..base.clone()
            },
            WorldConfig {
                image_spacing_m: -1.0,
                ..base.clone()
            },
            WorldConfig {
                region_length_m: 0.0,
                ..base.clone()
            },
            WorldConfig {
                landmarks_per_region: 0,
                ..base.clone()
            },
        ] {
            let profile = CameraQualityProfile::perfect(10, 4);
            assert!(matches!(
                generate_world(&cfg, &rig, &profile),
                Err(SimulationError::Config(_))
            ));
        }
        // profile of the wrong shape
        let profile = CameraQualityProfile::perfect(9, 4);
        assert!(generate_world(&base, &rig, &profile).is_err());
        let mut bad = CameraQualityProfile::perfect(10, 4);
        bad.set(
            0,
            0,
            CameraQuality {
                outlier_fraction: 1.5,
                ..CameraQuality::PERFECT
            },
        );
        assert!(generate_world(&base, &rig, &bad).is_err());
    }

    #[test]
    fn weaving_trajectory_heading_follows_tangent() {
        let cfg = WorldConfig {
            lateral_amplitude_m: 2.0,
            lateral_wavelength_m: 100.0,
            ..WorldConfig::default()
        };
        let p0 = cfg.pose_at(10.0);
        let p1 = cfg.pose_at(10.001);
        let dir = (p1.translation() - p0.translation()).normalize();
        let forward = p0.rotation() * Vector3::x();
        assert!((dir - forward).norm() < 1e-3);
    }
}
