//! TOML run configuration.
//!
//! ```toml
//! output_dir = "out"
//!
//! [seeds]
//! master = 42
//!
//! [world]
//! trajectory_length_m = 1000.0
//! region_length_m = 50.0
//! landmarks_per_region = 500
//!
//! [rig]
//! preset = "four_camera"
//!
//! [profile]
//! base = "good"
//!
//! [[profile.override]]
//! regions = [3, 5]          # inclusive range of region indices
//! cameras = [2]
//! dropout_probability = 1.0
//! ```
//!
//! Every other section (`places`, `cost`, `kde`, `ransac`, `evaluation`,
//! `query`) is optional and falls back to defaults. Unknown keys are errors.

use std::path::PathBuf;

use nalgebra::Vector3;
use serde::Deserialize;

use crate::baselines::SelectorKind;
use crate::evaluation::{default_bins, FailureThresholds, ToleranceBin};
use crate::geometry::{CameraModel, Pose, Rig};
use crate::localizer::RansacConfig;
use crate::pipeline::{LogSpec, PipelineConfig, Seeds};
use crate::selection::{CostFunction, ExpectationMode, KdeConfig, Kernel};
use crate::simulator::scenarios::{four_camera_rig, standard_camera, worst_case_profile, yawed_mount, BAD, GOOD};
use crate::simulator::{CameraQuality, CameraQualityProfile, WorldConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub seeds: SeedsSection,
    pub world: WorldSection,
    pub rig: RigSection,
    pub profile: ProfileSection,
    #[serde(default)]
    pub places: PlacesSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub kde: KdeSection,
    #[serde(default)]
    pub ransac: RansacSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub query: QuerySection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    pub master: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub trajectory_length_m: f64,
    #[serde(default = "one")]
    pub image_spacing_m: f64,
    pub landmarks_per_region: usize,
    pub region_length_m: f64,
    pub map_point_sigma_m: Option<f64>,
    pub lateral_amplitude_m: Option<f64>,
    pub lateral_wavelength_m: Option<f64>,
    pub band_inner_m: Option<f64>,
    pub band_outer_m: Option<f64>,
    pub landmark_height_m: Option<(f64, f64)>,
    pub max_range_m: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSection {
    pub preset: Option<String>,
    #[serde(default)]
    pub cameras: Vec<CameraSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    #[serde(default = "default_f")]
    pub fx: f64,
    #[serde(default = "default_f")]
    pub fy: f64,
    #[serde(default = "default_cx")]
    pub cx: f64,
    #[serde(default = "default_cy")]
    pub cy: f64,
    #[serde(default = "default_w")]
    pub width: u32,
    #[serde(default = "default_h")]
    pub height: u32,
    /// Level camera yawed from the vehicle's forward axis.
    pub yaw_deg: Option<f64>,
    #[serde(default)]
    pub position: [f64; 3],
    /// Full body-from-camera transform (9 rotation numbers row-major, then translation).
    pub extrinsic: Option<Vec<f64>>,
}

fn default_f() -> f64 {
    400.0
}
fn default_cx() -> f64 {
    320.0
}
fn default_cy() -> f64 {
    240.0
}
fn default_w() -> u32 {
    640
}
fn default_h() -> u32 {
    480
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    /// perfect | good | bad | worst_case
    pub base: String,
    #[serde(default, rename = "override")]
    pub overrides: Vec<QualityOverride>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityOverride {
    pub regions: [usize; 2],
    pub cameras: Vec<usize>,
    pub visible_landmark_fraction: Option<f64>,
    pub pixel_noise_sigma_px: Option<f64>,
    pub outlier_fraction: Option<f64>,
    pub dropout_probability: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacesSection {
    pub width: usize,
    pub stride: usize,
}

impl Default for PlacesSection {
    fn default() -> Self {
        Self { width: 40, stride: 10 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub p: f64,
    pub x_max: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        let c = CostFunction::<f64>::default();
        Self { p: c.p, x_max: c.x_max }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdeSection {
    pub kernel: String,
    pub bandwidth: f64,
    pub samples: usize,
    /// mc | quadrature
    pub mode: String,
}

impl Default for KdeSection {
    fn default() -> Self {
        let k = KdeConfig::<f64>::default();
        Self {
            kernel: k.kernel.name().into(),
            bandwidth: k.bandwidth,
            samples: k.mc_samples,
            mode: k.mode.name().into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacSection {
    pub inlier_threshold_px: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub min_inliers: usize,
}

impl Default for RansacSection {
    fn default() -> Self {
        let r = RansacConfig::<f64>::default();
        Self {
            inlier_threshold_px: r.inlier_threshold_px,
            max_iterations: r.max_iterations,
            confidence: r.confidence,
            min_inliers: r.min_inliers,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSection {
    pub name: String,
    pub slices: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// `[translation_m, rotation_deg]` pairs.
    pub bins: Vec<[f64; 2]>,
    pub thresholds_pct: Vec<f64>,
    pub slice_frames: usize,
    pub logs: Vec<LogSection>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            bins: default_bins().iter().map(|b| [b.t_tol, b.r_tol]).collect(),
            thresholds_pct: FailureThresholds::default().min_recall_pct,
            slice_frames: 1000,
            logs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuerySection {
    pub selectors: Vec<String>,
    pub condition_shift: f64,
}

impl Default for QuerySection {
    fn default() -> Self {
        Self {
            selectors: SelectorKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            condition_shift: 0.0,
        }
    }
}

/// Error naming the offending config field.
#[derive(Debug, thiserror::Error)]
#[error("config field `{field}`: {message}")]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

fn field(field: &str, message: impl ToString) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.to_string(),
    }
}

impl RunConfig {
    /// Resolves presets and defaults into a validated pipeline config.
    pub fn to_pipeline(&self) -> Result<PipelineConfig, FieldError> {
        let w = &self.world;
        let defaults = WorldConfig::default();
        let world = WorldConfig {
            trajectory_length_m: w.trajectory_length_m,
            image_spacing_m: w.image_spacing_m,
            landmarks_per_region: w.landmarks_per_region,
            region_length_m: w.region_length_m,
            rng_seed: 0,
            map_point_sigma_m: w.map_point_sigma_m.unwrap_or(defaults.map_point_sigma_m),
            lateral_amplitude_m: w.lateral_amplitude_m.unwrap_or(defaults.lateral_amplitude_m),
            lateral_wavelength_m: w.lateral_wavelength_m.unwrap_or(defaults.lateral_wavelength_m),
            band_inner_m: w.band_inner_m.unwrap_or(defaults.band_inner_m),
            band_outer_m: w.band_outer_m.unwrap_or(defaults.band_outer_m),
            landmark_height_m: w.landmark_height_m.unwrap_or(defaults.landmark_height_m),
            max_range_m: w.max_range_m.unwrap_or(defaults.max_range_m),
        };
        world.validate().map_err(|e| field("world", e))?;

        let rig = self.build_rig()?;
        let profile = self.build_profile(world.num_regions(), rig.len())?;

        let kernel = Kernel::from_name(&self.kde.kernel).ok_or_else(|| field("kde.kernel", "expected `gaussian`"))?;
        let mode = ExpectationMode::from_name(&self.kde.mode)
            .ok_or_else(|| field("kde.mode", "expected `mc` or `quadrature`"))?;
        let kde = KdeConfig {
            kernel,
            bandwidth: self.kde.bandwidth,
            mc_samples: self.kde.samples,
            rng_seed: 0,
            mode,
        };
        kde.validate().map_err(|e| field("kde", e))?;
        let cost = CostFunction::new(self.cost.p, self.cost.x_max).map_err(|e| field("cost", e))?;
        let ransac = RansacConfig {
            inlier_threshold_px: self.ransac.inlier_threshold_px,
            max_iterations: self.ransac.max_iterations,
            confidence: self.ransac.confidence,
            min_inliers: self.ransac.min_inliers,
            rng_seed: 0,
        };
        ransac.validate().map_err(|e| field("ransac", e))?;

        let bins = self
            .evaluation
            .bins
            .iter()
            .map(|[t, r]| ToleranceBin::new(*t, *r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| field("evaluation.bins", e))?;
        let thresholds = FailureThresholds {
            min_recall_pct: self.evaluation.thresholds_pct.clone(),
        };
        thresholds
            .validate(bins.len())
            .map_err(|e| field("evaluation.thresholds_pct", e))?;
        let selectors = self
            .query
            .selectors
            .iter()
            .map(|s| s.parse::<SelectorKind>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| field("query.selectors", e))?;

        let cfg = PipelineConfig {
            world,
            rig,
            profile,
            place_width: self.places.width,
            place_stride: self.places.stride,
            cost,
            kde,
            ransac,
            selectors,
            bins,
            thresholds,
            slice_frames: self.evaluation.slice_frames,
            logs: self
                .evaluation
                .logs
                .iter()
                .map(|l| LogSpec {
                    name: l.name.clone(),
                    slices: l.slices,
                })
                .collect(),
            condition_shift: self.query.condition_shift,
            seeds: Seeds {
                master: self.seeds.master,
            },
        };
        cfg.validate().map_err(|e| field("config", e))?;
        Ok(cfg)
    }

    fn build_rig(&self) -> Result<Rig<f64>, FieldError> {
        match (&self.rig.preset, self.rig.cameras.is_empty()) {
            (Some(p), true) if p == "four_camera" => Ok(four_camera_rig()),
            (Some(p), true) => Err(field(
                "rig.preset",
                format!("unknown preset `{p}`; expected `four_camera`"),
            )),
            (Some(_), false) => Err(field("rig", "give either `preset` or `cameras`, not both")),
            (None, true) => Err(field("rig", "needs a `preset` or at least one `cameras` entry")),
            (None, false) => {
                let cams = self
                    .rig
                    .cameras
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let name = format!("rig.cameras[{i}]");
                        let extrinsic = match (&c.extrinsic, c.yaw_deg) {
                            (Some(v), None) => Pose::from_slice(v).map_err(|e| field(&name, e))?,
                            (None, Some(yaw)) => yawed_mount(yaw, Vector3::from(c.position)),
                            _ => return Err(field(&name, "give exactly one of `yaw_deg` or `extrinsic`")),
                        };
                        if (c.fx, c.fy, c.cx, c.cy, c.width, c.height) == (400.0, 400.0, 320.0, 240.0, 640, 480) {
                            return Ok(standard_camera(i, extrinsic));
                        }
                        CameraModel::new(i, c.fx, c.fy, c.cx, c.cy, c.width, c.height, extrinsic)
                            .map_err(|e| field(&name, e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Rig::new(cams).map_err(|e| field("rig", e))
            }
        }
    }

    fn build_profile(&self, num_regions: usize, num_cameras: usize) -> Result<CameraQualityProfile, FieldError> {
        let base = match self.profile.base.as_str() {
            "perfect" => CameraQualityProfile::perfect(num_regions, num_cameras),
            "good" => CameraQualityProfile::uniform(num_regions, num_cameras, GOOD),
            "bad" => CameraQualityProfile::uniform(num_regions, num_cameras, BAD),
            "worst_case" => worst_case_profile(num_cameras, &[1, 4, 7]),
            other => {
                return Err(field(
                    "profile.base",
                    format!("unknown base `{other}`; expected perfect, good, bad or worst_case"),
                ))
            }
        };
        if base.num_regions() != num_regions {
            return Err(field(
                "profile.base",
                format!("preset covers {} regions, world has {num_regions}", base.num_regions()),
            ));
        }
        let mut profile = base;
        for (i, o) in self.profile.overrides.iter().enumerate() {
            let name = format!("profile.override[{i}]");
            let [first, last] = o.regions;
            if first > last || last >= num_regions {
                return Err(field(
                    &name,
                    format!("regions [{first}, {last}] outside 0..{num_regions}"),
                ));
            }
            for &cam in &o.cameras {
                if cam >= num_cameras {
                    return Err(field(&name, format!("camera {cam} not in rig")));
                }
                for region in first..=last {
                    let q = *profile.get(region, cam);
                    let q = CameraQuality {
                        visible_landmark_fraction: o.visible_landmark_fraction.unwrap_or(q.visible_landmark_fraction),
                        pixel_noise_sigma_px: o.pixel_noise_sigma_px.unwrap_or(q.pixel_noise_sigma_px),
                        outlier_fraction: o.outlier_fraction.unwrap_or(q.outlier_fraction),
                        dropout_probability: o.dropout_probability.unwrap_or(q.dropout_probability),
                    };
                    q.validate().map_err(|e| field(&name, e))?;
                    profile.set(region, cam, q);
                }
            }
        }
        Ok(profile)
    }
}
