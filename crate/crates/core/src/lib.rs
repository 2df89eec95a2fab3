//! Place-specific camera selection for multi-camera visual localization.
//!
//! Geometry, the PnP+RANSAC localizer and the expected-cost selection are
//! generic over the scalar type; the simulator, baselines and pipeline are
//! fixed to `f64`. The aliases below name the `f64` instantiations.

pub mod baselines;
pub mod cli;
pub mod evaluation;
pub mod geometry;
pub mod localizer;
pub mod pipeline;
pub mod seed;
pub mod selection;
pub mod simulator;

pub type Pose = geometry::Pose<f64>;
pub type CameraModel = geometry::CameraModel<f64>;
pub type Rig = geometry::Rig<f64>;
pub type PoseError = geometry::PoseError<f64>;
pub type Correspondence = localizer::Correspondence<f64>;
pub type RansacConfig = localizer::RansacConfig<f64>;
pub type LocalizationResult = localizer::LocalizationResult<f64>;
pub type CostFunction = selection::CostFunction<f64>;
pub type KdeConfig = selection::KdeConfig<f64>;
pub type PoseErrorSampleSet = selection::PoseErrorSampleSet<f64>;
