use rayon::prelude::*;

use super::Traverse;
use crate::geometry::{pose_error, PoseError, Rig};
use crate::localizer::{localize_pnp_ransac, LocalizationResult, RansacConfig};
use crate::seed::derive_seed;

/// Outcome of localizing one camera in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub result: LocalizationResult<f64>,
    /// Error against ground truth; [`PoseError::failed`] when localization failed.
    pub error: PoseError<f64>,
}

/// `cells[frame][camera]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResults {
    pub cells: Vec<Vec<CellResult>>,
}

impl BatchResults {
    pub fn num_frames(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, frame: usize, camera: usize) -> &CellResult {
        &self.cells[frame][camera]
    }

    /// Translation errors of one camera over a frame range, failures mapped to `failed_value`.
    pub fn translation_errors(&self, camera: usize, frames: std::ops::Range<usize>, failed_value: f64) -> Vec<f64> {
        self.cells[frames]
            .iter()
            .map(|row| {
                let e = row[camera].error.translation_err;
                if e.is_finite() {
                    e
                } else {
                    failed_value
                }
            })
            .collect()
    }
}

/// RANSAC seed used for `(frame, camera)` given a base seed. Anything that
/// relocalizes a single cell reuses it to reproduce the batch result exactly.
pub fn cell_seed(base: u64, frame: usize, camera: usize) -> u64 {
    derive_seed(base, &[frame as u64, camera as u64])
}

/// Localizes every camera in every frame independently (parallel over frames).
pub fn run_localization_batch(traverse: &Traverse, rig: &Rig<f64>, cfg: &RansacConfig<f64>) -> BatchResults {
    let cells = traverse
        .frames
        .par_iter()
        .map(|frame| {
            rig.cameras()
                .iter()
                .map(|cam| {
                    let corrs = frame.observations.get(cam.camera_id).map(Vec::as_slice).unwrap_or(&[]);
                    let cell_cfg = cfg.with_seed(cell_seed(cfg.rng_seed, frame.index, cam.camera_id));
                    let result = localize_pnp_ransac(corrs, cam, &cell_cfg);
                    let error = match &result.pose {
                        Some(p) if result.is_success() => pose_error(p, &frame.pose),
                        _ => PoseError::failed(),
                    };
                    CellResult { result, error }
                })
                .collect()
        })
        .collect();
    BatchResults { cells }
}
