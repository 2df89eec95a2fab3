//! Camera-selection strategies compared against the dynamic per-place choice.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::geometry::{PoseError, Rig};
use crate::localizer::LocalizationResult;
use crate::seed::derive_seed;
use crate::selection::{
    argmin_camera, expected_cost_with_mode, CostFunction, KdeConfig, PoseErrorSampleSet, SelectionError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelectorKind {
    RandomCam,
    StaticCam,
    Num3DPoints,
    InlierCount,
    InlierRatio,
    MultiCamRigPnP,
    DynamicCam,
    /// Ground-truth best camera; only meaningful for evaluation.
    OracleCam,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 8] = [
        SelectorKind::RandomCam,
        SelectorKind::StaticCam,
        SelectorKind::Num3DPoints,
        SelectorKind::InlierCount,
        SelectorKind::InlierRatio,
        SelectorKind::MultiCamRigPnP,
        SelectorKind::DynamicCam,
        SelectorKind::OracleCam,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SelectorKind::RandomCam => "random",
            SelectorKind::StaticCam => "static",
            SelectorKind::Num3DPoints => "num3d",
            SelectorKind::InlierCount => "inliers",
            SelectorKind::InlierRatio => "ratio",
            SelectorKind::MultiCamRigPnP => "rigpnp",
            SelectorKind::DynamicCam => "dynamic",
            SelectorKind::OracleCam => "oracle",
        }
    }

    /// Selectors that localize every camera and then pick by a query-time statistic.
    pub fn is_statistic(&self) -> bool {
        matches!(
            self,
            SelectorKind::Num3DPoints | SelectorKind::InlierCount | SelectorKind::InlierRatio
        )
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SelectorKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = SelectorKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown selector `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// Uniformly random camera.
pub fn select_random<R: Rng + ?Sized>(rig: &Rig<f64>, rng: &mut R) -> usize {
    rng.random_range(0..rig.len())
}

/// Camera with the lowest expected cost over a whole slice. `pooled[c]` holds
/// every training error of camera `c` in the slice; cameras without samples
/// are charged the cost ceiling. Ties go to the lowest id.
///
/// Costs are seeded exactly as [`select_cameras`](crate::selection::select_cameras)
/// seeds a place with the same id, so a one-place partition picks the same camera.
pub fn select_static(
    pooled: &[PoseErrorSampleSet<f64>],
    cf: &CostFunction<f64>,
    cfg: &KdeConfig<f64>,
) -> Result<usize, SelectionError> {
    cf.validate()?;
    cfg.validate()?;
    let Some(first) = pooled.iter().find(|s| !s.is_empty()) else {
        return Err(SelectionError::NoDataForPlace(pooled.first().map_or(0, |s| s.place_id)));
    };
    let costs = pooled
        .iter()
        .enumerate()
        .map(|(cam, set)| {
            if set.is_empty() {
                return Ok(cf.ceiling());
            }
            let seed = derive_seed(cfg.rng_seed, &[first.place_id as u64, cam as u64]);
            expected_cost_with_mode(set, cf, &cfg.with_seed(seed))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(argmin_camera(&costs).expect("non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatisticChoice {
    pub camera: usize,
    /// Every camera failed; `camera` is 0 and the frame counts as unlocalized.
    pub all_failed: bool,
}

/// Camera with the highest query-time statistic. Failed localizations rank
/// below every success; ties go to the lowest id.
pub fn select_by_statistic(results: &[LocalizationResult<f64>], kind: SelectorKind) -> StatisticChoice {
    let stat = |r: &LocalizationResult<f64>| match kind {
        SelectorKind::Num3DPoints => r.num_matched_points as f64,
        SelectorKind::InlierCount => r.inlier_count as f64,
        SelectorKind::InlierRatio => r.inlier_ratio,
        other => panic!("{other} is not a statistic selector"),
    };
    let mut best: Option<(usize, f64)> = None;
    for (cam, r) in results.iter().enumerate() {
        if !r.is_success() {
            continue;
        }
        let v = stat(r);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((cam, v));
        }
    }
    match best {
        Some((camera, _)) => StatisticChoice {
            camera,
            all_failed: false,
        },
        None => StatisticChoice {
            camera: 0,
            all_failed: true,
        },
    }
}

/// Camera with the smallest ground-truth translation error; ties go to the lowest id.
pub fn select_oracle(errors: &[PoseError<f64>]) -> usize {
    let mut best = 0;
    for (cam, e) in errors.iter().enumerate() {
        if e.translation_err < errors[best].translation_err {
            best = cam;
        }
    }
    best
}
