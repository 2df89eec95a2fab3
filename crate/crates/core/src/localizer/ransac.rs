//! Hypothesize-and-verify pose estimation.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::RealField;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{count_inliers, refine_pose_multi, solve_p3p, Correspondence, LocalizationResult, RansacConfig, View};
use crate::geometry::{CameraModel, Pose, Rig};

/// Counts how many localization pipelines a caller has run.
#[derive(Debug, Default)]
pub struct LocalizationCounter(AtomicUsize);

impl LocalizationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add(&self, n: usize) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
}

/// Single-camera PnP + RANSAC with final refinement.
pub fn localize_pnp_ransac<T: RealField + Copy>(
    corrs: &[Correspondence<T>],
    cam: &CameraModel<T>,
    cfg: &RansacConfig<T>,
) -> LocalizationResult<T> {
    run(
        &[View {
            camera: cam,
            correspondences: corrs,
        }],
        cfg,
    )
}

/// Rig-space PnP: minimal hypotheses from one camera at a time (chosen with
/// probability proportional to its correspondence count), scored and refined
/// across every camera.
pub fn localize_rig_pnp<T: RealField + Copy>(
    per_camera: &[(&CameraModel<T>, &[Correspondence<T>])],
    rig: &Rig<T>,
    cfg: &RansacConfig<T>,
) -> LocalizationResult<T> {
    let views: Vec<View<'_, T>> = per_camera
        .iter()
        .filter(|(cam, _)| rig.camera(cam.camera_id).is_some())
        .map(|(cam, corrs)| View {
            camera: *cam,
            correspondences: corrs,
        })
        .collect();
    run(&views, cfg)
}

fn adaptive_bound(confidence: f64, inlier_ratio: f64, max_iterations: usize) -> usize {
    let w3 = inlier_ratio.powi(3);
    if w3 <= 0.0 {
        return max_iterations;
    }
    if w3 >= 1.0 {
        return 1;
    }
    let n = ((1.0 - confidence).ln() / (1.0 - w3).ln()).ceil();
    if n.is_finite() && n >= 0.0 {
        (n as usize).clamp(1, max_iterations)
    } else {
        max_iterations
    }
}

fn total_inliers<T: RealField + Copy>(pose: &Pose<T>, views: &[View<'_, T>], threshold: T) -> usize {
    views
        .iter()
        .map(|v| count_inliers(v.camera, pose, v.correspondences, threshold))
        .sum()
}

/// Inlier count of `pose` if it exceeds `to_beat`; gives up as soon as the
/// remaining correspondences could no longer get it there.
fn inliers_exceeding<T: RealField + Copy>(
    pose: &Pose<T>,
    views: &[View<'_, T>],
    threshold: T,
    total: usize,
    to_beat: Option<usize>,
) -> Option<usize> {
    let thr2 = threshold * threshold;
    let mut count = 0;
    let mut remaining = total;
    for v in views {
        let cfw = v.camera.camera_from_world(pose);
        for c in v.correspondences {
            remaining -= 1;
            if super::squared_residual(v.camera, &cfw, c).is_some_and(|e| e <= thr2) {
                count += 1;
            }
            if to_beat.is_some_and(|b| count + remaining <= b) {
                return None;
            }
        }
    }
    Some(count)
}

fn inlier_subsets<T: RealField + Copy>(
    pose: &Pose<T>,
    views: &[View<'_, T>],
    threshold: T,
) -> Vec<Vec<Correspondence<T>>> {
    let thr2 = threshold * threshold;
    views
        .iter()
        .map(|v| {
            let cfw = v.camera.camera_from_world(pose);
            v.correspondences
                .iter()
                .filter(|c| super::squared_residual(v.camera, &cfw, c).is_some_and(|e| e <= thr2))
                .copied()
                .collect()
        })
        .collect()
}

fn run<T: RealField + Copy>(views: &[View<'_, T>], cfg: &RansacConfig<T>) -> LocalizationResult<T> {
    let total: usize = views.iter().map(|v| v.correspondences.len()).sum();
    let eligible: Vec<usize> = (0..views.len())
        .filter(|&i| views[i].correspondences.len() >= 3)
        .collect();
    if eligible.is_empty() || total < cfg.min_inliers {
        return LocalizationResult::new(None, 0, total, cfg.min_inliers);
    }
    let confidence = crate::geometry::to_f64(cfg.confidence);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    // A single eligible view consumes no randomness for the camera draw, so the
    // rig solver reduces exactly to the single-camera one.
    let picker = if eligible.len() > 1 {
        WeightedIndex::new(eligible.iter().map(|&i| views[i].correspondences.len())).ok()
    } else {
        None
    };

    let mut best: Option<(Pose<T>, usize)> = None;
    let mut bound = cfg.max_iterations;
    let mut iteration = 0;
    while iteration < bound {
        iteration += 1;
        let view = match &picker {
            Some(p) => &views[eligible[p.sample(&mut rng)]],
            None => &views[eligible[0]],
        };
        let idx = rand::seq::index::sample(&mut rng, view.correspondences.len(), 3);
        let sample = [
            view.correspondences[idx.index(0)],
            view.correspondences[idx.index(1)],
            view.correspondences[idx.index(2)],
        ];
        let Ok(candidates) = solve_p3p(&sample, view.camera) else {
            continue;
        };
        for pose in candidates {
            let to_beat = best.as_ref().map(|(_, c)| *c);
            let Some(count) = inliers_exceeding(&pose, views, cfg.inlier_threshold_px, total, to_beat) else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, c)| count > *c) {
                best = Some((pose, count));
                let ratio = count as f64 / total as f64;
                bound = adaptive_bound(confidence, ratio, cfg.max_iterations);
            }
        }
    }

    let Some((pose, count)) = best else {
        return LocalizationResult::new(None, 0, total, cfg.min_inliers);
    };
    if count < cfg.min_inliers {
        return LocalizationResult::new(None, count, total, cfg.min_inliers);
    }
    let subsets = inlier_subsets(&pose, views, cfg.inlier_threshold_px);
    let inlier_views: Vec<View<'_, T>> = views
        .iter()
        .zip(subsets.iter())
        .map(|(v, s)| View {
            camera: v.camera,
            correspondences: s,
        })
        .collect();
    let refined = refine_pose_multi(&pose, &inlier_views);
    let refined_count = total_inliers(&refined, views, cfg.inlier_threshold_px);
    let (pose, count) = if refined_count >= count {
        (refined, refined_count)
    } else {
        (pose, count)
    };
    LocalizationResult::new(Some(pose), count, total, cfg.min_inliers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_bound_matches_textbook_formula() {
        // log(0.01) / log(1 - 0.6^3) = 18.92.. -> 19
        assert_eq!(adaptive_bound(0.99, 0.6, 1000), 19);
        assert_eq!(adaptive_bound(0.99, 1.0, 1000), 1);
        assert_eq!(adaptive_bound(0.99, 0.0, 1000), 1000);
        assert_eq!(adaptive_bound(0.99, 0.05, 1000), 1000);
    }

    #[test]
    fn counter_counts() {
        let c = LocalizationCounter::new();
        c.record();
        c.record();
        assert_eq!(c.get(), 2);
    }
}
