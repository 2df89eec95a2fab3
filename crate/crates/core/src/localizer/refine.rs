//! Gauss-Newton refinement of a body pose against reprojection error.
//!
//! The body-from-world transform is updated on the left by a small rigid
//! motion (ω, δ): X_b ← exp(ω)·X_b + δ. A step is accepted only when it lowers
//! the total squared reprojection error, so the cost never increases.

use nalgebra::{Matrix2x3, Matrix3, Matrix6, RealField, Vector3, Vector6};

use super::{Correspondence, View};
use crate::geometry::{CameraModel, Pose};

const MAX_ITERATIONS: usize = 50;
const MAX_BACKTRACKS: usize = 12;

/// Sum of squared reprojection errors; infinite if any point falls behind a camera.
pub fn reprojection_cost<T: RealField + Copy>(body_pose: &Pose<T>, views: &[View<'_, T>]) -> T {
    let mut total = T::zero();
    for view in views {
        let cfw = view.camera.camera_from_world(body_pose);
        for c in view.correspondences {
            match super::squared_residual(view.camera, &cfw, c) {
                Some(e) => total += e,
                None => return nalgebra::convert(f64::INFINITY),
            }
        }
    }
    total
}

/// Refines `initial` on a single camera's inliers.
pub fn refine_pose<T: RealField + Copy>(
    initial: &Pose<T>,
    inliers: &[Correspondence<T>],
    cam: &CameraModel<T>,
) -> Pose<T> {
    refine_pose_multi(
        initial,
        &[View {
            camera: cam,
            correspondences: inliers,
        }],
    )
}

/// Refines `initial` jointly over every view's correspondences.
///
/// Returns `initial` unchanged when there are fewer than 4 correspondences,
/// the starting cost is not finite, or the normal equations are singular.
pub fn refine_pose_multi<T: RealField + Copy>(initial: &Pose<T>, views: &[View<'_, T>]) -> Pose<T> {
    let n: usize = views.iter().map(|v| v.correspondences.len()).sum();
    if n < 4 {
        return *initial;
    }
    let mut body_from_world = initial.inverse();
    let mut cost = reprojection_cost(initial, views);
    if !cost.is_finite() {
        return *initial;
    }
    let step_tol: T = nalgebra::convert(1.0e-10);
    let half: T = nalgebra::convert(0.5);
    let mut moved = false;

    for _ in 0..MAX_ITERATIONS {
        let Some((jtj, jtr)) = normal_equations(&body_from_world, views) else {
            break;
        };
        let Some(chol) = well_conditioned_cholesky(jtj) else {
            break;
        };
        let mut step = -chol.solve(&jtr);
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = apply_step(&body_from_world, &step);
            let new_cost = reprojection_cost(&candidate.inverse(), views);
            if new_cost <= cost {
                body_from_world = candidate;
                cost = new_cost;
                accepted = true;
                moved = true;
                break;
            }
            step *= half;
        }
        if !accepted || step.norm() < step_tol {
            break;
        }
    }
    if moved {
        body_from_world.inverse()
    } else {
        *initial
    }
}

/// Cholesky factor of `m`, rejected when a pivot is negligible relative to the largest.
fn well_conditioned_cholesky<T: RealField + Copy>(m: Matrix6<T>) -> Option<nalgebra::Cholesky<T, nalgebra::U6>> {
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    let diag: Vec<T> = (0..6).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().fold(T::zero(), |a, b| a.max(*b));
    let min = diag.iter().fold(max, |a, b| a.min(*b));
    let rel: T = T::default_epsilon() * nalgebra::convert(1.0e4);
    (max > T::zero() && min > max * rel).then_some(chol)
}

fn apply_step<T: RealField + Copy>(body_from_world: &Pose<T>, step: &Vector6<T>) -> Pose<T> {
    let delta = Pose::from_scaled_axis(
        Vector3::new(step[0], step[1], step[2]),
        Vector3::new(step[3], step[4], step[5]),
    );
    let composed = delta.compose(body_from_world);
    Pose::from_approx_rotation(*composed.rotation(), *composed.translation())
}

fn skew<T: RealField + Copy>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(T::zero(), -v.z, v.y, v.z, T::zero(), -v.x, -v.y, v.x, T::zero())
}

/// JᵀJ and Jᵀr for the current body-from-world estimate.
fn normal_equations<T: RealField + Copy>(
    body_from_world: &Pose<T>,
    views: &[View<'_, T>],
) -> Option<(Matrix6<T>, Vector6<T>)> {
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    for view in views {
        let cam = view.camera;
        let camera_from_body = cam.extrinsic.inverse();
        let r_cb = *camera_from_body.rotation();
        for c in view.correspondences {
            let xb = body_from_world.transform_point(&c.world_point);
            let xc = camera_from_body.transform_point(&xb);
            if xc.z <= T::zero() {
                return None;
            }
            let iz = T::one() / xc.z;
            let proj = nalgebra::Vector2::new(cam.fx * xc.x * iz + cam.cx, cam.fy * xc.y * iz + cam.cy);
            let r = proj - c.pixel;
            let jp = Matrix2x3::new(
                cam.fx * iz,
                T::zero(),
                -cam.fx * xc.x * iz * iz,
                T::zero(),
                cam.fy * iz,
                -cam.fy * xc.y * iz * iz,
            );
            let jpr = jp * r_cb;
            let j_rot = jpr * (-skew(&xb));
            let mut j = nalgebra::Matrix2x6::zeros();
            j.fixed_view_mut::<2, 3>(0, 0).copy_from(&j_rot);
            j.fixed_view_mut::<2, 3>(0, 3).copy_from(&jpr);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
    }
    Some((jtj, jtr))
}
