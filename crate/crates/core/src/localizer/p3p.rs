//! Minimal three-point pose solver.
//!
//! Classic distance formulation: with unit bearings j1..j3 and unknown depths
//! s1..s3, the law of cosines on each pair of points gives three quadratics.
//! Substituting s2 = u·s1, s3 = v·s1 eliminates to a quartic in v. Each real
//! root yields depths, and the pose follows from aligning the camera-frame
//! points with the world points.

use nalgebra::{Matrix3, RealField, Vector3};

use super::{Correspondence, LocalizerError};
use crate::geometry::{CameraModel, Pose};

/// Returns every candidate world-from-body pose consistent with the three
/// correspondences observed by `cam` (0 to 4 of them).
pub fn solve_p3p<T: RealField + Copy>(
    corrs: &[Correspondence<T>],
    cam: &CameraModel<T>,
) -> Result<Vec<Pose<T>>, LocalizerError> {
    if corrs.len() != 3 {
        return Err(LocalizerError::WrongSampleSize(corrs.len()));
    }
    let world = [corrs[0].world_point, corrs[1].world_point, corrs[2].world_point];
    let bearings = [
        cam.pixel_ray(&corrs[0].pixel).normalize(),
        cam.pixel_ray(&corrs[1].pixel).normalize(),
        cam.pixel_ray(&corrs[2].pixel).normalize(),
    ];
    if world
        .iter()
        .chain(bearings.iter())
        .any(|p| p.iter().any(|v| !v.is_finite()))
    {
        return Err(LocalizerError::NonFinite);
    }
    check_non_degenerate(&world)?;

    let body_from_camera = cam.extrinsic;
    let candidates = camera_poses(&world, &bearings);
    let tol = reprojection_tolerance::<T>();
    Ok(candidates
        .into_iter()
        .map(|camera_from_world| camera_from_world.inverse().compose(&body_from_camera.inverse()))
        .filter(|body| {
            let cfw = cam.camera_from_world(body);
            corrs
                .iter()
                .all(|c| super::squared_residual(cam, &cfw, c).is_some_and(|e| e.sqrt() <= tol))
        })
        .collect())
}

fn reprojection_tolerance<T: RealField + Copy>() -> T {
    let floor: T = nalgebra::convert(1.0e-6);
    (T::default_epsilon() * nalgebra::convert(1.0e6)).max(floor)
}

fn check_non_degenerate<T: RealField + Copy>(world: &[Vector3<T>; 3]) -> Result<(), LocalizerError> {
    let e1 = world[1] - world[0];
    let e2 = world[2] - world[0];
    let e3 = world[2] - world[1];
    let scale = e1.norm().max(e2.norm()).max(e3.norm());
    let eps: T = T::default_epsilon() * nalgebra::convert(1.0e3);
    if scale <= eps || e1.norm() <= eps * scale || e2.norm() <= eps * scale || e3.norm() <= eps * scale {
        return Err(LocalizerError::DegenerateInput("duplicated world points"));
    }
    if e1.cross(&e2).norm() <= eps * scale * scale {
        return Err(LocalizerError::DegenerateInput("collinear world points"));
    }
    Ok(())
}

/// All camera-from-world transforms consistent with the bearings.
fn camera_poses<T: RealField + Copy>(world: &[Vector3<T>; 3], bearings: &[Vector3<T>; 3]) -> Vec<Pose<T>> {
    let one = T::one();
    let two: T = nalgebra::convert(2.0);
    let four: T = nalgebra::convert(4.0);

    // Side lengths opposite each point and the angles between bearings.
    let a2 = (world[1] - world[2]).norm_squared();
    let b2 = (world[0] - world[2]).norm_squared();
    let c2 = (world[0] - world[1]).norm_squared();
    let cos_a = bearings[1].dot(&bearings[2]);
    let cos_b = bearings[0].dot(&bearings[2]);
    let cos_g = bearings[0].dot(&bearings[1]);

    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let bmc = (b2 - c2) / b2;
    let bma = (b2 - a2) / b2;
    let (ca2, cb2, cg2) = (cos_a * cos_a, cos_b * cos_b, cos_g * cos_g);

    let coeffs = [
        // v^0 .. v^4
        (one + amc) * (one + amc) - four * a2 / b2 * cg2,
        four * (-amc * (one + amc) * cos_b + two * a2 / b2 * cg2 * cos_b - (one - apc) * cos_a * cos_g),
        two * (amc * amc - one + two * amc * amc * cb2 + two * bmc * ca2 - four * apc * cos_a * cos_b * cos_g
            + two * bma * cg2),
        four * (amc * (one - amc) * cos_b - (one - apc) * cos_a * cos_g + two * c2 / b2 * ca2 * cos_b),
        (amc - one) * (amc - one) - four * c2 / b2 * ca2,
    ];

    let mut poses = Vec::with_capacity(4);
    for v in real_quartic_roots(&coeffs) {
        let denom = two * (cos_g - v * cos_a);
        if denom.abs() <= T::default_epsilon() {
            continue;
        }
        let u = ((amc - one) * v * v - two * amc * cos_b * v + one + amc) / denom;
        let s1_sq = c2 / (one + u * u - two * u * cos_g);
        if s1_sq <= T::zero() || !s1_sq.is_finite() {
            continue;
        }
        let s1 = s1_sq.sqrt();
        let mut depths = Vector3::new(s1, u * s1, v * s1);
        if depths.iter().any(|d| *d <= T::zero()) {
            continue;
        }
        polish_depths(&mut depths, a2, b2, c2, cos_a, cos_b, cos_g);
        if depths.iter().any(|d| *d <= T::zero() || !d.is_finite()) {
            continue;
        }
        let cam_points = [
            bearings[0] * depths[0],
            bearings[1] * depths[1],
            bearings[2] * depths[2],
        ];
        if let Some(pose) = align_points(world, &cam_points) {
            poses.push(pose);
        }
    }
    poses
}

/// Real roots of `c0 + c1 v + c2 v^2 + c3 v^3 + c4 v^4`.
fn real_quartic_roots<T: RealField + Copy>(c: &[T; 5]) -> Vec<T> {
    real_polynomial_roots(c)
}

fn eval_poly<T: RealField + Copy>(c: &[T], v: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, k| acc * v + *k)
}

/// Real roots of a polynomial given by ascending coefficients. Quadratics are
/// solved in closed form; higher degrees are bracketed between consecutive
/// critical points (the real roots of the derivative) and each bracket is
/// searched with bisection-safeguarded Newton steps.
fn real_polynomial_roots<T: RealField + Copy>(c: &[T]) -> Vec<T> {
    let scale = c.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale <= T::zero() {
        return Vec::new();
    }
    let eps = T::default_epsilon();
    let mut degree = c.len() - 1;
    while degree > 0 && c[degree].abs() <= eps * scale {
        degree -= 1;
    }
    let c = &c[..=degree];
    match degree {
        0 => return Vec::new(),
        1 => return vec![-c[0] / c[1]],
        2 => return quadratic_roots(c[0], c[1], c[2]),
        _ => {}
    }
    let derivative: Vec<T> = (1..=degree)
        .map(|k| c[k] * nalgebra::convert::<f64, T>(k as f64))
        .collect();
    let lead = c[degree].abs();
    // Cauchy bound on root magnitude.
    let bound = T::one() + c[..degree].iter().fold(T::zero(), |m, x| m.max(x.abs() / lead));

    let mut knots = vec![-bound];
    let mut crit = real_polynomial_roots(&derivative);
    crit.retain(|x| x.abs() < bound);
    crit.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    knots.extend(crit.iter().copied());
    knots.push(bound);

    let touch_tol = eps * nalgebra::convert(1.0e3) * scale;
    let mut roots: Vec<T> = Vec::new();
    for pair in knots.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let (f_lo, f_hi) = (eval_poly(c, lo), eval_poly(c, hi));
        if f_lo == T::zero() {
            push_unique(&mut roots, lo);
            continue;
        }
        if f_lo * f_hi > T::zero() || f_hi == T::zero() {
            // no sign change, or picked up as the next interval's left end
            continue;
        }
        push_unique(&mut roots, bracketed_root(c, &derivative, lo, hi, f_lo > T::zero()));
    }
    // Double roots: the polynomial touches zero at a critical point.
    for x in crit {
        if eval_poly(c, x).abs() <= touch_tol {
            push_unique(&mut roots, x);
        }
    }
    roots
}

fn quadratic_roots<T: RealField + Copy>(c0: T, c1: T, c2: T) -> Vec<T> {
    let two: T = nalgebra::convert(2.0);
    let four: T = nalgebra::convert(4.0);
    let disc = c1 * c1 - four * c2 * c0;
    if disc < T::zero() {
        return Vec::new();
    }
    if disc == T::zero() {
        return vec![-c1 / (two * c2)];
    }
    // Cancellation-free form.
    let q = -(c1 + c1.signum() * disc.sqrt()) / two;
    if q == T::zero() {
        return vec![T::zero()];
    }
    vec![q / c2, c0 / q]
}

/// Root of `c` in `[lo, hi]` given a sign change; `lo_positive` is the sign at `lo`.
fn bracketed_root<T: RealField + Copy>(c: &[T], derivative: &[T], mut lo: T, mut hi: T, lo_positive: bool) -> T {
    let half: T = nalgebra::convert(0.5);
    let tol = T::default_epsilon() * nalgebra::convert(4.0);
    let mut v = (lo + hi) * half;
    for _ in 0..200 {
        let f = eval_poly(c, v);
        if f == T::zero() {
            return v;
        }
        if (f > T::zero()) == lo_positive {
            lo = v;
        } else {
            hi = v;
        }
        let d = eval_poly(derivative, v);
        let newton = if d != T::zero() { v - f / d } else { lo - T::one() };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) * half
        };
        if (next - v).abs() <= tol * (T::one() + v.abs()) || next <= lo || next >= hi {
            return next;
        }
        v = next;
    }
    v
}

fn push_unique<T: RealField + Copy>(roots: &mut Vec<T>, v: T) {
    let tol = T::default_epsilon() * nalgebra::convert(1.0e4) * (T::one() + v.abs());
    if !roots.iter().any(|r| (*r - v).abs() <= tol) {
        roots.push(v);
    }
}

/// Gauss-Newton on the three law-of-cosines residuals.
fn polish_depths<T: RealField + Copy>(d: &mut Vector3<T>, a2: T, b2: T, c2: T, cos_a: T, cos_b: T, cos_g: T) {
    let two: T = nalgebra::convert(2.0);
    let residuals = |d: &Vector3<T>| {
        Vector3::new(
            d[1] * d[1] + d[2] * d[2] - two * d[1] * d[2] * cos_a - a2,
            d[0] * d[0] + d[2] * d[2] - two * d[0] * d[2] * cos_b - b2,
            d[0] * d[0] + d[1] * d[1] - two * d[0] * d[1] * cos_g - c2,
        )
    };
    let mut r = residuals(d);
    for _ in 0..5 {
        let jac = Matrix3::new(
            T::zero(),
            two * d[1] - two * d[2] * cos_a,
            two * d[2] - two * d[1] * cos_a,
            two * d[0] - two * d[2] * cos_b,
            T::zero(),
            two * d[2] - two * d[0] * cos_b,
            two * d[0] - two * d[1] * cos_g,
            two * d[1] - two * d[0] * cos_g,
            T::zero(),
        );
        let Some(inv) = jac.try_inverse() else {
            return;
        };
        let candidate = *d - inv * r;
        let r_new = residuals(&candidate);
        if r_new.norm() >= r.norm() {
            return;
        }
        *d = candidate;
        r = r_new;
    }
}

/// Rigid transform mapping `world` onto `cam` (camera-from-world). The two
/// triangles are congruent, so matching an orthonormal frame built on each
/// determines the rotation exactly.
fn align_points<T: RealField + Copy>(world: &[Vector3<T>; 3], cam: &[Vector3<T>; 3]) -> Option<Pose<T>> {
    let frame = |p: &[Vector3<T>; 3]| -> Option<Matrix3<T>> {
        let e1 = (p[1] - p[0]).try_normalize(T::default_epsilon())?;
        let e3 = e1.cross(&(p[2] - p[0])).try_normalize(T::default_epsilon())?;
        let e2 = e3.cross(&e1);
        Some(Matrix3::from_columns(&[e1, e2, e3]))
    };
    let r = frame(cam)? * frame(world)?.transpose();
    let third: T = nalgebra::convert(1.0 / 3.0);
    let cw = (world[0] + world[1] + world[2]) * third;
    let cc = (cam[0] + cam[1] + cam[2]) * third;
    let t = cc - r * cw;
    Pose::new(r, t).ok().or_else(|| Some(Pose::from_approx_rotation(r, t)))
}
