//! Iteratively re-weighted least-squares refinement of a relative pose.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::geom::{fundamental_from_pose, CameraIntrinsics, RelativePose, Rotation, Vec2, Vec3};

/// Inliers needed to constrain the five pose parameters.
pub const MIN_REFINE_INLIERS: usize = 5;

const MAX_ITERATIONS: usize = 50;
const RELATIVE_TOLERANCE: f64 = 1e-8;
const JACOBIAN_STEP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("{found} inliers, at least {MIN_REFINE_INLIERS} needed")]
    InsufficientInliers { found: usize },
    #[error("pose has no translation direction")]
    DegeneratePose,
}

type Params = SVector<f64, 5>;

/// Signed Sampson residual; `None` when the epipolar gradient vanishes.
fn signed_sampson(p1: &Vec2, p2: &Vec2, f: &nalgebra::Matrix3<f64>) -> Option<f64> {
    let x1 = Vec3::new(p1.x, p1.y, 1.0);
    let x2 = Vec3::new(p2.x, p2.y, 1.0);
    let fx1 = f * x1;
    let ftx2 = f.tr_mul(&x2);
    let den = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
    (den > 1e-16).then(|| x2.dot(&fx1) / den.sqrt())
}

fn residuals(pose: &RelativePose, corr: &[(Vec2, Vec2)], k1: &CameraIntrinsics, k2: &CameraIntrinsics) -> Vec<f64> {
    let f = fundamental_from_pose(pose, k1, k2).normalized().0;
    corr.iter().map(|(a, b)| signed_sampson(a, b, &f).unwrap_or(f64::INFINITY)).collect()
}

fn truncated(r: &[f64], threshold: f64) -> f64 {
    let cap = threshold * threshold;
    r.iter().map(|v| (v * v).min(cap)).sum()
}

fn inlier_count(r: &[f64], threshold: f64) -> usize {
    r.iter().filter(|v| v.abs() < threshold).count()
}

/// Sum of squared Sampson distances, each capped at `threshold²`.
pub fn truncated_sampson_cost(
    pose: &RelativePose,
    correspondences: &[(Vec2, Vec2)],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    threshold: f64,
) -> f64 {
    truncated(&residuals(pose, correspondences, k1, k2), threshold)
}

/// Local chart around a pose: rotation perturbed on the left by `exp(ω)`,
/// translation moved in the tangent plane of the unit sphere.
struct Chart {
    rotation: Rotation,
    translation: Vec3,
    basis: [Vec3; 2],
}

impl Chart {
    fn new(pose: &RelativePose) -> Self {
        let t = *pose.translation();
        let helper = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let b1 = t.cross(&helper).normalize();
        let b2 = t.cross(&b1);
        Self { rotation: *pose.rotation(), translation: t, basis: [b1, b2] }
    }

    fn pose(&self, x: &Params) -> RelativePose {
        let omega = Vec3::new(x[0], x[1], x[2]);
        let t = self.translation + self.basis[0] * x[3] + self.basis[1] * x[4];
        RelativePose::new(Rotation::new(omega) * self.rotation, t)
    }
}

/// Minimizes the truncated Sampson cost with Levenberg-Marquardt damped
/// Gauss-Newton steps, reweighting after every accepted step (unit weight
/// inside `threshold`, zero outside).
///
/// Steps are accepted only when the truncated cost drops; the input pose is
/// returned if the refined one would have fewer inliers.
pub fn refine_pose_irls(
    pose: &RelativePose,
    correspondences: &[(Vec2, Vec2)],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    threshold: f64,
) -> Result<RelativePose, RefineError> {
    if pose.is_degenerate() {
        return Err(RefineError::DegeneratePose);
    }
    let initial = residuals(pose, correspondences, k1, k2);
    let initial_inliers = inlier_count(&initial, threshold);
    if initial_inliers < MIN_REFINE_INLIERS {
        return Err(RefineError::InsufficientInliers { found: initial_inliers });
    }

    let mut current = *pose;
    let mut r = initial;
    let mut cost = truncated(&r, threshold);
    let mut damping = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        if cost <= f64::MIN_POSITIVE {
            break;
        }
        let active: Vec<usize> = (0..r.len()).filter(|&i| r[i].abs() < threshold).collect();
        let chart = Chart::new(&current);
        let subset: Vec<(Vec2, Vec2)> = active.iter().map(|&i| correspondences[i]).collect();
        let mut jt = vec![[0.0; 5]; subset.len()];
        for k in 0..5 {
            let mut dx = Params::zeros();
            dx[k] = JACOBIAN_STEP;
            let plus = residuals(&chart.pose(&dx), &subset, k1, k2);
            let minus = residuals(&chart.pose(&(-dx)), &subset, k1, k2);
            for (row, (p, m)) in jt.iter_mut().zip(plus.iter().zip(&minus)) {
                row[k] = (p - m) / (2.0 * JACOBIAN_STEP);
            }
        }
        let mut h = SMatrix::<f64, 5, 5>::zeros();
        let mut g = Params::zeros();
        for (row, &i) in jt.iter().zip(&active) {
            let j = Params::from_row_slice(row);
            if !j.iter().all(|v| v.is_finite()) {
                continue;
            }
            h += j * j.transpose();
            g += j * r[i];
        }

        let mut accepted = None;
        for _ in 0..10 {
            let mut damped = h;
            for k in 0..5 {
                damped[(k, k)] += damping * h[(k, k)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
                damping *= 10.0;
                continue;
            };
            let candidate = chart.pose(&step);
            let cr = residuals(&candidate, correspondences, k1, k2);
            let cc = truncated(&cr, threshold);
            if cc < cost {
                damping = (damping * 0.1).max(1e-12);
                accepted = Some((candidate, cr, cc));
                break;
            }
            damping *= 10.0;
        }
        let Some((candidate, cr, cc)) = accepted else {
            break;
        };
        let relative = (cost - cc) / cost;
        current = candidate;
        r = cr;
        cost = cc;
        if relative < RELATIVE_TOLERANCE {
            break;
        }
    }

    if inlier_count(&r, threshold) < initial_inliers {
        return Ok(*pose);
    }
    Ok(current)
}
