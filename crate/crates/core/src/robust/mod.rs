//! Fallback relative pose estimation: five-point hypotheses drawn by PROSAC,
//! verified by Sampson distance, with IRLS local optimization.

mod five_point;
mod prosac;
mod scores;

pub use five_point::five_point;
pub use prosac::{ProsacSampler, GROWTH_HORIZON};
pub use scores::{point_outlier_probability, rank_correspondences, snn_ordering, ScoreStore, SCORE_FLOOR};

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::geom::{
    decompose_essential, fundamental_from_essential, sampson_or_inf, CameraIntrinsics, EssentialMatrix, RelativePose,
    Vec2, Vec3,
};
use crate::posegraph::{pose_inliers, refine_pose_irls};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustError {
    #[error("degenerate minimal sample")]
    DegenerateSample,
    #[error("no model with enough inliers after {iterations} iterations (best {best_inliers})")]
    NoModel { iterations: usize, best_inliers: usize },
    #[error("{0} correspondences, fewer than a minimal sample")]
    TooFewCorrespondences(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub threshold_px: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub min_inliers: usize,
    pub sample_size: usize,
    /// Chance that a point is an inlier of a wrong model, for the non-randomness test.
    pub random_inlier_probability: f64,
    /// Acceptable probability that a prefix's inlier count arose by chance.
    pub non_randomness_level: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold_px: 2.0,
            max_iterations: 5000,
            confidence: 0.99,
            min_inliers: 20,
            sample_size: 5,
            random_inlier_probability: 0.05,
            non_randomness_level: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RansacResult {
    pub pose: RelativePose,
    /// Indices into the correspondence list.
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

/// One-sided standard normal quantile for the non-randomness level.
fn normal_quantile(upper_tail: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(1.0 - upper_tail)
}

/// Shortest prefix whose inlier count is trusted for termination; shorter
/// prefixes are dominated by the sample's own points.
const MIN_TERMINATION_PREFIX: usize = 20;

/// Iterations needed, per prefix of the ordering, to have drawn an all-inlier
/// sample with the configured confidence; the minimum over prefixes whose
/// inlier count passes the non-randomness test.
fn termination_length(inlier_mask_in_order: &[bool], cfg: &RansacConfig, z: f64) -> usize {
    let m = cfg.sample_size;
    let beta = cfg.random_inlier_probability;
    let log_eta = (1.0 - cfg.confidence).ln();
    let mut best = usize::MAX;
    let mut count = 0usize;
    for (idx, &inlier) in inlier_mask_in_order.iter().enumerate() {
        count += usize::from(inlier);
        let n = idx + 1;
        if n < MIN_TERMINATION_PREFIX.max(4 * m) {
            continue;
        }
        let mean = (n - m) as f64 * beta;
        let sd = ((n - m) as f64 * beta * (1.0 - beta)).sqrt();
        if (count as f64) < m as f64 + mean + z * sd || count < m {
            continue;
        }
        let mut p_good = 1.0;
        for j in 0..m {
            p_good *= (count - j) as f64 / (n - j) as f64;
        }
        let k = if p_good >= 1.0 {
            0
        } else if p_good <= 0.0 {
            usize::MAX
        } else {
            let k = log_eta / (1.0 - p_good).ln();
            if k.is_finite() {
                k.ceil().max(0.0) as usize
            } else {
                usize::MAX
            }
        };
        best = best.min(k);
    }
    best
}

fn sample_is_degenerate(points: &[(Vec2, Vec2)], sample: &[usize]) -> bool {
    for (a, &i) in sample.iter().enumerate() {
        for &j in &sample[a + 1..] {
            if (points[i].0 - points[j].0).norm() < 1.0 || (points[i].1 - points[j].1).norm() < 1.0 {
                return true;
            }
        }
    }
    false
}

fn essential_inliers(
    e: &EssentialMatrix,
    points: &[(Vec2, Vec2)],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    threshold: f64,
) -> Vec<bool> {
    let f = fundamental_from_essential(e, k1, k2).normalized();
    points.iter().map(|(p, q)| sampson_or_inf(p, q, &f) < threshold).collect()
}

/// Robust relative pose for pixel correspondences, sampling in `ordering`
/// (a permutation of the correspondence indices, most promising first).
///
/// Runs until the PROSAC termination criterion is met or
/// `cfg.max_iterations` is reached; fails with [`RobustError::NoModel`] when
/// the best model has fewer than `cfg.min_inliers` inliers.
pub fn estimate_pose_ransac<R: Rng + ?Sized>(
    points: &[(Vec2, Vec2)],
    ordering: &[usize],
    cfg: &RansacConfig,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    rng: &mut R,
) -> Result<RansacResult, RobustError> {
    let m = cfg.sample_size;
    if points.len() < m {
        return Err(RobustError::TooFewCorrespondences(points.len()));
    }
    debug_assert_eq!(ordering.len(), points.len());
    let normalized: Vec<(Vec3, Vec3)> = points.iter().map(|(p, q)| (k1.normalize(p), k2.normalize(q))).collect();
    let z = normal_quantile(cfg.non_randomness_level);
    let mut sampler = ProsacSampler::new(points.len(), m);
    let mut best: Option<(RelativePose, Vec<bool>, usize)> = None;
    let mut limit = cfg.max_iterations;
    let mut iterations = 0;

    while iterations < limit {
        iterations += 1;
        let sample: Vec<usize> = sampler.next_sample(rng).into_iter().map(|pos| ordering[pos]).collect();
        if sample_is_degenerate(points, &sample) {
            continue;
        }
        let minimal: [(Vec3, Vec3); 5] = std::array::from_fn(|k| normalized[sample[k % sample.len()]]);
        let Ok(models) = five_point(&minimal) else {
            continue;
        };
        let mut improved = false;
        for e in models {
            let mask = essential_inliers(&e, points, k1, k2, cfg.threshold_px);
            let count = mask.iter().filter(|&&b| b).count();
            if count < m || best.as_ref().is_some_and(|(_, _, c)| count <= *c) {
                continue;
            }
            let inlier_points: Vec<(Vec2, Vec2)> =
                points.iter().zip(&mask).filter(|(_, &b)| b).map(|(p, _)| *p).collect();
            let Ok(pose) = decompose_essential(&e, &inlier_points, k1, k2) else {
                continue;
            };
            best = Some(local_optimization(pose, mask, count, points, k1, k2, cfg.threshold_px));
            improved = true;
        }
        if improved {
            if let Some((_, mask, _)) = &best {
                let in_order: Vec<bool> = ordering.iter().map(|&i| mask[i]).collect();
                limit = limit.min(termination_length(&in_order, cfg, z).max(iterations));
            }
        }
    }

    match best {
        Some((pose, mask, count)) if count >= cfg.min_inliers => Ok(RansacResult {
            pose,
            inliers: mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
            iterations,
        }),
        other => Err(RobustError::NoModel { iterations, best_inliers: other.map_or(0, |b| b.2) }),
    }
}

/// IRLS refinement of a new best model; kept only if it does not lose inliers.
fn local_optimization(
    pose: RelativePose,
    mask: Vec<bool>,
    count: usize,
    points: &[(Vec2, Vec2)],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    threshold: f64,
) -> (RelativePose, Vec<bool>, usize) {
    let Ok(refined) = refine_pose_irls(&pose, points, k1, k2, threshold) else {
        return (pose, mask, count);
    };
    let inliers = pose_inliers(&refined, points, k1, k2, threshold);
    if inliers.len() < count {
        return (pose, mask, count);
    }
    let mut refined_mask = vec![false; points.len()];
    for &i in &inliers {
        refined_mask[i] = true;
    }
    (refined, refined_mask, inliers.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_error_deg, Rotation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 800.0, 640.0, 480.0).unwrap()
    }

    fn data(n: usize, inlier_ratio: f64, noise: f64, seed: u64) -> (RelativePose, Vec<(Vec2, Vec2)>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = k();
        let pose = RelativePose::new(Rotation::new(Vec3::new(0.02, 0.2, -0.01)), Vec3::new(-1.0, 0.1, 0.3));
        let gauss = Normal::new(0.0, noise.max(1e-12)).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        while pts.len() < n {
            if rng.gen_bool(inlier_ratio) {
                let x = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-4.0..4.0), rng.gen_range(6.0..15.0));
                let (Some(a), Some(b)) = (k.project(&x), k.project(&pose.transform_point(&x))) else {
                    continue;
                };
                let jitter = |rng: &mut ChaCha8Rng| Vec2::new(gauss.sample(rng), gauss.sample(rng)) * f64::from(u8::from(noise > 0.0));
                pts.push((a + jitter(&mut rng), b + jitter(&mut rng)));
                labels.push(true);
            } else {
                pts.push((
                    Vec2::new(rng.gen_range(0.0..1280.0), rng.gen_range(0.0..960.0)),
                    Vec2::new(rng.gen_range(0.0..1280.0), rng.gen_range(0.0..960.0)),
                ));
                labels.push(false);
            }
        }
        (pose, pts, labels)
    }

    #[test]
    fn noise_free_all_inliers_in_one_round() {
        let (pose, pts, _) = data(100, 1.0, 0.0, 1);
        let order: Vec<usize> = (0..100).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = estimate_pose_ransac(&pts, &order, &RansacConfig::default(), &k(), &k(), &mut rng).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.inliers.len(), 100);
        assert!(rotation_error_deg(r.pose.rotation(), pose.rotation()) < 1e-6);
    }

    #[test]
    fn recovers_pose_with_outliers() {
        let (pose, pts, labels) = data(500, 0.8, 1.0, 2);
        let order: Vec<usize> = (0..pts.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = estimate_pose_ransac(&pts, &order, &RansacConfig::default(), &k(), &k(), &mut rng).unwrap();
        assert!(rotation_error_deg(r.pose.rotation(), pose.rotation()) < 0.5);
        let true_inliers = labels.iter().filter(|&&b| b).count();
        assert!(r.inliers.len() as f64 >= 0.7 * true_inliers as f64);
    }

    #[test]
    fn all_outliers_give_no_model() {
        let (_, pts, _) = data(200, 0.0, 0.0, 3);
        let order: Vec<usize> = (0..pts.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = estimate_pose_ransac(&pts, &order, &RansacConfig::default(), &k(), &k(), &mut rng).unwrap_err();
        assert!(matches!(err, RobustError::NoModel { iterations, .. } if iterations <= 5000));
    }

    #[test]
    fn quantile_matches_table() {
        assert!((normal_quantile(0.05) - 1.6449).abs() < 1e-3);
        assert!((normal_quantile(0.01) - 2.3263).abs() < 1e-3);
    }

    #[test]
    fn termination_shrinks_with_front_loaded_inliers() {
        let cfg = RansacConfig::default();
        let z = normal_quantile(0.05);
        let mut front = vec![true; 60];
        front.extend(vec![false; 140]);
        let mut spread = vec![false; 200];
        for i in (0..200).step_by(3).take(60) {
            spread[i] = true;
        }
        assert!(termination_length(&front, &cfg, z) < termination_length(&spread, &cfg, z));
        assert_eq!(termination_length(&[true; 50], &cfg, z), 0);
        assert_eq!(termination_length(&[true; 10], &cfg, z), usize::MAX);
    }
}
