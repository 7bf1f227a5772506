//! Measurement harnesses for the matcher and the correspondence orderings.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geom::fundamental_from_pose;
use crate::matcher::{brute_force_match, guided_match, match_points, Match, MatchConfig, MatchCounters};
use crate::posegraph::ViewId;
use crate::robust::{estimate_pose_ransac, rank_correspondences, snn_ordering, RansacConfig, ScoreStore};
use crate::scene::{generate, Layout, SceneConfig, SyntheticScene};

/// Guided matching against full descriptor matching on one image pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatcherBench {
    pub keypoints: (usize, usize),
    pub guided: MatchCounters,
    pub brute: MatchCounters,
    pub guided_matches: usize,
    pub brute_matches: usize,
    pub guided_time_s: f64,
    pub brute_time_s: f64,
}

/// Scene whose two views hold roughly `keypoints` keypoints each.
fn pair_scene(keypoints: usize, seed: u64) -> SyntheticScene {
    let base = SceneConfig::default();
    // About 39% of the cylinder is detected per view at the default angles,
    // plus a quarter as many distractors.
    let n_points = ((keypoints as f64) / 0.39).ceil() as usize;
    generate(&SceneConfig { seed, n_cameras: 2, n_points, layout: Layout::Arc { span_deg: 12.0 }, ..base })
        .expect("valid pair scene")
}

pub fn matcher_benchmark(keypoints: usize, seed: u64) -> MatcherBench {
    let scene = pair_scene(keypoints, seed);
    let (a, b) = (&scene.features[0], &scene.features[1]);
    let f = fundamental_from_pose(&scene.ground_truth_pose(ViewId(0), ViewId(1)), &a.intrinsics, &b.intrinsics);
    let t = Instant::now();
    let (gm, guided) = guided_match(a, b, &f, &MatchConfig::default()).expect("finite fundamental matrix");
    let guided_time_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (bm, brute) = brute_force_match(a, b, MatchConfig::default().snn_base);
    let brute_time_s = t.elapsed().as_secs_f64();
    MatcherBench {
        keypoints: (a.len(), b.len()),
        guided,
        brute,
        guided_matches: gm.len(),
        brute_matches: bm.len(),
        guided_time_s,
        brute_time_s,
    }
}

fn triplet_scene(seed: u64, outlier_fraction: f64, n_points: usize) -> SyntheticScene {
    generate(&SceneConfig {
        seed,
        n_cameras: 3,
        n_points,
        outlier_fraction,
        layout: Layout::Arc { span_deg: 24.0 },
        ..SceneConfig::default()
    })
    .expect("valid triplet scene")
}

/// Estimates a pair from its descriptor matches and feeds the outlier scores.
fn learn_pair(scene: &SyntheticScene, scores: &mut ScoreStore, i: usize, j: usize, rng: &mut ChaCha8Rng) {
    let (a, b) = (&scene.features[i], &scene.features[j]);
    let (matches, _) = brute_force_match(a, b, MatchConfig::default().snn_base);
    let points = match_points(a, b, &matches);
    let cfg = RansacConfig::default();
    if let Ok(res) = estimate_pose_ransac(&points, &snn_ordering(&matches), &cfg, &a.intrinsics, &b.intrinsics, rng) {
        let (vi, vj) = (ViewId(i as u32), ViewId(j as u32));
        scores.update(vi, vj, &res.pose, &matches, &points, &a.intrinsics, &b.intrinsics, cfg.threshold_px);
    }
}

/// Prefix inlier ratios of the last pair of a view triplet under both orderings.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutcome {
    pub ks: Vec<usize>,
    pub score_ordering: Vec<f64>,
    pub snn_ordering: Vec<f64>,
    pub matches: usize,
}

fn prefix_ratio(order: &[usize], labels: &[bool], k: usize) -> f64 {
    let k = k.min(order.len());
    if k == 0 {
        return 0.0;
    }
    order[..k].iter().filter(|&&m| labels[m]).count() as f64 / k as f64
}

/// Views A, B, C on a short arc: A-B and A-C are estimated first, then the
/// tentative matches of B-C are ordered by the learned scores and by the
/// ratio test alone.
pub fn triplet_experiment(seed: u64, ks: &[usize]) -> TripletOutcome {
    let scene = triplet_scene(seed, 0.2, 2500);
    let counts: Vec<usize> = scene.features.iter().map(|f| f.len()).collect();
    let mut scores = ScoreStore::new(&counts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    learn_pair(&scene, &mut scores, 0, 1, &mut rng);
    learn_pair(&scene, &mut scores, 0, 2, &mut rng);
    let (matches, _) = brute_force_match(&scene.features[1], &scene.features[2], MatchConfig::default().snn_base);
    let labels: Vec<bool> = matches.iter().map(|m| scene.is_true_match(ViewId(1), m.i, ViewId(2), m.j)).collect();
    let by_score = rank_correspondences(&scores, ViewId(1), ViewId(2), &matches);
    let by_snn = snn_ordering(&matches);
    TripletOutcome {
        ks: ks.to_vec(),
        score_ordering: ks.iter().map(|&k| prefix_ratio(&by_score, &labels, k)).collect(),
        snn_ordering: ks.iter().map(|&k| prefix_ratio(&by_snn, &labels, k)).collect(),
        matches: matches.len(),
    }
}

/// RANSAC iterations on one pair under the learned and a random ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingBench {
    pub adaptive_iterations: usize,
    pub uniform_iterations: usize,
    pub inlier_ratio: f64,
}

/// Views A, B, C whose tentative correspondences are `inlier_ratio` inliers.
/// Scores are learned from A-B and A-C, then B-C is estimated twice.
pub fn ordering_benchmark(seed: u64, inlier_ratio: f64) -> OrderingBench {
    let scene = triplet_scene(seed, 1.0 - inlier_ratio, 800);
    let counts: Vec<usize> = scene.features.iter().map(|f| f.len()).collect();
    let mut scores = ScoreStore::new(&counts);
    let cfg = RansacConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tentative = |i: u32, j: u32| {
        let (pairs, labels) = scene.tentative_correspondences(ViewId(i), ViewId(j), seed ^ u64::from(i) << 8 ^ u64::from(j));
        let matches: Vec<Match> = pairs.iter().map(|&(a, b)| Match { i: a, j: b, distance: 0.0, snn_ratio: 0.5 }).collect();
        (matches, labels)
    };
    for (i, j) in [(0u32, 1u32), (0, 2)] {
        let (matches, _) = tentative(i, j);
        let (a, b) = (&scene.features[i as usize], &scene.features[j as usize]);
        let points = match_points(a, b, &matches);
        let order: Vec<usize> = {
            let mut o: Vec<usize> = (0..matches.len()).collect();
            o.shuffle(&mut rng);
            o
        };
        if let Ok(res) = estimate_pose_ransac(&points, &order, &cfg, &a.intrinsics, &b.intrinsics, &mut rng) {
            scores.update(ViewId(i), ViewId(j), &res.pose, &matches, &points, &a.intrinsics, &b.intrinsics, cfg.threshold_px);
        }
    }
    let (matches, labels) = tentative(1, 2);
    let (a, b) = (&scene.features[1], &scene.features[2]);
    let points = match_points(a, b, &matches);
    let adaptive = rank_correspondences(&scores, ViewId(1), ViewId(2), &matches);
    let mut uniform: Vec<usize> = (0..matches.len()).collect();
    uniform.shuffle(&mut rng);
    let iterations = |order: &[usize], rng: &mut ChaCha8Rng| match estimate_pose_ransac(&points, order, &cfg, &a.intrinsics, &b.intrinsics, rng) {
        Ok(r) => r.iterations,
        Err(_) => cfg.max_iterations,
    };
    let mut r1 = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut r2 = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    OrderingBench {
        adaptive_iterations: iterations(&adaptive, &mut r1),
        uniform_iterations: iterations(&uniform, &mut r2),
        inlier_ratio: labels.iter().filter(|&&l| l).count() as f64 / labels.len().max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_ratio_counts() {
        let labels = [true, false, true, true];
        assert_eq!(prefix_ratio(&[1, 0, 2, 3], &labels, 2), 0.5);
        assert_eq!(prefix_ratio(&[0, 2, 3, 1], &labels, 10), 0.75);
        assert_eq!(prefix_ratio(&[], &[], 5), 0.0);
    }

    #[test]
    fn small_matcher_bench_saves_work() {
        let b = matcher_benchmark(800, 1);
        assert!(b.guided.descriptor_evaluations * 5 < b.brute.descriptor_evaluations);
        assert!(b.guided_matches > 100);
    }
}
