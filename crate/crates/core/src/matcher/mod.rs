//! Tentative correspondence generation: pose-guided matching through
//! epipolar hashing, its brute-force oracle, and plain descriptor matching.

mod hashing;
mod io;

pub use hashing::{build_hash, epipolar_angle, valid_angle_interval, AngleInterval, EpipolarHashTable};
pub use io::{read_features_binary, read_features_json, write_features_binary, write_features_json};

use thiserror::Error;

use crate::geom::{sampson_or_inf, CameraIntrinsics, FundamentalMatrix, Vec2};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("fundamental matrix maps every image corner to a null line")]
    DegenerateF,
    #[error("epipolar line has no direction")]
    ZeroLine,
    #[error("descriptor of length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed feature file: {0}")]
    Format(String),
}

/// Keypoints of one image with their descriptors, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub width: u32,
    pub height: u32,
    pub intrinsics: CameraIntrinsics,
    descriptor_dim: usize,
    positions: Vec<Vec2>,
    scores: Vec<f32>,
    descriptors: Vec<f32>,
}

impl ImageFeatures {
    pub fn new(width: u32, height: u32, intrinsics: CameraIntrinsics, descriptor_dim: usize) -> Self {
        Self {
            width,
            height,
            intrinsics,
            descriptor_dim,
            positions: Vec::new(),
            scores: Vec::new(),
            descriptors: Vec::new(),
        }
    }

    pub fn push(&mut self, position: Vec2, score: f32, descriptor: &[f32]) -> Result<u32, MatchError> {
        if descriptor.len() != self.descriptor_dim {
            return Err(MatchError::DimensionMismatch { expected: self.descriptor_dim, found: descriptor.len() });
        }
        self.positions.push(position);
        self.scores.push(score);
        self.descriptors.extend_from_slice(descriptor);
        Ok(self.positions.len() as u32 - 1)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn position(&self, i: usize) -> Vec2 {
        self.positions[i]
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn score(&self, i: usize) -> f32 {
        self.scores[i]
    }

    pub fn descriptor(&self, i: usize) -> &[f32] {
        &self.descriptors[i * self.descriptor_dim..(i + 1) * self.descriptor_dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Sampson gate in pixels.
    pub inlier_threshold_px: f64,
    pub bin_count: usize,
    /// Ratio-test threshold at the upper anchor pool size.
    pub snn_base: f64,
    /// `(pool size, ratio)` of the lower anchor.
    pub snn_anchor: (usize, f64),
    /// Pool size at which the ratio reaches `snn_base`.
    pub snn_full_pool: usize,
    /// Absolute descriptor distance a lone candidate must not exceed.
    pub single_candidate_max_distance: f32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            inlier_threshold_px: 2.0,
            bin_count: 45,
            snn_base: 0.9,
            snn_anchor: (5, 0.45),
            snn_full_pool: 8000,
            single_candidate_max_distance: 0.45,
        }
    }
}

/// A tentative correspondence between keypoint `i` of the first image and
/// keypoint `j` of the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub i: u32,
    pub j: u32,
    /// L2 descriptor distance.
    pub distance: f32,
    /// Nearest over second-nearest distance; for a lone candidate the
    /// distance over the absolute gate.
    pub snn_ratio: f32,
}

/// Work done by a matcher call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounters {
    pub descriptor_evaluations: u64,
    pub sampson_evaluations: u64,
}

impl std::ops::AddAssign for MatchCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.descriptor_evaluations += rhs.descriptor_evaluations;
        self.sampson_evaluations += rhs.sampson_evaluations;
    }
}

/// Ratio-test threshold for a candidate pool of `pool_size`, log-linear in
/// the pool size between the two anchors and clamped outside them.
pub fn adaptive_snn_threshold(pool_size: usize, cfg: &MatchConfig) -> f64 {
    let (anchor_pool, anchor_ratio) = cfg.snn_anchor;
    let low = anchor_ratio / cfg.snn_base;
    let p = pool_size.max(1) as f64;
    let t = (p.log10() - (anchor_pool as f64).log10()) / ((cfg.snn_full_pool as f64).log10() - (anchor_pool as f64).log10());
    cfg.snn_base * (low + (1.0 - low) * t).clamp(low, 1.0)
}

#[inline]
pub(crate) fn distance_sq(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (ra, rb) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..8 {
            let d = ca[k] - cb[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    acc.iter().sum::<f32>() + tail
}

/// Best and second-best candidate of a query, by `(distance, index)`.
#[derive(Debug, Clone, Copy)]
struct Nearest {
    best: u32,
    best_d: f32,
    second_d: f32,
    pool: usize,
}

impl Nearest {
    fn new() -> Self {
        Self { best: u32::MAX, best_d: f32::INFINITY, second_d: f32::INFINITY, pool: 0 }
    }

    fn offer(&mut self, j: u32, d: f32) {
        self.pool += 1;
        if (d, j) < (self.best_d, self.best) {
            self.second_d = self.best_d;
            self.best_d = d;
            self.best = j;
        } else if d < self.second_d {
            self.second_d = d;
        }
    }
}

/// Shared selection of guided and brute-force guided matching: each query
/// keeps its nearest Sampson-passing candidate if it passes the adaptive
/// ratio test and is also the query's nearest from the candidate's side.
struct GuidedSelector {
    nearest: Vec<Nearest>,
    best_for_second: Vec<(f32, u32)>,
}

impl GuidedSelector {
    fn new(n1: usize, n2: usize) -> Self {
        Self { nearest: vec![Nearest::new(); n1], best_for_second: vec![(f32::INFINITY, u32::MAX); n2] }
    }

    fn offer(&mut self, i: u32, j: u32, d: f32) {
        self.nearest[i as usize].offer(j, d);
        let slot = &mut self.best_for_second[j as usize];
        if (d, i) < *slot {
            *slot = (d, i);
        }
    }

    fn finish(self, cfg: &MatchConfig) -> Vec<Match> {
        let mut out = Vec::new();
        for (i, n) in self.nearest.iter().enumerate() {
            if n.pool == 0 || self.best_for_second[n.best as usize].1 != i as u32 {
                continue;
            }
            let distance = n.best_d.sqrt();
            let snn_ratio = if n.pool == 1 {
                if distance > cfg.single_candidate_max_distance {
                    continue;
                }
                distance / cfg.single_candidate_max_distance
            } else {
                let ratio = if n.second_d > 0.0 { (n.best_d / n.second_d).sqrt() } else { 1.0 };
                if f64::from(ratio) >= adaptive_snn_threshold(n.pool, cfg) {
                    continue;
                }
                ratio
            };
            out.push(Match { i: i as u32, j: n.best, distance, snn_ratio });
        }
        out
    }
}

/// Guided matching through an epipolar hash of the second image's keypoints.
/// `f` satisfies `x2ᵀ F x1 = 0`.
pub fn guided_match(
    k1: &ImageFeatures,
    k2: &ImageFeatures,
    f: &FundamentalMatrix,
    cfg: &MatchConfig,
) -> Result<(Vec<Match>, MatchCounters), MatchError> {
    let mut counters = MatchCounters::default();
    if k1.is_empty() || k2.is_empty() {
        return Ok((Vec::new(), counters));
    }
    let f = f.normalized();
    let table = build_hash(k2, &f, cfg)?;
    let mut selector = GuidedSelector::new(k1.len(), k2.len());
    let mut candidates = Vec::new();
    for i in 0..k1.len() {
        let p1 = k1.position(i);
        candidates.clear();
        table.candidates_into(&p1, &mut candidates);
        for &j in &candidates {
            counters.sampson_evaluations += 1;
            if sampson_or_inf(&p1, &k2.position(j as usize), &f) < cfg.inlier_threshold_px {
                counters.descriptor_evaluations += 1;
                selector.offer(i as u32, j, distance_sq(k1.descriptor(i), k2.descriptor(j as usize)));
            }
        }
    }
    Ok((selector.finish(cfg), counters))
}

/// Same contract as [`guided_match`], scanning every keypoint pair.
pub fn brute_force_guided_match(
    k1: &ImageFeatures,
    k2: &ImageFeatures,
    f: &FundamentalMatrix,
    cfg: &MatchConfig,
) -> (Vec<Match>, MatchCounters) {
    let f = f.normalized();
    let mut counters = MatchCounters::default();
    let mut selector = GuidedSelector::new(k1.len(), k2.len());
    for i in 0..k1.len() {
        let p1 = k1.position(i);
        for j in 0..k2.len() {
            counters.sampson_evaluations += 1;
            if sampson_or_inf(&p1, &k2.position(j), &f) < cfg.inlier_threshold_px {
                counters.descriptor_evaluations += 1;
                selector.offer(i as u32, j as u32, distance_sq(k1.descriptor(i), k2.descriptor(j)));
            }
        }
    }
    (selector.finish(cfg), counters)
}

/// Pose-free matching: mutual nearest neighbours passing a fixed ratio test.
pub fn brute_force_match(k1: &ImageFeatures, k2: &ImageFeatures, snn_ratio: f64) -> (Vec<Match>, MatchCounters) {
    let (n1, n2) = (k1.len(), k2.len());
    let mut counters = MatchCounters::default();
    let mut forward = vec![Nearest::new(); n1];
    let mut backward = vec![(f32::INFINITY, u32::MAX); n2];
    for (i, fwd) in forward.iter_mut().enumerate() {
        let d1 = k1.descriptor(i);
        for (j, back) in backward.iter_mut().enumerate() {
            let d = distance_sq(d1, k2.descriptor(j));
            fwd.offer(j as u32, d);
            if (d, i as u32) < *back {
                *back = (d, i as u32);
            }
        }
    }
    counters.descriptor_evaluations = (n1 * n2) as u64;
    let out = forward
        .iter()
        .enumerate()
        .filter(|(i, n)| n.pool > 0 && backward[n.best as usize].1 == *i as u32)
        .filter_map(|(i, n)| {
            let ratio = if n.pool < 2 {
                0.0
            } else if n.second_d > 0.0 {
                (n.best_d / n.second_d).sqrt()
            } else {
                1.0
            };
            (f64::from(ratio) < snn_ratio).then(|| Match { i: i as u32, j: n.best, distance: n.best_d.sqrt(), snn_ratio: ratio })
        })
        .collect();
    (out, counters)
}

/// Pixel coordinates of the matched keypoints.
pub fn match_points(k1: &ImageFeatures, k2: &ImageFeatures, matches: &[Match]) -> Vec<(Vec2, Vec2)> {
    matches.iter().map(|m| (k1.position(m.i as usize), k2.position(m.j as usize))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{fundamental_from_pose, RelativePose, Rotation, Vec3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snn_anchors() {
        let cfg = MatchConfig::default();
        assert_eq!(adaptive_snn_threshold(8000, &cfg), 0.9);
        assert_eq!(adaptive_snn_threshold(5, &cfg), 0.45);
        assert_eq!(adaptive_snn_threshold(1, &cfg), 0.45);
        assert_eq!(adaptive_snn_threshold(100_000, &cfg), 0.9);
    }

    proptest! {
        #[test]
        fn snn_monotone(p in 1usize..10_000) {
            let cfg = MatchConfig::default();
            let (a, b) = (adaptive_snn_threshold(p, &cfg), adaptive_snn_threshold(p + 1, &cfg));
            prop_assert!(a <= b);
            prop_assert!((0.45..=0.9).contains(&a));
        }
    }

    fn random_descriptor(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn stereo(n: usize, seed: u64) -> (ImageFeatures, ImageFeatures, FundamentalMatrix, Vec<(u32, u32)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = CameraIntrinsics::new(800.0, 800.0, 640.0, 480.0).unwrap();
        let pose = RelativePose::new(Rotation::from_axis_angle(&Vec3::y_axis(), 0.1), Vec3::new(-1.0, 0.05, 0.1));
        let mut a = ImageFeatures::new(1280, 960, k, 32);
        let mut b = ImageFeatures::new(1280, 960, k, 32);
        let mut truth = Vec::new();
        while a.len() < n {
            let x = Vec3::new(rng.gen_range(-6.0..6.0), rng.gen_range(-4.0..4.0), rng.gen_range(8.0..16.0));
            let (Some(p), Some(q)) = (k.project(&x), k.project(&pose.transform_point(&x))) else {
                continue;
            };
            let d = random_descriptor(&mut rng, 32);
            let i = a.push(p, 1.0, &d).unwrap();
            let j = b.push(q, 1.0, &d).unwrap();
            truth.push((i, j));
        }
        (a, b, fundamental_from_pose(&pose, &k, &k), truth)
    }

    #[test]
    fn guided_recovers_noise_free_truth() {
        let (a, b, f, truth) = stereo(300, 1);
        let cfg = MatchConfig::default();
        let (m, counters) = guided_match(&a, &b, &f, &cfg).unwrap();
        let got: Vec<(u32, u32)> = m.iter().map(|m| (m.i, m.j)).collect();
        assert_eq!(got, truth);
        assert!(counters.descriptor_evaluations < 300 * 300 / 10);
        let (bf, _) = brute_force_guided_match(&a, &b, &f, &cfg);
        assert_eq!(bf, m);
    }

    #[test]
    fn empty_inputs() {
        let (a, _, f, _) = stereo(10, 2);
        let empty = ImageFeatures::new(1280, 960, a.intrinsics, 32);
        assert!(guided_match(&a, &empty, &f, &MatchConfig::default()).unwrap().0.is_empty());
        assert!(brute_force_match(&empty, &a, 0.9).0.is_empty());
    }

    #[test]
    fn brute_force_identity() {
        let (a, _, _, _) = stereo(100, 3);
        let (m, c) = brute_force_match(&a, &a, 0.9);
        assert_eq!(m.len(), 100);
        assert!(m.iter().all(|m| m.i == m.j));
        assert_eq!(c.descriptor_evaluations, 10_000);
    }

    #[test]
    fn dimension_checked() {
        let mut a = ImageFeatures::new(10, 10, CameraIntrinsics::identity(), 4);
        assert!(matches!(a.push(Vec2::zeros(), 1.0, &[0.0; 3]), Err(MatchError::DimensionMismatch { .. })));
    }
}
