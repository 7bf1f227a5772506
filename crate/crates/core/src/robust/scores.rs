//! Per-keypoint outlier scores accumulated over estimated pairs, and the
//! correspondence ordering they induce.

use crate::geom::{fundamental_from_pose, sampson_or_inf, CameraIntrinsics, RelativePose, Vec2};
use crate::matcher::Match;
use crate::posegraph::ViewId;

/// Lower bound on a score, keeping long products away from zero.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Truncated-quadratic outlier probability of a residual.
pub fn point_outlier_probability(residual: f64, threshold: f64) -> f64 {
    (residual * residual / (threshold * threshold)).min(1.0)
}

/// Scores in `[SCORE_FLOOR, 1]` for every keypoint of every view; low means
/// the keypoint has been an inlier before.
#[derive(Debug, Clone, Default)]
pub struct ScoreStore {
    scores: Vec<Vec<f64>>,
}

impl ScoreStore {
    pub fn new(keypoints_per_view: &[usize]) -> Self {
        Self { scores: keypoints_per_view.iter().map(|&n| vec![1.0; n]).collect() }
    }

    pub fn view_count(&self) -> usize {
        self.scores.len()
    }

    pub fn score(&self, view: ViewId, kp: u32) -> f64 {
        self.scores[view.index()][kp as usize]
    }

    pub fn view_scores(&self, view: ViewId) -> &[f64] {
        &self.scores[view.index()]
    }

    /// Multiplies both endpoint scores of each tentative match by the square
    /// root of its outlier probability under `pose`.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        view_i: ViewId,
        view_j: ViewId,
        pose: &RelativePose,
        matches: &[Match],
        points: &[(Vec2, Vec2)],
        k1: &CameraIntrinsics,
        k2: &CameraIntrinsics,
        threshold: f64,
    ) {
        let f = fundamental_from_pose(pose, k1, k2).normalized();
        for (m, (p, q)) in matches.iter().zip(points) {
            let factor = point_outlier_probability(sampson_or_inf(p, q, &f), threshold).sqrt();
            let a = &mut self.scores[view_i.index()][m.i as usize];
            *a = (*a * factor).max(SCORE_FLOOR);
            let b = &mut self.scores[view_j.index()][m.j as usize];
            *b = (*b * factor).max(SCORE_FLOOR);
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        for (v, s) in self.scores.iter().enumerate() {
            if let Some(bad) = s.iter().find(|x| !(SCORE_FLOOR..=1.0).contains(*x)) {
                return Err(format!("view {v} has score {bad} outside [{SCORE_FLOOR}, 1]"));
            }
        }
        Ok(())
    }
}

/// Permutation of `matches` by endpoint score product, then ratio-test
/// value, then position, all ascending.
pub fn rank_correspondences(store: &ScoreStore, view_i: ViewId, view_j: ViewId, matches: &[Match]) -> Vec<usize> {
    let key: Vec<f64> = matches.iter().map(|m| store.score(view_i, m.i) * store.score(view_j, m.j)).collect();
    let mut order: Vec<usize> = (0..matches.len()).collect();
    order.sort_by(|&a, &b| {
        key[a]
            .total_cmp(&key[b])
            .then(matches[a].snn_ratio.total_cmp(&matches[b].snn_ratio))
            .then(a.cmp(&b))
    });
    order
}

/// Permutation by ratio-test value alone.
pub fn snn_ordering(matches: &[Match]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matches.len()).collect();
    order.sort_by(|&a, &b| matches[a].snn_ratio.total_cmp(&matches[b].snn_ratio).then(a.cmp(&b)));
    order
}
