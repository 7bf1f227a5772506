//! Relative pose of a view pair read off the pose-graph.

use super::search::{Traversal, TraversalConfig, WalkSearch};
use super::{walk_pose, PoseGraph, PoseGraphError, ViewId, Walk};
use crate::geom::{fundamental_from_pose, sampson_or_inf, CameraIntrinsics, RelativePose, Vec2};
use crate::similarity::SimilarityMatrix;

/// Best walk pose found for a pair.
#[derive(Debug, Clone)]
pub struct WalkPose {
    pub pose: RelativePose,
    pub walk: Walk,
    /// Indices into the correspondences passed in.
    pub inliers: Vec<usize>,
    pub walks_evaluated: usize,
    pub nodes_visited: usize,
}

/// Indices of correspondences whose Sampson distance under `pose` is below `threshold_px`.
pub fn pose_inliers(
    pose: &RelativePose,
    correspondences: &[(Vec2, Vec2)],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    threshold_px: f64,
) -> Vec<usize> {
    let f = fundamental_from_pose(pose, k1, k2).normalized();
    correspondences
        .iter()
        .enumerate()
        .filter(|(_, (p1, p2))| sampson_or_inf(p1, p2, &f) < threshold_px)
        .map(|(i, _)| i)
        .collect()
}

/// Walks the graph from `source` to `destination` in heuristic order, scoring
/// each walk pose by its inliers among `correspondences`, and stops at the
/// first pose with `cfg.min_inliers` inliers.
///
/// Returns [`PoseGraphError::NoPose`] when the walks run out first.
#[allow(clippy::too_many_arguments)]
pub fn pose_from_posegraph(
    graph: &PoseGraph,
    sim: &SimilarityMatrix,
    source: ViewId,
    destination: ViewId,
    cfg: &TraversalConfig,
    traversal: Traversal,
    correspondences: &[(Vec2, Vec2)],
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> Result<WalkPose, PoseGraphError> {
    let mut search = WalkSearch::new(graph, sim, source, destination, cfg, traversal)?;
    let mut best: Option<(RelativePose, Walk, Vec<usize>)> = None;
    let mut walks_evaluated = 0;
    while let Some(walk) = search.next_walk() {
        walks_evaluated += 1;
        let Ok(pose) = walk_pose(graph, &walk) else {
            continue;
        };
        let inliers = pose_inliers(&pose, correspondences, k1, k2, cfg.inlier_threshold_px);
        if best.as_ref().is_none_or(|(_, _, b)| inliers.len() > b.len()) {
            best = Some((pose, walk, inliers));
        }
        if best.as_ref().is_some_and(|(_, _, b)| b.len() >= cfg.min_inliers) {
            break;
        }
    }
    let nodes_visited = search.nodes_visited();
    match best {
        Some((pose, walk, inliers)) if inliers.len() >= cfg.min_inliers => {
            Ok(WalkPose { pose, walk, inliers, walks_evaluated, nodes_visited })
        }
        _ => Err(PoseGraphError::NoPose { walks_evaluated, nodes_visited }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_error_deg, Rotation, Vec3};
    use crate::posegraph::Edge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Rig {
        rotations: Vec<Rotation>,
        centers: Vec<Vec3>,
        k: CameraIntrinsics,
    }

    /// Cameras on a unit-spaced line looking down +z, so every adjacent baseline is 1.
    fn rig(n: usize) -> Rig {
        let rotations = (0..n).map(|i| Rotation::from_axis_angle(&Vec3::y_axis(), 0.02 * i as f64)).collect();
        let centers = (0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        Rig { rotations, centers, k: CameraIntrinsics::new(800.0, 800.0, 640.0, 480.0).unwrap() }
    }

    impl Rig {
        fn pose(&self, i: usize, j: usize) -> RelativePose {
            let r = self.rotations[j] * self.rotations[i].inverse();
            RelativePose::new(r, self.rotations[j] * (self.centers[i] - self.centers[j]))
        }

        fn correspondences(&self, i: usize, j: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec2, Vec2)> {
            let mut out = Vec::new();
            while out.len() < n {
                let x = Vec3::new(rng.gen_range(-3.0..8.0), rng.gen_range(-3.0..3.0), rng.gen_range(8.0..15.0));
                let a = self.k.project(&(self.rotations[i] * (x - self.centers[i])));
                let b = self.k.project(&(self.rotations[j] * (x - self.centers[j])));
                if let (Some(a), Some(b)) = (a, b) {
                    out.push((a, b));
                }
            }
            out
        }
    }

    fn chain(rig: &Rig, n: usize) -> PoseGraph {
        let mut g = PoseGraph::new(n);
        for i in 0..n - 1 {
            g.add_edge(Edge { source: ViewId(i as u32), destination: ViewId(i as u32 + 1), pose: rig.pose(i, i + 1), quality: 0.8 })
                .unwrap();
        }
        g
    }

    #[test]
    fn noise_free_first_walk_accepted() {
        let rig = rig(4);
        let g = chain(&rig, 4);
        let sim = SimilarityMatrix::identity(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corr = rig.correspondences(0, 3, 100, &mut rng);
        let cfg = TraversalConfig::default();
        let res = pose_from_posegraph(&g, &sim, ViewId(0), ViewId(3), &cfg, Traversal::AStar, &corr, &rig.k, &rig.k)
            .unwrap();
        assert_eq!(res.inliers.len(), 100);
        assert_eq!(res.walks_evaluated, 1);
        assert!(rotation_error_deg(res.pose.rotation(), rig.pose(0, 3).rotation()) < 1e-6);
    }

    #[test]
    fn corrupted_edge_gives_no_pose() {
        let rig = rig(3);
        let mut g = PoseGraph::new(3);
        g.add_edge(Edge { source: ViewId(0), destination: ViewId(1), pose: rig.pose(0, 1), quality: 0.8 }).unwrap();
        let bad = RelativePose::new(Rotation::from_axis_angle(&Vec3::x_axis(), 0.7), Vec3::new(0.1, 1.0, 0.3));
        g.add_edge(Edge { source: ViewId(1), destination: ViewId(2), pose: bad, quality: 0.8 }).unwrap();
        let sim = SimilarityMatrix::identity(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let corr = rig.correspondences(0, 2, 100, &mut rng);
        let res = pose_from_posegraph(
            &g,
            &sim,
            ViewId(0),
            ViewId(2),
            &TraversalConfig::default(),
            Traversal::AStar,
            &corr,
            &rig.k,
            &rig.k,
        );
        assert!(matches!(res, Err(PoseGraphError::NoPose { walks_evaluated: 1, .. })));
    }

    #[test]
    fn disconnected_is_not_visible() {
        let g = PoseGraph::new(2);
        let sim = SimilarityMatrix::identity(2);
        let k = CameraIntrinsics::identity();
        let res = pose_from_posegraph(
            &g,
            &sim,
            ViewId(0),
            ViewId(1),
            &TraversalConfig::default(),
            Traversal::AStar,
            &[],
            &k,
            &k,
        );
        assert!(matches!(res, Err(PoseGraphError::NotVisible(..))));
    }
}
