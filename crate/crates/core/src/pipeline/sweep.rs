//! Grid sweep of the walk heuristic on a ground-truth pose-graph.
//!
//! The graph keeps a random subset of the similar pairs of a scene as edges.
//! Each edge carries the true pose perturbed by a small error, or by a large
//! one for a fraction of the edges, and the inlier ratio of that pose on the
//! pair's tentative correspondences as its quality. Every pair with enough
//! shared points but no direct edge is then resolved from walks, and a pose is
//! counted as accurate when its rotation error is below a bound.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geom::{rotation_error_deg, RelativePose, Rotation, Vec2, Vec3};
use crate::posegraph::{pose_from_posegraph, pose_inliers, Edge, PoseGraph, PoseGraphError, Traversal, TraversalConfig, ViewId};
use crate::scene::SyntheticScene;
use crate::similarity::{ordered_pairs, SimilarityMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub depths: Vec<usize>,
    pub min_similarity: f64,
    /// Fraction of the similar pairs kept as edges.
    pub edge_fraction: f64,
    /// Fraction of the edges given the large error.
    pub noisy_edge_fraction: f64,
    /// Standard deviation of the small edge error, degrees.
    pub clean_noise_deg: f64,
    /// Standard deviation of the large edge error, degrees.
    pub noisy_noise_deg: f64,
    pub min_inliers: usize,
    pub inlier_threshold_px: f64,
    /// Rotation error below which a pose counts as accurate, degrees.
    pub max_error_deg: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: (0..=10).map(|k| f64::from(k) / 10.0).collect(),
            depths: vec![1, 2, 3, 4, 5],
            min_similarity: 0.4,
            edge_fraction: 0.6,
            noisy_edge_fraction: 0.3,
            clean_noise_deg: 0.1,
            noisy_noise_deg: 3.0,
            min_inliers: 20,
            inlier_threshold_px: 2.0,
            max_error_deg: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub depth: usize,
    pub pairs: usize,
    pub avg_nodes_visited: f64,
    pub success_rate: f64,
}

fn small_rotation(rng: &mut ChaCha8Rng, sigma_deg: f64) -> Rotation {
    let axis = Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let angle = sigma_deg.to_radians() * rng.sample::<f64, _>(StandardNormal);
    Rotation::new(axis.normalize() * angle)
}

fn perturb(pose: &RelativePose, rng: &mut ChaCha8Rng, sigma_deg: f64) -> RelativePose {
    let r = small_rotation(rng, sigma_deg) * pose.rotation();
    let t = small_rotation(rng, sigma_deg) * pose.translation();
    RelativePose::new(r, t)
}

fn pixel_correspondences(scene: &SyntheticScene, i: ViewId, j: ViewId, seed: u64) -> Vec<(Vec2, Vec2)> {
    let (pairs, _) = scene.tentative_correspondences(i, j, seed);
    scene.pixel_pairs(i, j, &pairs)
}

/// Perturbed ground-truth graph over a random subset of the similar pairs.
pub fn ground_truth_graph(scene: &SyntheticScene, sim: &SimilarityMatrix, cfg: &SweepConfig) -> PoseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut graph = PoseGraph::new(scene.view_count());
    for (i, j) in ordered_pairs(sim, cfg.min_similarity) {
        if !rng.gen_bool(cfg.edge_fraction) {
            continue;
        }
        let (vi, vj) = (ViewId(i), ViewId(j));
        let sigma = if rng.gen_bool(cfg.noisy_edge_fraction) { cfg.noisy_noise_deg } else { cfg.clean_noise_deg };
        let pose = perturb(&scene.ground_truth_pose(vi, vj), &mut rng, sigma);
        let corr = pixel_correspondences(scene, vi, vj, cfg.seed ^ u64::from(i) << 32 ^ u64::from(j));
        let (k1, k2) = (&scene.cameras[vi.index()].intrinsics, &scene.cameras[vj.index()].intrinsics);
        let quality = if corr.is_empty() {
            0.0
        } else {
            pose_inliers(&pose, &corr, k1, k2, cfg.inlier_threshold_px).len() as f64 / corr.len() as f64
        };
        graph.add_edge(Edge { source: vi, destination: vj, pose, quality }).expect("valid ground-truth edge");
    }
    graph
}

/// Mean visited-node count and accurate-pose rate for every `(λ, depth)` cell.
pub fn sweep_heuristic(scene: &SyntheticScene, sim: &SimilarityMatrix, cfg: &SweepConfig) -> Vec<SweepRow> {
    let graph = ground_truth_graph(scene, sim, cfg);
    let n = scene.view_count() as u32;
    let mut targets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (vi, vj) = (ViewId(i), ViewId(j));
            if graph.edge_between(vi, vj).is_some() || scene.ground_truth_inliers(vi, vj).len() < cfg.min_inliers {
                continue;
            }
            targets.push((vi, vj, pixel_correspondences(scene, vi, vj, cfg.seed.wrapping_add(1) ^ u64::from(i) << 32 ^ u64::from(j))));
        }
    }
    let mut rows = Vec::new();
    for &depth in &cfg.depths {
        for &lambda in &cfg.lambdas {
            let tcfg = TraversalConfig { lambda, max_depth: depth, min_inliers: cfg.min_inliers, inlier_threshold_px: cfg.inlier_threshold_px };
            let (mut nodes, mut ok) = (0usize, 0usize);
            for (vi, vj, corr) in &targets {
                let (k1, k2) = (&scene.cameras[vi.index()].intrinsics, &scene.cameras[vj.index()].intrinsics);
                match pose_from_posegraph(&graph, sim, *vi, *vj, &tcfg, Traversal::AStar, corr, k1, k2) {
                    Ok(wp) => {
                        nodes += wp.nodes_visited;
                        let gt = scene.ground_truth_pose(*vi, *vj);
                        if rotation_error_deg(wp.pose.rotation(), gt.rotation()) < cfg.max_error_deg {
                            ok += 1;
                        }
                    }
                    Err(PoseGraphError::NoPose { nodes_visited, .. }) => nodes += nodes_visited,
                    Err(_) => {}
                }
            }
            let m = targets.len().max(1) as f64;
            rows.push(SweepRow { lambda, depth, pairs: targets.len(), avg_nodes_visited: nodes as f64 / m, success_rate: ok as f64 / m });
        }
    }
    rows
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "lambda,depth,pairs,avg_nodes_visited,success_rate")?;
    for r in rows {
        writeln!(out, "{:.2},{},{},{:.3},{:.6}", r.lambda, r.depth, r.pairs, r.avg_nodes_visited, r.success_rate)?;
    }
    Ok(())
}
