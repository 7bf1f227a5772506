//! Initial pose-graph construction over a similarity-ordered pair list.
//!
//! Each pair first tries a walk in the partial graph, scored on track
//! correspondences; an accepted walk pose drives guided matching and IRLS
//! refinement. Pairs that are not yet connected, whose walks fail, or whose
//! refined pose keeps too few inliers fall back to descriptor matching and
//! PROSAC. Workers share one readers-writer lock over the graph, the tracks
//! and the outlier scores, taking it for writing only to commit a result.

mod bench;
mod config;
mod dataset;
mod report;
mod sweep;

pub use bench::{matcher_benchmark, ordering_benchmark, triplet_experiment, MatcherBench, OrderingBench, TripletOutcome};
pub use config::{ConfigError, PipelineConfig, TraversalMode};
pub use dataset::{Dataset, DatasetError, FileFormat, GroundTruthCamera};
pub use report::{median, write_aggregate_csv, write_errors_csv, write_pairs_csv, write_reports};
pub use sweep::{ground_truth_graph, sweep_heuristic, write_sweep_csv, SweepConfig, SweepRow};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geom::{fundamental_from_pose, rotation_error_deg, translation_angle_error_deg, RelativePose, Vec2};
use crate::matcher::{brute_force_guided_match, brute_force_match, guided_match, match_points, Match, MatchCounters};
use crate::posegraph::{pose_from_posegraph, pose_inliers, refine_pose_irls, Edge, PoseGraph, PoseGraphError, ViewId};
use crate::posegraph::{write_posegraph, ExportError};
use crate::robust::{estimate_pose_ransac, rank_correspondences, snn_ordering, ScoreStore};
use crate::similarity::ordered_pairs;
use crate::tracks::TrackStore;
use crate::unionfind::UnionFind;

/// How a pair was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairMethod {
    Walk,
    RansacFallback,
    Skipped,
}

impl PairMethod {
    pub const ALL: [PairMethod; 3] = [PairMethod::Walk, PairMethod::RansacFallback, PairMethod::Skipped];

    pub fn label(self) -> &'static str {
        match self {
            PairMethod::Walk => "walk",
            PairMethod::RansacFallback => "ransac_fallback",
            PairMethod::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub i: u32,
    pub j: u32,
    pub method: PairMethod,
    pub time_s: f64,
    /// Inliers of the committed pose among `tentative`.
    pub inliers: usize,
    pub tentative: usize,
    pub rot_err_deg: Option<f64>,
    pub trans_err_deg: Option<f64>,
    /// The pair was connected in the graph, so a walk search ran.
    pub walk_attempted: bool,
    /// A walk pose was accepted but densification lost it.
    pub demoted: bool,
    pub walk_length: usize,
    pub nodes_visited: usize,
    pub ransac_iterations: usize,
}

impl PairRecord {
    fn new(i: u32, j: u32) -> Self {
        Self {
            i,
            j,
            method: PairMethod::Skipped,
            time_s: 0.0,
            inliers: 0,
            tentative: 0,
            rot_err_deg: None,
            trans_err_deg: None,
            walk_attempted: false,
            demoted: false,
            walk_length: 0,
            nodes_visited: 0,
            ransac_iterations: 0,
        }
    }
}

/// A resolved pair ready to be written into the shared state.
#[derive(Debug, Clone)]
pub struct Commit {
    pub i: ViewId,
    pub j: ViewId,
    pub pose: RelativePose,
    pub matches: Vec<Match>,
    pub points: Vec<(Vec2, Vec2)>,
    /// Indices into `matches`.
    pub inliers: Vec<usize>,
    /// Edge quality in `[0, 1]`.
    pub quality: f64,
}

fn ratio(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

/// Everything the workers share.
#[derive(Debug, Clone)]
pub struct BuildState {
    pub graph: PoseGraph,
    pub tracks: TrackStore,
    pub scores: ScoreStore,
}

impl BuildState {
    pub fn new(keypoints_per_view: &[usize]) -> Self {
        Self {
            graph: PoseGraph::new(keypoints_per_view.len()),
            tracks: TrackStore::new(),
            scores: ScoreStore::new(keypoints_per_view),
        }
    }

    /// Adds the edge, merges the inlier tracks and updates the scores.
    pub fn commit(&mut self, c: &Commit, ds: &Dataset, threshold_px: f64) -> Result<(), PoseGraphError> {
        self.graph.add_edge(Edge { source: c.i, destination: c.j, pose: c.pose, quality: c.quality })?;
        let pairs: Vec<(u32, u32)> = c.inliers.iter().map(|&k| (c.matches[k].i, c.matches[k].j)).collect();
        self.tracks.merge_inliers(c.i, c.j, &pairs);
        let (k1, k2) = (&ds.features[c.i.index()].intrinsics, &ds.features[c.j.index()].intrinsics);
        self.scores.update(c.i, c.j, &c.pose, &c.matches, &c.points, k1, k2, threshold_px);
        Ok(())
    }

    /// Connectivity agrees with the edges, qualities lie in `[0, 1]`, tracks
    /// hold at most one keypoint per view and scores stay in range.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.graph.view_count();
        let mut uf = UnionFind::new(n);
        for e in self.graph.edges() {
            if !(0.0..=1.0).contains(&e.quality) {
                return Err(format!("edge {}-{} has quality {}", e.source, e.destination, e.quality));
            }
            uf.union(e.source.index(), e.destination.index());
        }
        for a in 0..n {
            for b in a + 1..n {
                if uf.connected(a, b) != self.graph.visible(ViewId(a as u32), ViewId(b as u32)) {
                    return Err(format!("visibility of {a}-{b} disagrees with the edges"));
                }
            }
        }
        if uf.component_count() != self.graph.component_count() {
            return Err("component count disagrees with the edges".into());
        }
        self.tracks.check_invariants()?;
        self.scores.check_invariants()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    /// One record per scheduled pair, in schedule order.
    pub records: Vec<PairRecord>,
    pub counters: MatchCounters,
    pub total_time_s: f64,
}

impl RunReport {
    pub fn count(&self, method: PairMethod) -> usize {
        self.records.iter().filter(|r| r.method == method).count()
    }

    /// Pairs resolved by a walk over pairs where a walk search ran.
    pub fn walk_success_rate(&self) -> f64 {
        let attempted = self.records.iter().filter(|r| r.walk_attempted).count();
        if attempted == 0 {
            0.0
        } else {
            self.count(PairMethod::Walk) as f64 / attempted as f64
        }
    }

    /// Pairs resolved by a walk over all resolved pairs.
    pub fn walk_share(&self) -> f64 {
        let matched = self.records.iter().filter(|r| r.method != PairMethod::Skipped).count();
        if matched == 0 {
            0.0
        } else {
            self.count(PairMethod::Walk) as f64 / matched as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub graph: PoseGraph,
    pub tracks: TrackStore,
    pub scores: ScoreStore,
    pub report: RunReport,
}

impl PipelineOutput {
    /// Writes `posegraph.txt`, `tracks.txt` and the CSV reports into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = BufWriter::new(File::create(dir.join("posegraph.txt"))?);
        write_posegraph(&self.graph, &mut f).map_err(|e| match e {
            ExportError::Io(e) => e,
            other => std::io::Error::other(other.to_string()),
        })?;
        f.flush()?;
        let mut f = BufWriter::new(File::create(dir.join("tracks.txt"))?);
        self.tracks.write_tracks(&mut f)?;
        f.flush()?;
        write_reports(&self.report, dir)
    }
}

/// Pairs of the maximum-similarity spanning forest, in schedule order.
pub fn spanning_tree_pairs(pairs: &[(u32, u32)], view_count: usize) -> Vec<(u32, u32)> {
    let mut uf = UnionFind::new(view_count);
    pairs.iter().copied().filter(|&(i, j)| uf.union(i as usize, j as usize).is_some()).collect()
}

fn pair_seed(seed: u64, i: u32, j: u32) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((u64::from(i) << 32) | u64::from(j))
}

struct Outcome {
    commit: Option<Commit>,
    counters: MatchCounters,
}

/// Guided matching under an accepted walk pose, then IRLS. The edge quality
/// is the refined pose's inlier ratio on the track correspondences `shared`,
/// since guided matches pass the epipolar gate by construction.
fn densify(ds: &Dataset, cfg: &PipelineConfig, i: ViewId, j: ViewId, pose: &RelativePose, shared: &[(Vec2, Vec2)]) -> Outcome {
    let (f1, f2) = (&ds.features[i.index()], &ds.features[j.index()]);
    let pose = &refine_pose_irls(pose, shared, &f1.intrinsics, &f2.intrinsics, cfg.inlier_threshold_px).unwrap_or(*pose);
    let f = fundamental_from_pose(pose, &f1.intrinsics, &f2.intrinsics);
    let mcfg = cfg.match_config();
    let (matches, counters) = if cfg.enable_epipolar_hashing {
        match guided_match(f1, f2, &f, &mcfg) {
            Ok(r) => r,
            Err(_) => brute_force_guided_match(f1, f2, &f, &mcfg),
        }
    } else {
        brute_force_guided_match(f1, f2, &f, &mcfg)
    };
    let points = match_points(f1, f2, &matches);
    let commit = refine_pose_irls(pose, &points, &f1.intrinsics, &f2.intrinsics, cfg.inlier_threshold_px)
        .ok()
        .and_then(|refined| {
            let inliers = pose_inliers(&refined, &points, &f1.intrinsics, &f2.intrinsics, cfg.inlier_threshold_px);
            let quality = ratio(
                pose_inliers(&refined, shared, &f1.intrinsics, &f2.intrinsics, cfg.inlier_threshold_px).len(),
                shared.len(),
            );
            (inliers.len() >= cfg.min_inliers).then_some(Commit { i, j, pose: refined, matches, points, inliers, quality })
        });
    Outcome { commit, counters }
}

fn process_pair(ds: &Dataset, cfg: &PipelineConfig, state: &RwLock<BuildState>, i: u32, j: u32) -> (PairRecord, MatchCounters) {
    let start = Instant::now();
    let (vi, vj) = (ViewId(i), ViewId(j));
    let (f1, f2) = (&ds.features[i as usize], &ds.features[j as usize]);
    let mut rec = PairRecord::new(i, j);
    let mut counters = MatchCounters::default();
    let mut commit = None;

    if let Some(traversal) = cfg.traversal.traversal() {
        let guard = state.read().expect("state lock");
        if guard.graph.visible(vi, vj) {
            rec.walk_attempted = true;
            let shared = guard.tracks.shared_correspondences(vi, vj);
            let pts: Vec<(Vec2, Vec2)> =
                shared.iter().map(|&(a, b)| (f1.position(a as usize), f2.position(b as usize))).collect();
            let found = pose_from_posegraph(
                &guard.graph,
                &ds.similarity,
                vi,
                vj,
                &cfg.traversal_config(),
                traversal,
                &pts,
                &f1.intrinsics,
                &f2.intrinsics,
            );
            drop(guard);
            match found {
                Ok(wp) => {
                    rec.walk_length = wp.walk.len();
                    rec.nodes_visited = wp.nodes_visited;
                    let out = densify(ds, cfg, vi, vj, &wp.pose, &pts);
                    counters += out.counters;
                    match out.commit {
                        Some(c) => {
                            rec.method = PairMethod::Walk;
                            commit = Some(c);
                        }
                        None => rec.demoted = true,
                    }
                }
                Err(PoseGraphError::NoPose { nodes_visited, .. }) => rec.nodes_visited = nodes_visited,
                Err(_) => {}
            }
        }
    }

    if commit.is_none() {
        let (matches, c) = brute_force_match(f1, f2, cfg.snn_base);
        counters += c;
        let ordering = if cfg.enable_adaptive_ranking {
            rank_correspondences(&state.read().expect("state lock").scores, vi, vj, &matches)
        } else {
            snn_ordering(&matches)
        };
        let points = match_points(f1, f2, &matches);
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(cfg.seed, i, j));
        match estimate_pose_ransac(&points, &ordering, &cfg.ransac_config(), &f1.intrinsics, &f2.intrinsics, &mut rng) {
            Ok(res) => {
                rec.ransac_iterations = res.iterations;
                rec.method = PairMethod::RansacFallback;
                let quality = ratio(res.inliers.len(), matches.len());
                commit = Some(Commit { i: vi, j: vj, pose: res.pose, matches, points, inliers: res.inliers, quality });
            }
            Err(crate::robust::RobustError::NoModel { iterations, .. }) => rec.ransac_iterations = iterations,
            Err(_) => {}
        }
    }

    if let Some(c) = commit {
        rec.inliers = c.inliers.len();
        rec.tentative = c.matches.len();
        if let Some(gt) = ds.ground_truth_pose(vi, vj) {
            rec.rot_err_deg = Some(rotation_error_deg(c.pose.rotation(), gt.rotation()));
            rec.trans_err_deg = Some(translation_angle_error_deg(c.pose.translation(), gt.translation()));
        }
        let mut guard = state.write().expect("state lock");
        if guard.commit(&c, ds, cfg.inlier_threshold_px).is_err() {
            rec.method = PairMethod::Skipped;
        }
    }
    rec.time_s = start.elapsed().as_secs_f64();
    (rec, counters)
}

/// Builds the pose-graph for all pairs above the similarity threshold.
/// Per-pair failures are recorded, never returned.
pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput, ConfigError> {
    cfg.validate()?;
    let start = Instant::now();
    let schedule = ordered_pairs(&ds.similarity, cfg.min_similarity);
    let active: Vec<bool> = if cfg.spanning_tree_only {
        let tree: std::collections::HashSet<(u32, u32)> =
            spanning_tree_pairs(&schedule, ds.view_count()).into_iter().collect();
        schedule.iter().map(|p| tree.contains(p)).collect()
    } else {
        vec![true; schedule.len()]
    };
    let keypoints: Vec<usize> = ds.features.iter().map(|f| f.len()).collect();
    let state = RwLock::new(BuildState::new(&keypoints));
    let slots: Mutex<Vec<Option<(PairRecord, MatchCounters)>>> = Mutex::new(vec![None; schedule.len()]);
    let next = AtomicUsize::new(0);

    let work = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        if k >= schedule.len() {
            break;
        }
        let (i, j) = schedule[k];
        let result = if active[k] {
            process_pair(ds, cfg, &state, i, j)
        } else {
            (PairRecord::new(i, j), MatchCounters::default())
        };
        slots.lock().expect("record lock")[k] = Some(result);
    };
    if cfg.thread_count <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..cfg.thread_count {
                s.spawn(work);
            }
        });
    }

    let mut report = RunReport::default();
    for slot in slots.into_inner().expect("record lock") {
        let (mut rec, c) = slot.expect("every pair processed");
        if !cfg.record_timing {
            rec.time_s = 0.0;
        }
        report.counters += c;
        report.records.push(rec);
    }
    report.total_time_s = if cfg.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let st = state.into_inner().expect("state lock");
    log::info!(
        "{} pairs: {} walk, {} fallback, {} skipped",
        report.records.len(),
        report.count(PairMethod::Walk),
        report.count(PairMethod::RansacFallback),
        report.count(PairMethod::Skipped)
    );
    Ok(PipelineOutput { graph: st.graph, tracks: st.tracks, scores: st.scores, report })
}
