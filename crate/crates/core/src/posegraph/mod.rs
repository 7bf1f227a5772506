//! Directed pose-graph with union-find visibility and walk composition.
//!
//! Edges are stored once per unordered view pair and may be traversed in
//! either direction; traversing an edge backwards uses the inverted pose.

mod alg;
mod export;
mod refine;
mod search;

use std::collections::HashMap;
use std::sync::{RwLock, RwLockReadGuard};

use thiserror::Error;

use crate::geom::{self, GeomError, RelativePose, Rotation, Vec3};
use crate::unionfind::UnionFind;

pub use alg::{pose_from_posegraph, pose_inliers, WalkPose};
pub use export::{read_posegraph, write_posegraph, ExportError};
pub use refine::{refine_pose_irls, truncated_sampson_cost, RefineError, MIN_REFINE_INLIERS};
pub use search::{walk_heuristic, Traversal, TraversalConfig, WalkSearch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ViewId(pub u32);

impl ViewId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ViewId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: ViewId,
    pub destination: ViewId,
    /// Pose from `source` to `destination`.
    pub pose: RelativePose,
    /// Inlier ratio of the estimate that produced the edge, in `[0, 1]`.
    pub quality: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseGraphError {
    #[error("view {0} is out of range")]
    UnknownView(ViewId),
    #[error("self loop on view {0}")]
    SelfLoop(ViewId),
    #[error("an edge between {0} and {1} already exists")]
    DuplicateEdge(ViewId, ViewId),
    #[error("edge quality {0} outside [0, 1]")]
    InvalidQuality(f64),
    #[error("edge pose has a degenerate translation")]
    DegeneratePose,
    #[error("views {0} and {1} are not connected")]
    NotVisible(ViewId, ViewId),
    #[error("walk is malformed: {0}")]
    InvalidWalk(String),
    #[error("no walk produced enough inliers ({walks_evaluated} walks, {nodes_visited} nodes)")]
    NoPose { walks_evaluated: usize, nodes_visited: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// One traversal of an edge, forwards or backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Step {
    pub edge: EdgeId,
    pub inverted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    edges: Vec<Edge>,
    adjacency: Vec<Vec<Step>>,
    pairs: HashMap<(u32, u32), EdgeId>,
    components: UnionFind,
}

fn pair_key(a: ViewId, b: ViewId) -> (u32, u32) {
    (a.0.min(b.0), a.0.max(b.0))
}

impl PoseGraph {
    pub fn new(view_count: usize) -> Self {
        Self {
            edges: Vec::new(),
            adjacency: vec![Vec::new(); view_count],
            pairs: HashMap::new(),
            components: UnionFind::new(view_count),
        }
    }

    pub fn view_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn edge_between(&self, a: ViewId, b: ViewId) -> Option<EdgeId> {
        self.pairs.get(&pair_key(a, b)).copied()
    }

    pub fn steps_from(&self, v: ViewId) -> &[Step] {
        &self.adjacency[v.index()]
    }

    pub fn component_count(&self) -> usize {
        self.components.component_count()
    }

    fn check_view(&self, v: ViewId) -> Result<(), PoseGraphError> {
        if v.index() < self.view_count() {
            Ok(())
        } else {
            Err(PoseGraphError::UnknownView(v))
        }
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<EdgeId, PoseGraphError> {
        self.check_view(edge.source)?;
        self.check_view(edge.destination)?;
        if edge.source == edge.destination {
            return Err(PoseGraphError::SelfLoop(edge.source));
        }
        if !(0.0..=1.0).contains(&edge.quality) {
            return Err(PoseGraphError::InvalidQuality(edge.quality));
        }
        if edge.pose.is_degenerate() {
            return Err(PoseGraphError::DegeneratePose);
        }
        let key = pair_key(edge.source, edge.destination);
        if self.pairs.contains_key(&key) {
            return Err(PoseGraphError::DuplicateEdge(edge.source, edge.destination));
        }
        let id = EdgeId(self.edges.len());
        self.adjacency[edge.source.index()].push(Step { edge: id, inverted: false });
        self.adjacency[edge.destination.index()].push(Step { edge: id, inverted: true });
        self.components.union(edge.source.index(), edge.destination.index());
        self.pairs.insert(key, id);
        self.edges.push(edge);
        Ok(id)
    }

    /// Whether any walk connects `s` and `d`.
    pub fn visible(&self, s: ViewId, d: ViewId) -> bool {
        s.index() < self.view_count()
            && d.index() < self.view_count()
            && self.components.connected(s.index(), d.index())
    }

    /// `(from, to)` of a step in traversal direction.
    pub fn step_endpoints(&self, step: Step) -> (ViewId, ViewId) {
        let e = &self.edges[step.edge.0];
        if step.inverted {
            (e.destination, e.source)
        } else {
            (e.source, e.destination)
        }
    }

    pub fn step_pose(&self, step: Step) -> RelativePose {
        let e = &self.edges[step.edge.0];
        if step.inverted {
            e.pose.inverse()
        } else {
            e.pose
        }
    }

    pub fn step_quality(&self, step: Step) -> f64 {
        self.edges[step.edge.0].quality
    }
}

/// A walk as a chained sequence of steps from `source` to `destination`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Walk {
    pub source: ViewId,
    pub destination: ViewId,
    pub steps: Vec<Step>,
}

impl Walk {
    /// Validates chaining against `graph`.
    pub fn new(graph: &PoseGraph, source: ViewId, steps: Vec<Step>) -> Result<Self, PoseGraphError> {
        if steps.is_empty() {
            return Err(PoseGraphError::InvalidWalk("empty walk".into()));
        }
        let mut at = source;
        for (i, step) in steps.iter().enumerate() {
            if step.edge.0 >= graph.edge_count() {
                return Err(PoseGraphError::InvalidWalk(format!("step {i} references a missing edge")));
            }
            let (from, to) = graph.step_endpoints(*step);
            if from != at {
                return Err(PoseGraphError::InvalidWalk(format!("step {i} starts at {from}, expected {at}")));
            }
            at = to;
        }
        Ok(Self { source, destination: at, steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Visited vertices, source first.
    pub fn vertices(&self, graph: &PoseGraph) -> Vec<ViewId> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        out.push(self.source);
        out.extend(self.steps.iter().map(|s| graph.step_endpoints(*s).1));
        out
    }
}

/// Pose implied by a walk: the step poses chained so that the first step is
/// applied first. May return a degenerate (zero translation) pose.
pub fn walk_pose_unchecked(graph: &PoseGraph, walk: &Walk) -> RelativePose {
    let poses: Vec<RelativePose> = walk.steps.iter().map(|s| graph.step_pose(*s)).collect();
    geom::compose_chain(&poses).unwrap_or_else(|_| {
        let r = poses.iter().fold(Rotation::identity(), |acc, p| p.rotation() * acc);
        RelativePose::new(r, Vec3::zeros())
    })
}

/// Pose implied by a walk; fails if the chained translation vanishes.
pub fn walk_pose(graph: &PoseGraph, walk: &Walk) -> Result<RelativePose, PoseGraphError> {
    if walk.steps.is_empty() {
        return Err(PoseGraphError::InvalidWalk("empty walk".into()));
    }
    let poses: Vec<RelativePose> = walk.steps.iter().map(|s| graph.step_pose(*s)).collect();
    Ok(geom::compose_chain(&poses)?)
}


/// Readers-writer guarded graph: searches and visibility checks share the
/// graph, edge insertion (and the union-find update it implies) is exclusive.
#[derive(Debug, Default)]
pub struct GuardedPoseGraph {
    inner: RwLock<PoseGraph>,
}

impl GuardedPoseGraph {
    pub fn new(graph: PoseGraph) -> Self {
        Self { inner: RwLock::new(graph) }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, PoseGraph> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn add_edge(&self, edge: Edge) -> Result<EdgeId, PoseGraphError> {
        self.inner.write().unwrap_or_else(|e| e.into_inner()).add_edge(edge)
    }

    pub fn visible(&self, s: ViewId, d: ViewId) -> bool {
        self.read().visible(s, d)
    }

    pub fn into_inner(self) -> PoseGraph {
        self.inner.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_error_deg, Rotation, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    fn pose(angle: f64) -> RelativePose {
        RelativePose::new(Rotation::from_axis_angle(&Vec3::y_axis(), angle), Vec3::new(1.0, 0.2, 0.0))
    }

    fn edge(a: u32, b: u32) -> Edge {
        Edge { source: ViewId(a), destination: ViewId(b), pose: pose(0.1), quality: 0.5 }
    }

    #[test]
    fn add_edge_connects_views() {
        let mut g = PoseGraph::new(3);
        assert!(!g.visible(ViewId(0), ViewId(1)));
        assert!(g.visible(ViewId(2), ViewId(2)));
        g.add_edge(edge(0, 1)).unwrap();
        assert!(g.visible(ViewId(0), ViewId(1)));
        g.add_edge(edge(1, 2)).unwrap();
        assert!(g.visible(ViewId(0), ViewId(2)));
    }

    #[test]
    fn add_edge_rejections() {
        let mut g = PoseGraph::new(3);
        g.add_edge(edge(0, 1)).unwrap();
        assert_eq!(g.add_edge(edge(0, 1)), Err(PoseGraphError::DuplicateEdge(ViewId(0), ViewId(1))));
        assert_eq!(g.add_edge(edge(1, 0)), Err(PoseGraphError::DuplicateEdge(ViewId(1), ViewId(0))));
        assert_eq!(g.add_edge(edge(2, 2)), Err(PoseGraphError::SelfLoop(ViewId(2))));
        assert_eq!(g.add_edge(edge(0, 5)), Err(PoseGraphError::UnknownView(ViewId(5))));
        let mut bad = edge(1, 2);
        bad.quality = 1.5;
        assert_eq!(g.add_edge(bad), Err(PoseGraphError::InvalidQuality(1.5)));
        let mut degenerate = edge(1, 2);
        degenerate.pose = RelativePose::identity();
        assert_eq!(g.add_edge(degenerate), Err(PoseGraphError::DegeneratePose));
    }

    #[test]
    fn visibility_matches_bfs_reachability() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1500;
        let mut g = PoseGraph::new(n);
        let mut added = 0;
        while added < 1000 {
            let a = rng.gen_range(0..n as u32);
            let b = rng.gen_range(0..n as u32);
            if g.add_edge(edge(a, b)).is_ok() {
                added += 1;
            }
        }
        let bfs = |s: usize, d: usize| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([s]);
            seen[s] = true;
            while let Some(v) = queue.pop_front() {
                if v == d {
                    return true;
                }
                for step in g.steps_from(ViewId(v as u32)) {
                    let to = g.step_endpoints(*step).1.index();
                    if !seen[to] {
                        seen[to] = true;
                        queue.push_back(to);
                    }
                }
            }
            false
        };
        let mut positives = 0;
        for _ in 0..100 {
            let s = rng.gen_range(0..n);
            let d = rng.gen_range(0..n);
            let expected = bfs(s, d);
            positives += expected as usize;
            assert_eq!(g.visible(ViewId(s as u32), ViewId(d as u32)), expected);
        }
        assert!(positives > 0);
    }

    #[test]
    fn walk_poses() {
        let mut g = PoseGraph::new(3);
        let e01 = g.add_edge(Edge { source: ViewId(0), destination: ViewId(1), pose: pose(0.2), quality: 0.9 }).unwrap();
        let p21 = RelativePose::new(Rotation::from_axis_angle(&Vec3::y_axis(), -0.3), Vec3::new(-1.0, 0.0, 0.3));
        let e21 = g.add_edge(Edge { source: ViewId(2), destination: ViewId(1), pose: p21, quality: 0.9 }).unwrap();

        let single = Walk::new(&g, ViewId(0), vec![Step { edge: e01, inverted: false }]).unwrap();
        assert_eq!(walk_pose(&g, &single).unwrap(), pose(0.2));

        let back_and_forth = Walk::new(
            &g,
            ViewId(0),
            vec![Step { edge: e01, inverted: false }, Step { edge: e01, inverted: true }],
        )
        .unwrap();
        assert_eq!(back_and_forth.destination, ViewId(0));
        let id = walk_pose_unchecked(&g, &back_and_forth);
        assert!(rotation_error_deg(id.rotation(), &Rotation::identity()) < 1e-9);
        assert!(matches!(walk_pose(&g, &back_and_forth), Err(PoseGraphError::Geom(GeomError::ZeroTranslation))));

        let through = Walk::new(
            &g,
            ViewId(0),
            vec![Step { edge: e01, inverted: false }, Step { edge: e21, inverted: true }],
        )
        .unwrap();
        let p = walk_pose(&g, &through).unwrap();
        let expected = geom::compose(&p21.inverse(), &pose(0.2)).unwrap();
        assert!(rotation_error_deg(p.rotation(), expected.rotation()) < 1e-12);
        assert!(Walk::new(&g, ViewId(1), vec![Step { edge: e01, inverted: false }]).is_err());
    }

    #[test]
    fn guarded_graph_round_trip() {
        let guarded = GuardedPoseGraph::new(PoseGraph::new(2));
        guarded.add_edge(edge(0, 1)).unwrap();
        assert!(guarded.visible(ViewId(1), ViewId(0)));
        assert_eq!(guarded.into_inner().edge_count(), 1);
    }
}
