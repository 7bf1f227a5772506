//! Resumable best-first walk generation.
//!
//! Walks are scored with `h(W) = λ·min ρ(f) + (1-λ)·max δ(v, d)`, where the
//! minimum runs over the edge qualities of the walk and the maximum over the
//! vertices the walk departs from (every vertex except the destination).
//!
//! The A* search keeps partial walks in a max-heap keyed by an optimistic
//! bound on the score of any completion, so complete walks come out in exact
//! non-increasing `h` order. Equal scores are broken by walk length, then by
//! the lexicographic order of the visited vertex sequence.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::{PoseGraph, PoseGraphError, Step, ViewId, Walk};
use crate::similarity::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraversalConfig {
    /// Weight of the edge-quality term, in `[0, 1]`.
    pub lambda: f64,
    /// Maximum number of edges in a walk.
    pub max_depth: usize,
    /// Inliers needed to accept a walk pose.
    pub min_inliers: usize,
    /// Sampson threshold in pixels.
    pub inlier_threshold_px: f64,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self { lambda: 0.8, max_depth: 5, min_inliers: 20, inlier_threshold_px: 2.0 }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.max_depth == 0 || self.min_inliers == 0 {
            return Err("max_depth and min_inliers must be positive".into());
        }
        if self.inlier_threshold_px.is_nan() || self.inlier_threshold_px <= 0.0 {
            return Err(format!("inlier threshold {} must be positive", self.inlier_threshold_px));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Traversal {
    /// Best-first on the walk score.
    #[default]
    AStar,
    /// Walks in order of discovery, shortest first.
    BreadthFirst,
}

/// Walk score combining the weakest edge and the vertex most similar to the
/// destination.
pub fn walk_heuristic(graph: &PoseGraph, walk: &Walk, sim: &SimilarityMatrix, lambda: f64) -> f64 {
    let d = walk.destination;
    let mut min_quality = 1.0_f64;
    let mut max_similarity = f64::NEG_INFINITY;
    for step in &walk.steps {
        let (from, _) = graph.step_endpoints(*step);
        min_quality = min_quality.min(graph.step_quality(*step));
        max_similarity = max_similarity.max(sim.get(from.index(), d.index()));
    }
    score(lambda, min_quality, max_similarity)
}

#[inline]
fn score(lambda: f64, min_quality: f64, max_similarity: f64) -> f64 {
    lambda * min_quality + (1.0 - lambda) * max_similarity
}

#[derive(Debug, Clone)]
struct Node {
    vertices: Vec<ViewId>,
    steps: Vec<Step>,
    min_quality: f64,
    /// Max similarity to the destination over all vertices except the destination.
    max_similarity: f64,
    complete: bool,
    priority: f64,
    seq: u64,
}

impl Node {
    fn min_completion_len(&self) -> usize {
        if self.complete {
            self.steps.len()
        } else {
            self.steps.len() + 1
        }
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Greater means popped first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.min_completion_len().cmp(&self.min_completion_len()))
            .then_with(|| other.vertices.cmp(&self.vertices))
            .then_with(|| other.complete.cmp(&self.complete))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Frontier {
    Best(BinaryHeap<Node>),
    Fifo(VecDeque<Node>),
}

/// Resumable walk enumerator between two views.
pub struct WalkSearch<'a> {
    graph: &'a PoseGraph,
    sim: &'a SimilarityMatrix,
    destination: ViewId,
    cfg: TraversalConfig,
    frontier: Frontier,
    /// Hop distance of each view to the destination (`u32::MAX` beyond `max_depth`).
    dist_to_destination: Vec<u32>,
    /// `max_similarity_within[r]`: best similarity to the destination among
    /// views at most `r` hops from it, excluding the destination itself.
    max_similarity_within: Vec<f64>,
    nodes_visited: usize,
    seq: u64,
    last_score: Option<f64>,
}

impl<'a> WalkSearch<'a> {
    pub fn new(
        graph: &'a PoseGraph,
        sim: &'a SimilarityMatrix,
        source: ViewId,
        destination: ViewId,
        cfg: &TraversalConfig,
        traversal: Traversal,
    ) -> Result<Self, PoseGraphError> {
        if !graph.visible(source, destination) {
            return Err(PoseGraphError::NotVisible(source, destination));
        }
        let (dist_to_destination, max_similarity_within) = distance_table(graph, sim, destination, cfg.max_depth);
        let mut search = Self {
            graph,
            sim,
            destination,
            cfg: *cfg,
            frontier: match traversal {
                Traversal::AStar => Frontier::Best(BinaryHeap::new()),
                Traversal::BreadthFirst => Frontier::Fifo(VecDeque::new()),
            },
            dist_to_destination,
            max_similarity_within,
            nodes_visited: 0,
            seq: 0,
            last_score: None,
        };
        if source != destination && search.reachable(source, 0, traversal) {
            let root = Node {
                vertices: vec![source],
                steps: Vec::new(),
                min_quality: 1.0,
                max_similarity: sim.get(source.index(), destination.index()),
                complete: false,
                priority: 0.0,
                seq: 0,
            };
            search.push(root);
        }
        Ok(search)
    }

    /// Partial walks expanded so far.
    pub fn nodes_visited(&self) -> usize {
        self.nodes_visited
    }

    /// Score of the walk most recently returned.
    pub fn last_score(&self) -> Option<f64> {
        self.last_score
    }

    fn reachable(&self, v: ViewId, len: usize, traversal: Traversal) -> bool {
        match traversal {
            Traversal::AStar => {
                let d = self.dist_to_destination[v.index()];
                d != u32::MAX && len + d as usize <= self.cfg.max_depth
            }
            Traversal::BreadthFirst => len < self.cfg.max_depth,
        }
    }

    fn push(&mut self, mut node: Node) {
        node.seq = self.seq;
        self.seq += 1;
        node.priority = if node.complete {
            score(self.cfg.lambda, node.min_quality, node.max_similarity)
        } else {
            let remaining = self.cfg.max_depth - node.steps.len();
            let beyond = self.max_similarity_within[remaining - 1];
            score(self.cfg.lambda, node.min_quality, node.max_similarity.max(beyond))
        };
        match &mut self.frontier {
            Frontier::Best(heap) => heap.push(node),
            Frontier::Fifo(queue) => queue.push_back(node),
        }
    }

    fn pop(&mut self) -> Option<Node> {
        match &mut self.frontier {
            Frontier::Best(heap) => heap.pop(),
            Frontier::Fifo(queue) => queue.pop_front(),
        }
    }

    /// Next walk in priority order, or `None` once the frontier is exhausted.
    pub fn next_walk(&mut self) -> Option<Walk> {
        let traversal = match self.frontier {
            Frontier::Best(_) => Traversal::AStar,
            Frontier::Fifo(_) => Traversal::BreadthFirst,
        };
        while let Some(node) = self.pop() {
            if node.complete {
                self.last_score = Some(node.priority);
                return Some(Walk {
                    source: node.vertices[0],
                    destination: self.destination,
                    steps: node.steps,
                });
            }
            self.nodes_visited += 1;
            let at = *node.vertices.last().expect("non-empty walk");
            let len = node.steps.len() + 1;
            for &step in self.graph.steps_from(at) {
                let (_, to) = self.graph.step_endpoints(step);
                if node.vertices.contains(&to) {
                    continue;
                }
                let complete = to == self.destination;
                if !complete && !self.reachable(to, len, traversal) {
                    continue;
                }
                if !complete && traversal == Traversal::BreadthFirst && len >= self.cfg.max_depth {
                    continue;
                }
                let mut vertices = node.vertices.clone();
                vertices.push(to);
                let mut steps = node.steps.clone();
                steps.push(step);
                let max_similarity = if complete {
                    node.max_similarity
                } else {
                    node.max_similarity.max(self.sim.get(to.index(), self.destination.index()))
                };
                self.push(Node {
                    vertices,
                    steps,
                    min_quality: node.min_quality.min(self.graph.step_quality(step)),
                    max_similarity,
                    complete,
                    priority: 0.0,
                    seq: 0,
                });
            }
        }
        None
    }
}

impl Iterator for WalkSearch<'_> {
    type Item = Walk;

    fn next(&mut self) -> Option<Walk> {
        self.next_walk()
    }
}

fn distance_table(
    graph: &PoseGraph,
    sim: &SimilarityMatrix,
    destination: ViewId,
    max_depth: usize,
) -> (Vec<u32>, Vec<f64>) {
    let mut dist = vec![u32::MAX; graph.view_count()];
    let mut best = vec![f64::NEG_INFINITY; max_depth + 1];
    dist[destination.index()] = 0;
    let mut queue = VecDeque::from([destination]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v.index()];
        if dv as usize >= max_depth {
            continue;
        }
        for step in graph.steps_from(v) {
            let (_, to) = graph.step_endpoints(*step);
            if dist[to.index()] == u32::MAX {
                dist[to.index()] = dv + 1;
                let s = sim.get(to.index(), destination.index());
                let slot = &mut best[dv as usize + 1];
                *slot = slot.max(s);
                queue.push_back(to);
            }
        }
    }
    for r in 1..best.len() {
        best[r] = best[r].max(best[r - 1]);
    }
    (dist, best)
}
