use std::collections::VecDeque;

use proptest::prelude::*;

use posegraph_core::geom::{rotation_error_deg, translation_angle_error_deg, RelativePose, Rotation, Vec3};
use posegraph_core::posegraph::{
    read_posegraph, walk_heuristic, walk_pose, write_posegraph, Edge, PoseGraph, Step, Traversal, TraversalConfig,
    ViewId, Walk, WalkSearch,
};
use posegraph_core::similarity::SimilarityMatrix;

fn pose_from(seed: &[f64; 6]) -> RelativePose {
    let axis = Vec3::new(seed[0], seed[1], seed[2]);
    let t = Vec3::new(seed[3], seed[4], seed[5] + 2.0);
    RelativePose::new(Rotation::new(axis), t)
}

type EdgeSpec = (u32, u32, [f64; 6], u8);

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<EdgeSpec>, Vec<u8>)> {
    (3usize..9).prop_flat_map(|n| {
        let edge = (0..n as u32, 0..n as u32, prop::array::uniform6(-1.0f64..1.0), 0u8..=10);
        (Just(n), prop::collection::vec(edge, 0..20), prop::collection::vec(0u8..=10, n * n))
    })
}

fn build(n: usize, edges: &[EdgeSpec], sims: &[u8]) -> (PoseGraph, SimilarityMatrix) {
    let mut g = PoseGraph::new(n);
    for (a, b, p, q) in edges {
        let _ = g.add_edge(Edge { source: ViewId(*a), destination: ViewId(*b), pose: pose_from(p), quality: f64::from(*q) / 10.0 });
    }
    let mut sim = SimilarityMatrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            sim.set(i, j, f64::from(sims[i * n + j]) / 10.0);
        }
    }
    (g, sim)
}

fn bfs_reachable(g: &PoseGraph, s: ViewId, d: ViewId) -> bool {
    let mut seen = vec![false; g.view_count()];
    let mut queue = VecDeque::from([s]);
    seen[s.index()] = true;
    while let Some(v) = queue.pop_front() {
        if v == d {
            return true;
        }
        for step in g.steps_from(v) {
            let (_, to) = g.step_endpoints(*step);
            if !seen[to.index()] {
                seen[to.index()] = true;
                queue.push_back(to);
            }
        }
    }
    false
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn visibility_agrees_with_bfs((n, edges, sims) in graph_strategy()) {
        let (g, _) = build(n, &edges, &sims);
        for s in 0..n as u32 {
            for d in 0..n as u32 {
                prop_assert_eq!(g.visible(ViewId(s), ViewId(d)), bfs_reachable(&g, ViewId(s), ViewId(d)));
            }
        }
    }

    #[test]
    fn astar_scores_never_increase((n, edges, sims) in graph_strategy(), lambda in 0.0f64..=1.0, depth in 1usize..5) {
        let (g, sim) = build(n, &edges, &sims);
        let cfg = TraversalConfig { lambda, max_depth: depth, ..TraversalConfig::default() };
        for d in 1..n as u32 {
            let Ok(mut search) = WalkSearch::new(&g, &sim, ViewId(0), ViewId(d), &cfg, Traversal::AStar) else { continue };
            let mut last = f64::INFINITY;
            while let Some(w) = search.next_walk() {
                let h = walk_heuristic(&g, &w, &sim, lambda);
                prop_assert!(h <= last + 1e-12);
                prop_assert_eq!(Some(h), search.last_score());
                prop_assert!(w.len() <= depth);
                let vs = w.vertices(&g);
                let mut sorted = vs.clone();
                sorted.sort();
                sorted.dedup();
                prop_assert_eq!(sorted.len(), vs.len());
                last = h;
            }
        }
    }

    #[test]
    fn astar_and_bfs_yield_the_same_walks((n, edges, sims) in graph_strategy(), depth in 1usize..5) {
        let (g, sim) = build(n, &edges, &sims);
        let cfg = TraversalConfig { max_depth: depth, ..TraversalConfig::default() };
        for d in 1..n as u32 {
            let collect = |t: Traversal| -> Vec<Vec<ViewId>> {
                let Ok(mut s) = WalkSearch::new(&g, &sim, ViewId(0), ViewId(d), &cfg, t) else { return Vec::new() };
                let mut out = Vec::new();
                while let Some(w) = s.next_walk() {
                    out.push(w.vertices(&g));
                }
                out.sort();
                out
            };
            prop_assert_eq!(collect(Traversal::AStar), collect(Traversal::BreadthFirst));
        }
    }

    #[test]
    fn reversed_walk_gives_inverse_pose((n, edges, sims) in graph_strategy()) {
        let (g, _) = build(n, &edges, &sims);
        for (k, e) in g.edges().iter().enumerate() {
            let Some(step) = g.steps_from(e.destination).iter().find(|s| s.edge.0 != k).copied() else { continue };
            let forward = Walk::new(&g, e.source, vec![Step { edge: posegraph_core::posegraph::EdgeId(k), inverted: false }, step]).unwrap();
            if forward.destination == e.source {
                continue;
            }
            let back = Walk::new(
                &g,
                forward.destination,
                vec![Step { edge: step.edge, inverted: !step.inverted }, Step { edge: posegraph_core::posegraph::EdgeId(k), inverted: true }],
            )
            .unwrap();
            let (Ok(p), Ok(q)) = (walk_pose(&g, &forward), walk_pose(&g, &back)) else { continue };
            let inv = p.inverse();
            prop_assert!(rotation_error_deg(inv.rotation(), q.rotation()) < 1e-9);
            prop_assert!(translation_angle_error_deg(inv.translation(), q.translation()) < 1e-7);
        }
    }

    #[test]
    fn text_format_round_trip((n, edges, sims) in graph_strategy()) {
        let (g, _) = build(n, &edges, &sims);
        let mut buf = Vec::new();
        write_posegraph(&g, &mut buf).unwrap();
        let back = read_posegraph(buf.as_slice()).unwrap();
        prop_assert_eq!(back.view_count(), g.view_count());
        prop_assert_eq!(back.edge_count(), g.edge_count());
        for (a, b) in g.edges().iter().zip(back.edges()) {
            prop_assert_eq!((a.source, a.destination, a.quality), (b.source, b.destination, b.quality));
            prop_assert!(rotation_error_deg(a.pose.rotation(), b.pose.rotation()) < 1e-9);
            prop_assert!((a.pose.translation() - b.pose.translation()).norm() < 1e-12);
        }
    }
}
