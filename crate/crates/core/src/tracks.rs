//! Multi-view point tracks grown from accepted pairwise matches.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::posegraph::ViewId;
use crate::unionfind::UnionFind;

/// An observation: keypoint `kp` of view `view`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    pub view: ViewId,
    pub kp: u32,
}

/// Union-find over observations, with per-track observation lists kept at
/// the root. A track never holds two keypoints of the same view: a merge that
/// would do so is refused and both tracks are flagged.
#[derive(Debug, Clone, Default)]
pub struct TrackStore {
    sets: UnionFind,
    observations: Vec<Observation>,
    index: HashMap<Observation, usize>,
    /// Keyed by root: `view -> keypoint` for the track.
    members: HashMap<usize, BTreeMap<ViewId, u32>>,
    flagged: Vec<bool>,
    conflicts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MergeStats {
    pub merged: usize,
    pub already_joined: usize,
    pub conflicts: usize,
}

impl TrackStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observation_count(&self) -> usize {
        self.observations.len()
    }

    pub fn track_count(&self) -> usize {
        self.members.len()
    }

    pub fn conflict_count(&self) -> usize {
        self.conflicts
    }

    fn node(&mut self, obs: Observation) -> usize {
        if let Some(&n) = self.index.get(&obs) {
            return n;
        }
        let n = self.sets.push();
        self.observations.push(obs);
        self.flagged.push(false);
        self.index.insert(obs, n);
        self.members.insert(n, BTreeMap::from([(obs.view, obs.kp)]));
        n
    }

    /// Joins the tracks of each `(kp_i, kp_j)` pair of matched keypoints.
    pub fn merge_inliers(&mut self, view_i: ViewId, view_j: ViewId, inliers: &[(u32, u32)]) -> MergeStats {
        let mut stats = MergeStats::default();
        for &(a, b) in inliers {
            let na = self.node(Observation { view: view_i, kp: a });
            let nb = self.node(Observation { view: view_j, kp: b });
            let (ra, rb) = (self.sets.find(na), self.sets.find(nb));
            if ra == rb {
                stats.already_joined += 1;
                continue;
            }
            let clash = {
                let (ma, mb) = (&self.members[&ra], &self.members[&rb]);
                let (small, large) = if ma.len() <= mb.len() { (ma, mb) } else { (mb, ma) };
                small.iter().any(|(v, kp)| large.get(v).is_some_and(|other| other != kp))
            };
            if clash {
                self.flagged[ra] = true;
                self.flagged[rb] = true;
                self.conflicts += 1;
                stats.conflicts += 1;
                continue;
            }
            let root = self.sets.union(ra, rb).expect("distinct roots");
            let other = if root == ra { rb } else { ra };
            let moved = self.members.remove(&other).expect("root has members");
            self.members.get_mut(&root).expect("root has members").extend(moved);
            self.flagged[root] = self.flagged[ra] || self.flagged[rb];
            stats.merged += 1;
        }
        stats
    }

    fn track_of(&self, obs: Observation) -> Option<usize> {
        self.index.get(&obs).map(|&n| self.sets.find_immutable(n))
    }

    pub fn is_flagged(&self, view: ViewId, kp: u32) -> bool {
        self.track_of(Observation { view, kp }).is_some_and(|r| self.flagged[r])
    }

    /// Keypoint pairs `(kp_s, kp_d)` from unflagged tracks seen in both views,
    /// ordered by the keypoint in `s`.
    pub fn shared_correspondences(&self, s: ViewId, d: ViewId) -> Vec<(u32, u32)> {
        if s == d {
            return Vec::new();
        }
        let mut out: Vec<(u32, u32)> = self
            .members
            .iter()
            .filter(|(root, _)| !self.flagged[**root])
            .filter_map(|(_, m)| Some((*m.get(&s)?, *m.get(&d)?)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Tracks as observation lists sorted by view, ordered by their first observation.
    pub fn tracks(&self) -> Vec<Vec<Observation>> {
        let mut out: Vec<Vec<Observation>> = self
            .members
            .values()
            .map(|m| m.iter().map(|(&view, &kp)| Observation { view, kp }).collect())
            .collect();
        out.sort();
        out
    }

    /// Checks the partition and one-keypoint-per-view invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = 0;
        for (&root, m) in &self.members {
            if self.sets.find_immutable(root) != root {
                return Err(format!("member list stored at non-root {root}"));
            }
            for (&view, &kp) in m {
                let obs = Observation { view, kp };
                match self.track_of(obs) {
                    Some(r) if r == root => seen += 1,
                    _ => return Err(format!("observation {obs:?} listed under the wrong track")),
                }
            }
        }
        if seen != self.observations.len() {
            return Err(format!("{seen} listed observations, {} stored", self.observations.len()));
        }
        Ok(())
    }

    /// `TRACK id (view,kp) (view,kp) ...`, one line per track.
    pub fn write_tracks<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, track) in self.tracks().iter().enumerate() {
            write!(out, "TRACK {id}")?;
            for o in track {
                write!(out, " ({},{})", o.view, o.kp)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: ViewId = ViewId(0);
    const B: ViewId = ViewId(1);
    const C: ViewId = ViewId(2);

    #[test]
    fn two_view_tracks() {
        let mut t = TrackStore::new();
        let inliers: Vec<(u32, u32)> = (0..50).map(|i| (i, i + 100)).collect();
        t.merge_inliers(A, B, &inliers);
        assert_eq!(t.track_count(), 50);
        assert!(t.tracks().iter().all(|tr| tr.len() == 2));
        assert_eq!(t.shared_correspondences(A, B), inliers);
    }

    #[test]
    fn chain_forms_three_view_tracks() {
        let mut t = TrackStore::new();
        t.merge_inliers(A, B, &[(1, 10), (2, 20), (3, 30)]);
        t.merge_inliers(B, C, &[(10, 7), (20, 8), (40, 9)]);
        assert_eq!(t.shared_correspondences(A, C), vec![(1, 7), (2, 8)]);
        assert_eq!(t.shared_correspondences(C, A), vec![(7, 1), (8, 2)]);
        assert!(t.shared_correspondences(A, A).is_empty());
        assert!(t.tracks().iter().filter(|tr| tr.len() == 3).count() == 2);
        t.check_invariants().unwrap();
    }

    #[test]
    fn conflicting_merge_is_refused_and_flagged() {
        let mut t = TrackStore::new();
        t.merge_inliers(A, B, &[(1, 10)]);
        t.merge_inliers(B, C, &[(10, 5)]);
        // Would put A:1 and A:2 in one track.
        t.merge_inliers(A, C, &[(2, 6)]);
        let stats = t.merge_inliers(C, A, &[(5, 2)]);
        assert_eq!(stats.conflicts, 1);
        assert!(t.is_flagged(A, 1));
        assert!(t.is_flagged(A, 2));
        assert!(t.shared_correspondences(A, B).is_empty());
        assert!(t.shared_correspondences(A, C).is_empty());
        t.check_invariants().unwrap();
    }

    #[test]
    fn empty_for_disjoint_views() {
        let mut t = TrackStore::new();
        t.merge_inliers(A, B, &[(1, 2)]);
        assert!(t.shared_correspondences(A, C).is_empty());
    }

    proptest! {
        #[test]
        fn invariants_under_random_merges(
            ops in proptest::collection::vec((0u32..5, 0u32..5, proptest::collection::vec((0u32..6, 0u32..6), 1..8)), 1..20)
        ) {
            let mut t = TrackStore::new();
            let mut prev_tracks = 0usize;
            let mut prev_obs = 0usize;
            for (i, j, pairs) in ops {
                if i == j {
                    continue;
                }
                let new_obs: std::collections::HashSet<_> = pairs
                    .iter()
                    .flat_map(|&(a, b)| [Observation { view: ViewId(i), kp: a }, Observation { view: ViewId(j), kp: b }])
                    .filter(|o| !t.index.contains_key(o))
                    .collect();
                t.merge_inliers(ViewId(i), ViewId(j), &pairs);
                prop_assert!(t.check_invariants().is_ok());
                prop_assert_eq!(t.observation_count(), prev_obs + new_obs.len());
                prop_assert!(t.track_count() <= prev_tracks + new_obs.len());
                for tr in t.tracks() {
                    let mut views: Vec<_> = tr.iter().map(|o| o.view).collect();
                    views.dedup();
                    prop_assert_eq!(views.len(), tr.len());
                }
                for s in 0..5 {
                    for d in 0..5 {
                        let fwd = t.shared_correspondences(ViewId(s), ViewId(d));
                        let mut back: Vec<_> = t.shared_correspondences(ViewId(d), ViewId(s)).into_iter().map(|(a, b)| (b, a)).collect();
                        back.sort_unstable();
                        prop_assert_eq!(fwd, back);
                    }
                }
                prev_tracks = t.track_count();
                prev_obs = t.observation_count();
            }
        }
    }
}
