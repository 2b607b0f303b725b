//! Unit-disk neighbour graph and idealized source routing.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use super::mobility::Vec2;
use crate::messages::NodeId;

/// Symmetric neighbour lists, index `i` holding node `i + 1`, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Topology {
    adj: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinkDiff {
    /// Pairs `(a, b)` with `a < b`, ascending.
    pub up: Vec<(NodeId, NodeId)>,
    pub down: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no route from {src} to {dst}")]
pub struct NoRoute {
    pub src: NodeId,
    pub dst: NodeId,
}

fn idx(n: NodeId) -> usize {
    n.0 as usize - 1
}

impl Topology {
    pub fn from_positions(pos: &[Vec2], range: f64) -> Self {
        let n = pos.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if pos[i].dist(pos[j]) <= range {
                    adj[i].push(NodeId(j as u32 + 1));
                    adj[j].push(NodeId(i as u32 + 1));
                }
            }
        }
        for l in &mut adj {
            l.sort();
        }
        Topology { adj }
    }

    pub fn from_edges(n: u32, edges: &[(u32, u32)]) -> Self {
        let mut adj = vec![Vec::new(); n as usize];
        for &(a, b) in edges {
            adj[a as usize - 1].push(NodeId(b));
            adj[b as usize - 1].push(NodeId(a));
        }
        for l in &mut adj {
            l.sort();
            l.dedup();
        }
        Topology { adj }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, n: NodeId) -> &[NodeId] {
        &self.adj[idx(n)]
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        self.adj[idx(a)].binary_search(&b).is_ok()
    }

    pub fn links(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (i, l) in self.adj.iter().enumerate() {
            let a = NodeId(i as u32 + 1);
            out.extend(l.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    /// Links gained and lost going from `self` to `next`.
    pub fn diff(&self, next: &Topology) -> LinkDiff {
        let mut d = LinkDiff::default();
        for i in 0..self.adj.len() {
            let a = NodeId(i as u32 + 1);
            let (old, new) = (&self.adj[i], &next.adj[i]);
            let (mut p, mut q) = (0, 0);
            while p < old.len() || q < new.len() {
                match (old.get(p), new.get(q)) {
                    (Some(x), Some(y)) if x == y => {
                        p += 1;
                        q += 1;
                    }
                    (Some(x), y) if y.is_none_or(|y| x < y) => {
                        if *x > a {
                            d.down.push((a, *x));
                        }
                        p += 1;
                    }
                    (_, Some(y)) => {
                        if *y > a {
                            d.up.push((a, *y));
                        }
                        q += 1;
                    }
                    _ => unreachable!(),
                }
            }
        }
        d
    }

    /// Hop distances from `from`, skipping nodes in `excluded` as relays.
    /// Unreachable nodes get `u32::MAX`.
    pub fn hops_from(&self, from: NodeId, excluded: &BTreeSet<NodeId>) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.adj.len()];
        let mut q = VecDeque::new();
        dist[idx(from)] = 0;
        q.push_back(from);
        while let Some(u) = q.pop_front() {
            let du = dist[idx(u)];
            if u != from && excluded.contains(&u) {
                continue;
            }
            for &v in &self.adj[idx(u)] {
                if dist[idx(v)] == u32::MAX {
                    dist[idx(v)] = du + 1;
                    q.push_back(v);
                }
            }
        }
        dist
    }

    /// Shortest hop path avoiding `isolated`, lexicographically smallest
    /// among equals.
    pub fn compute_route(
        &self,
        src: NodeId,
        dst: NodeId,
        isolated: &BTreeSet<NodeId>,
    ) -> Result<Vec<NodeId>, NoRoute> {
        let nr = NoRoute { src, dst };
        if isolated.contains(&dst) || isolated.contains(&src) {
            return Err(nr);
        }
        // Distances to dst over non-isolated nodes.
        let mut dist = vec![u32::MAX; self.adj.len()];
        let mut q = VecDeque::new();
        dist[idx(dst)] = 0;
        q.push_back(dst);
        while let Some(u) = q.pop_front() {
            for &v in &self.adj[idx(u)] {
                if dist[idx(v)] == u32::MAX && !isolated.contains(&v) {
                    dist[idx(v)] = dist[idx(u)] + 1;
                    q.push_back(v);
                }
            }
        }
        if dist[idx(src)] == u32::MAX {
            return Err(nr);
        }
        let mut path = vec![src];
        let mut at = src;
        while at != dst {
            let want = dist[idx(at)] - 1;
            at = *self.adj[idx(at)]
                .iter()
                .find(|&&v| dist[idx(v)] == want)
                .expect("BFS layer has a predecessor");
            path.push(at);
        }
        Ok(path)
    }

    /// True when every consecutive pair is linked and no hop is isolated.
    pub fn route_valid(&self, route: &[NodeId], isolated: &BTreeSet<NodeId>) -> bool {
        route.windows(2).all(|w| self.are_neighbors(w[0], w[1]))
            && route.iter().all(|n| !isolated.contains(n))
    }

    /// Largest finite hop distance between any two nodes.
    pub fn diameter(&self) -> u32 {
        let none = BTreeSet::new();
        (1..=self.adj.len() as u32)
            .flat_map(|i| self.hops_from(NodeId(i), &none))
            .filter(|&d| d != u32::MAX)
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn adjacent_route() {
        let t = Topology::from_edges(3, &[(1, 2), (2, 3)]);
        assert_eq!(
            t.compute_route(NodeId(1), NodeId(2), &BTreeSet::new())
                .unwrap(),
            ids(&[1, 2])
        );
    }

    #[test]
    fn tie_breaks_lexicographically_and_avoids_isolated() {
        // 1 -> {3, 2} -> 4
        let t = Topology::from_edges(4, &[(1, 3), (1, 2), (2, 4), (3, 4)]);
        let none = BTreeSet::new();
        assert_eq!(
            t.compute_route(NodeId(1), NodeId(4), &none).unwrap(),
            ids(&[1, 2, 4])
        );
        let iso: BTreeSet<_> = [NodeId(2)].into();
        assert_eq!(
            t.compute_route(NodeId(1), NodeId(4), &iso).unwrap(),
            ids(&[1, 3, 4])
        );
        let iso: BTreeSet<_> = [NodeId(2), NodeId(3)].into();
        assert!(t.compute_route(NodeId(1), NodeId(4), &iso).is_err());
    }

    #[test]
    fn unit_disk_symmetry() {
        let pos = [
            Vec2 { x: 0.0, y: 0.0 },
            Vec2 { x: 30.0, y: 0.0 },
            Vec2 { x: 61.0, y: 0.0 },
        ];
        let t = Topology::from_positions(&pos, 30.0);
        assert_eq!(t.neighbors(NodeId(1)), &ids(&[2])[..]);
        assert_eq!(t.neighbors(NodeId(2)), &ids(&[1])[..]);
        assert!(t.neighbors(NodeId(3)).is_empty());
    }

    #[test]
    fn diff_reports_changes() {
        let a = Topology::from_edges(3, &[(1, 2)]);
        let b = Topology::from_edges(3, &[(2, 3)]);
        let d = a.diff(&b);
        assert_eq!(d.up, vec![(NodeId(2), NodeId(3))]);
        assert_eq!(d.down, vec![(NodeId(1), NodeId(2))]);
        assert_eq!(a.diff(&a), LinkDiff::default());
    }

    /// All simple paths by brute force; the expected route is the
    /// lexicographic minimum among the shortest.
    fn brute_route(t: &Topology, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        fn walk(t: &Topology, path: &mut Vec<NodeId>, dst: NodeId, best: &mut Option<Vec<NodeId>>) {
            let at = *path.last().unwrap();
            if at == dst {
                let better = match best {
                    None => true,
                    Some(b) => (path.len(), &path[..]) < (b.len(), &b[..]),
                };
                if better {
                    *best = Some(path.clone());
                }
                return;
            }
            for &v in t.neighbors(at) {
                if !path.contains(&v) {
                    path.push(v);
                    walk(t, path, dst, best);
                    path.pop();
                }
            }
        }
        let mut best = None;
        walk(t, &mut vec![src], dst, &mut best);
        best
    }

    proptest! {
        #[test]
        fn route_matches_brute_force(
            n in 2u32..=8,
            edges in prop::collection::vec((1u32..=8, 1u32..=8), 0..20),
        ) {
            let edges: Vec<_> = edges.into_iter().filter(|&(a, b)| a != b && a <= n && b <= n).collect();
            let t = Topology::from_edges(n, &edges);
            for s in 1..=n {
                for d in 1..=n {
                    if s == d { continue; }
                    let got = t.compute_route(NodeId(s), NodeId(d), &BTreeSet::new()).ok();
                    prop_assert_eq!(got, brute_route(&t, NodeId(s), NodeId(d)));
                }
            }
        }

        #[test]
        fn neighbor_relation_symmetric(pts in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..20)) {
            let pos: Vec<_> = pts.iter().map(|&(x, y)| Vec2 { x, y }).collect();
            let t = Topology::from_positions(&pos, 30.0);
            for i in 0..pos.len() {
                for j in 0..pos.len() {
                    if i == j { continue; }
                    let (a, b) = (NodeId(i as u32 + 1), NodeId(j as u32 + 1));
                    prop_assert_eq!(t.are_neighbors(a, b), t.are_neighbors(b, a));
                    prop_assert_eq!(t.are_neighbors(a, b), pos[i].dist(pos[j]) <= 30.0);
                }
            }
        }
    }
}
