//! Connected components via union-find.

use thiserror::Error;

use crate::sampler::SpatialGraph;

#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    #[inline]
    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// Returns false when already joined.
    #[inline]
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a as usize] < self.size[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        self.size[a as usize] += self.size[b as usize];
        true
    }

    pub fn component_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }

    /// Sizes of all components, descending.
    pub fn sizes_desc(&mut self) -> Vec<u32> {
        let mut s: Vec<u32> =
            (0..self.len() as u32).filter(|&i| self.parent[i as usize] == i).map(|i| self.size[i as usize]).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterStats {
    pub sizes_desc: Vec<u32>,
    pub largest: u32,
    /// 0 when there are fewer than two components.
    pub second_largest: u32,
    /// 0 without a palm vertex.
    pub origin_cluster: u32,
    pub num_components: usize,
}

impl ClusterStats {
    pub fn from_union_find(uf: &mut UnionFind, origin: Option<usize>) -> Self {
        let sizes_desc = uf.sizes_desc();
        ClusterStats {
            largest: sizes_desc.first().copied().unwrap_or(0),
            second_largest: sizes_desc.get(1).copied().unwrap_or(0),
            origin_cluster: origin.map(|o| uf.component_size(o as u32)).unwrap_or(0),
            num_components: sizes_desc.len(),
            sizes_desc,
        }
    }
}

pub fn cluster_stats(graph: &SpatialGraph) -> ClusterStats {
    let mut uf = UnionFind::new(graph.num_vertices());
    for &(u, v) in &graph.edges {
        uf.union(u, v);
    }
    ClusterStats::from_union_find(&mut uf, graph.palm_origin)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComponentError {
    #[error("graph has no palm vertex")]
    NoPalm,
}

/// True iff the origin's component is strictly smaller than the largest one.
pub fn origin_not_in_giant(graph: &SpatialGraph) -> Result<bool, ComponentError> {
    let s = cluster_stats(graph);
    if graph.palm_origin.is_none() {
        return Err(ComponentError::NoPalm);
    }
    Ok(s.origin_cluster < s.largest)
}

/// Component sizes by breadth-first search, descending. Independent oracle.
pub fn bfs_sizes(n: usize, edges: &[(u32, u32)]) -> Vec<u32> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        queue.push_back(s);
        let mut c = 0;
        while let Some(x) = queue.pop_front() {
            c += 1;
            for &y in &adj[x] {
                if !seen[y as usize] {
                    seen[y as usize] = true;
                    queue.push_back(y as usize);
                }
            }
        }
        out.push(c);
    }
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MarkedVertex, ModelParams};
    use proptest::prelude::*;

    fn graph(n: usize, edges: Vec<(u32, u32)>, palm: Option<usize>) -> SpatialGraph {
        SpatialGraph {
            volume_n: n as f64,
            vertices: (0..n).map(|i| MarkedVertex::new(&[i as f64], 1.0)).collect(),
            edges,
            seed: 0,
            params: ModelParams::reference(),
            palm_origin: palm,
        }
    }

    #[test]
    fn examples() {
        let s = cluster_stats(&graph(5, vec![], None));
        assert_eq!(s.sizes_desc, vec![1; 5]);
        assert_eq!(s.second_largest, 1);
        let p = cluster_stats(&graph(4, vec![(0, 1), (1, 2), (2, 3)], None));
        assert_eq!((p.sizes_desc.clone(), p.second_largest), (vec![4], 0));
    }

    #[test]
    fn origin_convention() {
        let g = graph(5, vec![(1, 2), (2, 3)], Some(0));
        assert_eq!(origin_not_in_giant(&g), Ok(true));
        let g = graph(5, vec![(0, 1), (1, 2)], Some(0));
        assert_eq!(origin_not_in_giant(&g), Ok(false));
        let g = graph(4, vec![(0, 1), (2, 3)], Some(0));
        assert_eq!(origin_not_in_giant(&g), Ok(false));
        assert_eq!(origin_not_in_giant(&graph(3, vec![], None)), Err(ComponentError::NoPalm));
    }

    #[test]
    fn merging_two_largest_does_not_increase_second() {
        let mut edges = vec![(0, 1), (1, 2), (3, 4), (5, 6)];
        let before = cluster_stats(&graph(8, edges.clone(), None)).second_largest;
        edges.push((2, 3));
        let after = cluster_stats(&graph(8, edges, None)).second_largest;
        assert!(after <= before);
    }

    proptest! {
        #[test]
        fn matches_bfs(n in 1usize..200, raw in proptest::collection::vec((0u32..200, 0u32..200), 0..400)) {
            let edges: Vec<(u32, u32)> = raw.into_iter()
                .map(|(a, b)| (a % n as u32, b % n as u32))
                .filter(|(a, b)| a != b)
                .collect();
            let s = cluster_stats(&graph(n, edges.clone(), None));
            prop_assert_eq!(s.sizes_desc.iter().map(|&x| x as u64).sum::<u64>(), n as u64);
            prop_assert_eq!(s.sizes_desc, bfs_sizes(n, &edges));
        }
    }
}
