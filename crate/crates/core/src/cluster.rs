//! Affinity-driven graph contraction.
//!
//! Starting from the mesh graph (one node per vertex), every round
//!
//! 1. scores each edge with the node affinity: per scale, the mean fused score
//!    over all 6-adjacent voxel pairs the two nodes occupy, then the mean over
//!    scales that produced at least one pair,
//! 2. maps each node to its highest-affinity neighbor when that affinity is
//!    strictly above 0.5 (ties to the smaller node id), otherwise to itself,
//! 3. contracts the weakly connected components of the mapping into single
//!    nodes and projects the edges onto them,
//!
//! until every node maps to itself.
//!
//! Node ids are the minimum member point index. Affinities are summed in an
//! order fixed by node contents and components come out of a union-find whose
//! roots are component minima, so the resulting partition depends neither on
//! thread count nor on the order nodes are listed in.

use std::time::Duration;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use web_time::Instant;

use crate::affinity::AffinityField;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::union_find::ConcurrentDisjointSet;
use crate::voxel::{for_each_neighbor_pair, OccupancyCounts, SparseVoxelGrid};

/// Nodes map to a neighbor only when their best affinity exceeds this.
pub const MERGE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterNode {
    /// Minimum member index.
    pub id: u32,
    /// Sorted point indices.
    pub members: Vec<u32>,
    pub occupancy: OccupancyCounts,
}

impl ClusterNode {
    pub fn singleton(point: u32, grid: &SparseVoxelGrid) -> Self {
        Self {
            id: point,
            members: vec![point],
            occupancy: OccupancyCounts::of_point(point, grid),
        }
    }

    pub fn from_members(mut members: Vec<u32>, grid: &SparseVoxelGrid) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        let id = *members
            .first()
            .ok_or_else(|| Error::Validation("cluster node without members".into()))?;
        let occupancy = OccupancyCounts::of_points(&members, grid);
        Ok(Self {
            id,
            members,
            occupancy,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterGraph {
    pub nodes: Vec<ClusterNode>,
    /// Unordered node-id pairs, stored `(smaller, larger)`, sorted and unique.
    pub edges: Vec<(u32, u32)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationStats {
    pub iteration: usize,
    pub nodes: usize,
    pub edges: usize,
    /// Nodes removed by this round's contraction.
    pub merges: usize,
    pub elapsed: Duration,
}

impl std::fmt::Display for IterationStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "iteration {}: nodes={} edges={} merges={} ({:.3}s)",
            self.iteration,
            self.nodes,
            self.edges,
            self.merges,
            self.elapsed.as_secs_f64()
        )
    }
}

impl ClusterGraph {
    /// One node per vertex; edges are the mesh edges.
    pub fn from_mesh(mesh: &Mesh, grid: &SparseVoxelGrid) -> Result<Self> {
        if mesh.len() != grid.num_points() {
            return Err(Error::Alignment {
                expected: grid.num_points(),
                found: mesh.len(),
            });
        }
        let nodes = (0..mesh.len() as u32)
            .into_par_iter()
            .map(|p| ClusterNode::singleton(p, grid))
            .collect();
        let edges = mesh.edges.iter().map(|e| (e.0, e.1)).collect();
        Ok(Self { nodes, edges })
    }

    /// Builds a graph from arbitrary node order and edge list, normalizing the edges.
    pub fn new(nodes: Vec<ClusterNode>, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut edges: Vec<(u32, u32)> = edges
            .into_iter()
            .filter(|&(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let graph = Self { nodes, edges };
        graph.validate()?;
        Ok(graph)
    }

    pub fn num_points(&self) -> usize {
        self.nodes.iter().map(|n| n.members.len()).sum()
    }

    /// Checks that node ids are member minima, members partition
    /// `0..num_points`, and edges join distinct live nodes.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_points();
        let mut seen = vec![false; n];
        for node in &self.nodes {
            if node.members.first() != Some(&node.id) || !node.members.is_sorted() {
                return Err(Error::Validation(format!(
                    "node {} is not the sorted minimum of its members",
                    node.id
                )));
            }
            for &m in &node.members {
                let slot = seen
                    .get_mut(m as usize)
                    .ok_or_else(|| Error::Validation(format!("member {m} out of range")))?;
                if std::mem::replace(slot, true) {
                    return Err(Error::Validation(format!("point {m} in two nodes")));
                }
            }
        }
        let index = self.index_of_ids();
        for &(a, b) in &self.edges {
            if a == b || !index.contains_key(&a) || !index.contains_key(&b) {
                return Err(Error::Validation(format!("invalid edge ({a}, {b})")));
            }
        }
        Ok(())
    }

    fn index_of_ids(&self) -> FxHashMap<u32, u32> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id, i as u32))
            .collect()
    }

    /// Node id of every point.
    pub fn point_labels(&self) -> Vec<u32> {
        let mut labels = vec![0u32; self.num_points()];
        for node in &self.nodes {
            for &m in &node.members {
                labels[m as usize] = node.id;
            }
        }
        labels
    }

    /// Member sets sorted by id; a canonical form of the partition.
    pub fn partition(&self) -> Vec<Vec<u32>> {
        let mut parts: Vec<&ClusterNode> = self.nodes.iter().collect();
        parts.sort_unstable_by_key(|n| n.id);
        parts.into_iter().map(|n| n.members.clone()).collect()
    }
}

/// `A(a, b)`: mean over scales (with at least one scored pair) of the mean
/// fused score over 6-adjacent voxel pairs occupied by `a` and `b`. Zero when
/// no scale contributes. Symmetric in its arguments bit for bit.
pub fn node_affinity(a: &ClusterNode, b: &ClusterNode, field: &AffinityField) -> f64 {
    let (a, b) = if a.id <= b.id { (a, b) } else { (b, a) };
    let scales = field.num_scales().min(a.occupancy.num_scales());
    let mut total = 0.0;
    let mut contributing = 0u32;
    for s in 0..scales {
        let bound = field.spec().extent_at(s);
        let mut sum = 0.0;
        let mut pairs = 0u64;
        for_each_neighbor_pair(&a.occupancy, &b.occupancy, s, bound, |p, dir, q| {
            if let Some(score) = field.pair_score(s, p, dir, q) {
                sum += score;
                pairs += 1;
            }
        });
        if pairs > 0 {
            total += sum / pairs as f64;
            contributing += 1;
        }
    }
    if contributing == 0 {
        0.0
    } else {
        total / contributing as f64
    }
}

/// Per edge affinities, aligned with `graph.edges`.
pub fn edge_affinities(graph: &ClusterGraph, field: &AffinityField) -> Vec<f64> {
    let index = graph.index_of_ids();
    graph
        .edges
        .par_iter()
        .map(|&(a, b)| {
            node_affinity(
                &graph.nodes[index[&a] as usize],
                &graph.nodes[index[&b] as usize],
                field,
            )
        })
        .collect()
}

/// `M(V)` for every node, aligned with `graph.nodes`, as target node ids.
pub fn compute_mapping(graph: &ClusterGraph, field: &AffinityField) -> Vec<u32> {
    let affinities = edge_affinities(graph, field);
    mapping_from_affinities(graph, &affinities)
}

fn mapping_from_affinities(graph: &ClusterGraph, affinities: &[f64]) -> Vec<u32> {
    let index = graph.index_of_ids();
    // best (affinity, neighbor id) per node; larger affinity wins, then smaller id
    let mut best: Vec<Option<(f64, u32)>> = vec![None; graph.nodes.len()];
    let mut offer = |node: u32, score: f64, neighbor: u32| {
        let slot = &mut best[index[&node] as usize];
        let better = match *slot {
            None => true,
            Some((s, id)) => score > s || (score == s && neighbor < id),
        };
        if better {
            *slot = Some((score, neighbor));
        }
    };
    for (&(a, b), &score) in graph.edges.iter().zip(affinities) {
        offer(a, score, b);
        offer(b, score, a);
    }
    graph
        .nodes
        .iter()
        .zip(best)
        .map(|(node, b)| match b {
            Some((score, target)) if score > MERGE_THRESHOLD => target,
            _ => node.id,
        })
        .collect()
}

/// Contracts the weakly connected components of `v → mapping[v]` into single
/// nodes. `mapping` is aligned with `graph.nodes` and holds target node ids.
/// New nodes are ordered by id.
pub fn contract(graph: &ClusterGraph, mapping: &[u32]) -> Result<ClusterGraph> {
    if mapping.len() != graph.nodes.len() {
        return Err(Error::Alignment {
            expected: graph.nodes.len(),
            found: mapping.len(),
        });
    }
    let index = graph.index_of_ids();
    let sets = ConcurrentDisjointSet::new(graph.nodes.len());
    mapping.par_iter().enumerate().try_for_each(|(i, target)| {
        let t = *index
            .get(target)
            .ok_or_else(|| Error::Validation(format!("mapping target {target} is not a node")))?;
        sets.union(i as u32, t);
        Ok::<_, Error>(())
    })?;
    let roots = sets.roots();

    // group node indices by root
    let mut order: Vec<u32> = (0..graph.nodes.len() as u32).collect();
    order.par_sort_unstable_by_key(|&i| (roots[i as usize], i));
    let mut groups: Vec<&[u32]> = Vec::new();
    let mut start = 0;
    for end in 1..=order.len() {
        if end == order.len() || roots[order[end] as usize] != roots[order[start] as usize] {
            groups.push(&order[start..end]);
            start = end;
        }
    }

    let mut nodes: Vec<ClusterNode> = groups
        .par_iter()
        .map(|group| {
            if let [single] = group {
                return graph.nodes[*single as usize].clone();
            }
            let mut members: Vec<u32> = group
                .iter()
                .flat_map(|&i| graph.nodes[i as usize].members.iter().copied())
                .collect();
            members.sort_unstable();
            let occupancy =
                OccupancyCounts::merge_all(group.iter().map(|&i| &graph.nodes[i as usize].occupancy));
            ClusterNode {
                id: members[0],
                members,
                occupancy,
            }
        })
        .collect();
    nodes.par_sort_unstable_by_key(|n| n.id);

    // old node index -> new node id (the group's smallest id)
    let mut new_id = vec![0u32; graph.nodes.len()];
    for group in &groups {
        let id = group
            .iter()
            .map(|&i| graph.nodes[i as usize].id)
            .min()
            .expect("non-empty group");
        for &i in group.iter() {
            new_id[i as usize] = id;
        }
    }
    let mut edges: Vec<(u32, u32)> = graph
        .edges
        .par_iter()
        .filter_map(|&(a, b)| {
            let (x, y) = (new_id[index[&a] as usize], new_id[index[&b] as usize]);
            (x != y).then(|| (x.min(y), x.max(y)))
        })
        .collect();
    edges.par_sort_unstable();
    edges.dedup();
    Ok(ClusterGraph { nodes, edges })
}

/// Runs map-and-contract rounds until every node maps to itself.
pub fn cluster(mesh: &Mesh, grid: &SparseVoxelGrid, field: &AffinityField) -> Result<ClusterGraph> {
    let graph = ClusterGraph::from_mesh(mesh, grid)?;
    cluster_graph(graph, field, |_, _| {})
}

/// Contracts `graph` to its fixpoint, calling `observe` after each round that
/// merged something.
pub fn cluster_graph(
    mut graph: ClusterGraph,
    field: &AffinityField,
    mut observe: impl FnMut(&IterationStats, &ClusterGraph),
) -> Result<ClusterGraph> {
    for iteration in 0.. {
        let start = Instant::now();
        let mapping = compute_mapping(&graph, field);
        let moved = graph
            .nodes
            .iter()
            .zip(&mapping)
            .any(|(node, &target)| node.id != target);
        if !moved {
            break;
        }
        let before = graph.nodes.len();
        graph = contract(&graph, &mapping)?;
        let stats = IterationStats {
            iteration,
            nodes: graph.nodes.len(),
            edges: graph.edges.len(),
            merges: before - graph.nodes.len(),
            elapsed: start.elapsed(),
        };
        observe(&stats, &graph);
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{Scores, IGNORE};
    use crate::mesh::Vec3;
    use crate::voxel::{Direction, GridSpec, VoxelCoord};

    fn line_grid(n: u16) -> SparseVoxelGrid {
        let pts: Vec<Vec3> = (0..n).map(|i| [(i as f64 + 0.5) * 0.02, 0.01, 0.01]).collect();
        SparseVoxelGrid::build(
            &pts,
            &GridSpec {
                num_scales: 2,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn node(members: &[u32], grid: &SparseVoxelGrid) -> ClusterNode {
        ClusterNode::from_members(members.to_vec(), grid).unwrap()
    }

    #[test]
    fn affinity_fuses_both_directions() {
        let g = line_grid(2);
        let mut f = AffinityField::new(*g.spec());
        let mut s0: Scores = [IGNORE; 6];
        s0[Direction::PosX.index()] = 0.8;
        let mut s1: Scores = [IGNORE; 6];
        s1[Direction::NegX.index()] = 0.6;
        f.insert(0, VoxelCoord::new(0, 0, 0), s0);
        f.insert(0, VoxelCoord::new(1, 0, 0), s1);
        let a = node(&[0], &g);
        let b = node(&[1], &g);
        assert!((node_affinity(&a, &b, &f) - 0.7).abs() < 1e-7);
        assert_eq!(node_affinity(&a, &b, &f), node_affinity(&b, &a, &f));
    }

    #[test]
    fn no_pairs_means_zero() {
        let pts = [[0.01, 0.01, 0.01], [0.05, 0.01, 0.01]];
        let g = SparseVoxelGrid::build(&pts, &GridSpec::default()).unwrap();
        let mut f = AffinityField::new(*g.spec());
        f.insert(0, VoxelCoord::new(0, 0, 0), [1.0; 6]);
        f.insert(0, VoxelCoord::new(2, 0, 0), [1.0; 6]);
        assert_eq!(node_affinity(&node(&[0], &g), &node(&[1], &g), &f), 0.0);
    }

    fn graph_with_affinities(n: u32, edges: &[(u32, u32)]) -> ClusterGraph {
        let g = line_grid(n as u16);
        let nodes = (0..n).map(|p| ClusterNode::singleton(p, &g)).collect();
        ClusterGraph::new(nodes, edges.iter().copied()).unwrap()
    }

    #[test]
    fn mapping_rules() {
        // node 0 with neighbors 1 (0.9) and 2 (0.4)
        let g = graph_with_affinities(4, &[(0, 1), (0, 2), (0, 3)]);
        let m = mapping_from_affinities(&g, &[0.9, 0.4, 0.1]);
        assert_eq!(m[0], 1);
        assert_eq!(m[2], 2, "0.4 stays put");
        // exactly 0.5 never merges
        let m = mapping_from_affinities(&g, &[0.5, 0.5, 0.5]);
        assert_eq!(m, vec![0, 1, 2, 3]);
        // tie goes to the smaller id
        let m = mapping_from_affinities(&g, &[0.3, 0.8, 0.8]);
        assert_eq!(m[0], 2);
    }

    fn contracted(n: u32, mapping: &[u32]) -> Vec<Vec<u32>> {
        let g = graph_with_affinities(n, &[]);
        contract(&g, mapping).unwrap().partition()
    }

    #[test]
    fn contraction_examples() {
        // 1→2, 2→1, 3→3 (0-based: 0↔1, 2 alone)
        assert_eq!(contracted(3, &[1, 0, 2]), vec![vec![0, 1], vec![2]]);
        // star
        assert_eq!(contracted(3, &[0, 0, 0]), vec![vec![0, 1, 2]]);
        // A→B, B→C, C→B
        assert_eq!(contracted(3, &[1, 2, 1]), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn contraction_projects_edges() {
        let g = graph_with_affinities(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]);
        let c = contract(&g, &[1, 1, 2, 4, 3]).unwrap();
        assert_eq!(c.partition(), vec![vec![0, 1], vec![2], vec![3, 4]]);
        assert_eq!(c.edges, vec![(0, 2), (0, 3), (2, 3)]);
        c.validate().unwrap();
    }

    #[test]
    fn merged_node_can_occupy_new_coarse_voxel() {
        // four points filling one scale-1 voxel, none occupying it alone
        let pts: Vec<Vec3> = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
            .iter()
            .map(|c| c.map(|x: i32| x as f64 * 0.02 + 0.01))
            .collect();
        let g = SparseVoxelGrid::build(&pts, &GridSpec::default()).unwrap();
        let nodes: Vec<ClusterNode> = (0..4).map(|p| ClusterNode::singleton(p, &g)).collect();
        assert!(nodes.iter().all(|n| n.occupancy.occupied_count(1) == 0));
        let graph = ClusterGraph::new(nodes, [(0, 1), (1, 3), (3, 2)]).unwrap();
        let merged = contract(&graph, &[1, 0, 3, 2]).unwrap();
        assert_eq!(merged.nodes.len(), 2);
        let all = contract(&graph, &[1, 3, 3, 1]).unwrap();
        assert_eq!(all.nodes[0].occupancy.occupied_count(1), 1);
    }

    #[test]
    fn invalid_graphs_are_rejected() {
        let g = line_grid(3);
        let a = node(&[0, 1], &g);
        let b = node(&[1, 2], &g);
        assert!(ClusterGraph::new(vec![a.clone(), b], []).is_err());
        let c = node(&[2], &g);
        assert!(ClusterGraph::new(vec![a, c], [(0, 7)]).is_err());
    }
}
