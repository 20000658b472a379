//! Turning clusters into labeled instances.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use crate::affinity::AffinityField;
use crate::classes::ClassTable;
use crate::cluster::{ClusterGraph, MERGE_THRESHOLD};
use crate::error::{Error, Result};
use crate::mesh::{modal, Mesh, VertexOrigin};
use crate::union_find::ConcurrentDisjointSet;
use crate::voxel::internal_pairs;

/// Per original vertex predicted class ids.
pub type SemanticPrediction = Vec<u32>;

/// Reads one class id per line; extra columns (as in a label file) are ignored.
pub fn load_semantics(path: impl AsRef<Path>, expected: usize) -> Result<SemanticPrediction> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::with_capacity(expected);
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(tok) = line.split_whitespace().next() else {
            continue;
        };
        if tok.starts_with('#') {
            continue;
        }
        out.push(
            tok.parse()
                .map_err(|_| Error::format_at_line(n + 1, format!("invalid class id `{tok}`")))?,
        );
    }
    if out.len() != expected {
        return Err(Error::Alignment {
            expected,
            found: out.len(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    /// Dense, starting at 1.
    pub id: u32,
    pub class_id: u32,
    pub confidence: f64,
    /// Sorted original-vertex indices.
    pub members: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstanceSegmentation {
    /// Instance id per original vertex, 0 for background.
    pub point_instance: Vec<u32>,
    pub instances: Vec<Instance>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssembleConfig {
    pub min_instance_points: usize,
    pub min_planar_points: usize,
    pub planar_confidence: f64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self {
            min_instance_points: 10,
            min_planar_points: 100,
            planar_confidence: 0.5,
        }
    }
}

impl AssembleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.planar_confidence) {
            return Err(Error::Config(format!(
                "planar_confidence must be in [0, 1], got {}",
                self.planar_confidence
            )));
        }
        Ok(())
    }
}

/// Fraction of the node's internal scale-0 voxel pairs whose fused score
/// exceeds 0.5; 1 when the node has no scored internal pair.
pub fn internal_agreement(occupancy: &crate::voxel::OccupancyCounts, field: &AffinityField) -> f64 {
    let bound = field.spec().extent_at(0);
    let mut scored = 0u64;
    let mut agree = 0u64;
    for (p, dir, q) in internal_pairs(occupancy, 0, bound) {
        if let Some(s) = field.pair_score(0, p, dir, q) {
            scored += 1;
            agree += (s > MERGE_THRESHOLD) as u64;
        }
    }
    if scored == 0 {
        1.0
    } else {
        agree as f64 / scored as f64
    }
}

/// One instance per final cluster with at least `min_instance_points`
/// original vertices whose majority class is an instance class. Vertices
/// with index `>= semantics.len()` are densification samples and are left out.
pub fn assemble(
    graph: &ClusterGraph,
    semantics: &[u32],
    field: &AffinityField,
    classes: &ClassTable,
    cfg: &AssembleConfig,
) -> Result<InstanceSegmentation> {
    cfg.validate()?;
    let originals = semantics.len();
    if graph.num_points() < originals {
        return Err(Error::Alignment {
            expected: graph.num_points(),
            found: originals,
        });
    }
    let mut nodes: Vec<_> = graph.nodes.iter().collect();
    nodes.sort_unstable_by_key(|n| n.id);
    let candidates: Vec<Option<(u32, f64, Vec<u32>)>> = nodes
        .par_iter()
        .map(|node| {
            let members: Vec<u32> = node
                .members
                .iter()
                .copied()
                .filter(|&m| (m as usize) < originals)
                .collect();
            if members.is_empty() || members.len() < cfg.min_instance_points {
                return None;
            }
            let class = modal(members.iter().map(|&m| semantics[m as usize]));
            if !classes.is_instance(class) {
                return None;
            }
            Some((class, internal_agreement(&node.occupancy, field), members))
        })
        .collect();

    let mut seg = InstanceSegmentation {
        point_instance: vec![0; originals],
        instances: Vec::new(),
    };
    for (class_id, confidence, members) in candidates.into_iter().flatten() {
        seg.push(class_id, confidence, members);
    }
    Ok(seg)
}

/// Adds one instance per connected component (over original-mesh edges) of
/// vertices predicted as a planar class, for components with at least
/// `min_planar_points` vertices. Existing instances keep their member sets;
/// the per-vertex column is overwritten by the new instances.
pub fn add_planar_components(
    mut seg: InstanceSegmentation,
    semantics: &[u32],
    mesh: &Mesh,
    classes: &ClassTable,
    cfg: &AssembleConfig,
) -> Result<InstanceSegmentation> {
    cfg.validate()?;
    let planar = classes.planar_classes()?;
    let originals = semantics.len();
    if seg.point_instance.len() != originals || mesh.original_count() != originals {
        return Err(Error::Alignment {
            expected: seg.point_instance.len(),
            found: originals,
        });
    }
    let is_original =
        |v: u32| (v as usize) < originals && mesh.vertices[v as usize].origin == VertexOrigin::Original;
    for class in planar {
        let sets = ConcurrentDisjointSet::new(originals);
        mesh.edges
            .par_iter()
            .filter(|e| {
                is_original(e.0)
                    && is_original(e.1)
                    && semantics[e.0 as usize] == class.id
                    && semantics[e.1 as usize] == class.id
            })
            .for_each(|e| sets.union(e.0, e.1));
        let roots = sets.roots();
        let mut components: Vec<Vec<u32>> = Vec::new();
        let mut slot_of_root = vec![u32::MAX; originals];
        for v in 0..originals as u32 {
            if semantics[v as usize] != class.id {
                continue;
            }
            let r = roots[v as usize] as usize;
            if slot_of_root[r] == u32::MAX {
                slot_of_root[r] = components.len() as u32;
                components.push(Vec::new());
            }
            components[slot_of_root[r] as usize].push(v);
        }
        for members in components {
            if members.len() >= cfg.min_planar_points {
                seg.push(class.id, cfg.planar_confidence, members);
            }
        }
    }
    Ok(seg)
}

impl InstanceSegmentation {
    pub fn empty(points: usize) -> Self {
        Self {
            point_instance: vec![0; points],
            instances: Vec::new(),
        }
    }

    /// Appends an instance with the next id and marks its members in the per-vertex column.
    pub fn push(&mut self, class_id: u32, confidence: f64, members: Vec<u32>) -> u32 {
        let id = self.instances.len() as u32 + 1;
        for &m in &members {
            self.point_instance[m as usize] = id;
        }
        self.instances.push(Instance {
            id,
            class_id,
            confidence,
            members,
        });
        id
    }

    /// Member sets rebuilt from the per-vertex column: what the instance file records.
    pub fn flattened(&self) -> Self {
        let mut instances: Vec<Instance> = self
            .instances
            .iter()
            .map(|i| Instance {
                members: Vec::new(),
                ..i.clone()
            })
            .collect();
        for (v, &id) in self.point_instance.iter().enumerate() {
            if id != 0 {
                instances[id as usize - 1].members.push(v as u32);
            }
        }
        Self {
            point_instance: self.point_instance.clone(),
            instances,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.point_instance.len() * 3 + 64);
        let _ = writeln!(out, "{}", self.instances.len());
        for inst in &self.instances {
            let _ = writeln!(out, "{} {} {}", inst.id, inst.class_id, inst.confidence);
        }
        for &id in &self.point_instance {
            let _ = writeln!(out, "{id}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the instance file. Member sets come from the per-vertex column.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (n0, first) = lines
            .next()
            .ok_or_else(|| Error::format_at_line(1, "empty instance file"))?;
        let count: usize = first
            .trim()
            .parse()
            .map_err(|_| Error::format_at_line(n0 + 1, "expected instance count"))?;
        let mut instances = Vec::with_capacity(count);
        for expected_id in 1..=count as u32 {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::format_at_line(n0 + 1, "missing instance rows"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |m: &str| Error::format_at_line(n + 1, m.to_string());
            if f.len() != 3 {
                return Err(bad("expected `<instance_id> <class_id> <confidence>`"));
            }
            let id: u32 = f[0].parse().map_err(|_| bad("invalid instance id"))?;
            if id != expected_id {
                return Err(bad("instance ids must be dense from 1"));
            }
            let class_id = f[1].parse().map_err(|_| bad("invalid class id"))?;
            let confidence: f64 = f[2].parse().map_err(|_| bad("invalid confidence"))?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(Error::Validation(format!(
                    "line {}: confidence {confidence} outside [0, 1]",
                    n + 1
                )));
            }
            instances.push(Instance {
                id,
                class_id,
                confidence,
                members: Vec::new(),
            });
        }
        let mut point_instance = Vec::new();
        for (n, line) in lines {
            let id: u32 = line
                .trim()
                .parse()
                .map_err(|_| Error::format_at_line(n + 1, "invalid per-vertex instance id"))?;
            if id as usize > count {
                return Err(Error::Validation(format!(
                    "line {}: instance {id} not declared",
                    n + 1
                )));
            }
            if id != 0 {
                instances[id as usize - 1]
                    .members
                    .push(point_instance.len() as u32);
            }
            point_instance.push(id);
        }
        Ok(Self {
            point_instance,
            instances,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{Scores, IGNORE};
    use crate::cluster::ClusterNode;
    use crate::mesh::{Vec3, Vertex};
    use crate::voxel::{Direction, GridSpec, SparseVoxelGrid, VoxelCoord};

    fn row_grid(n: u16) -> SparseVoxelGrid {
        let pts: Vec<Vec3> = (0..n).map(|i| [(i as f64 + 0.5) * 0.02, 0.01, 0.01]).collect();
        SparseVoxelGrid::build(&pts, &GridSpec::default()).unwrap()
    }

    fn one_cluster(n: u16) -> (ClusterGraph, SparseVoxelGrid) {
        let g = row_grid(n);
        let node = ClusterNode::from_members((0..n as u32).collect(), &g).unwrap();
        (ClusterGraph::new(vec![node], []).unwrap(), g)
    }

    fn uniform_field(g: &SparseVoxelGrid, score: f32) -> AffinityField {
        let mut f = AffinityField::new(*g.spec());
        for s in 0..g.num_scales() {
            for &c in g.level(s).voxels() {
                f.insert(s, c, [score; 6]);
            }
        }
        f
    }

    #[test]
    fn majority_class_and_tie_break() {
        let (graph, g) = one_cluster(10);
        let classes = ClassTable::default();
        let f = uniform_field(&g, 1.0);
        let cfg = AssembleConfig::default();
        let chair_table: Vec<u32> = (0..10).map(|i| if i < 7 { 5 } else { 7 }).collect();
        let seg = assemble(&graph, &chair_table, &f, &classes, &cfg).unwrap();
        assert_eq!(seg.instances.len(), 1);
        assert_eq!(seg.instances[0].class_id, 5);
        assert_eq!(seg.instances[0].confidence, 1.0);
        let tie: Vec<u32> = (0..10).map(|i| if i < 5 { 7 } else { 5 }).collect();
        let seg = assemble(&graph, &tie, &f, &classes, &cfg).unwrap();
        assert_eq!(seg.instances[0].class_id, 5);
    }

    #[test]
    fn confidence_is_internal_agreement() {
        let (graph, g) = one_cluster(10);
        let mut f = uniform_field(&g, 1.0);
        // break the pair between voxels 4 and 5 on both sides
        let mut s4: Scores = [1.0; 6];
        s4[Direction::PosX.index()] = 0.0;
        f.insert(0, VoxelCoord::new(4, 0, 0), s4);
        let mut s5: Scores = [1.0; 6];
        s5[Direction::NegX.index()] = IGNORE;
        f.insert(0, VoxelCoord::new(5, 0, 0), s5);
        let seg = assemble(
            &graph,
            &[5; 10],
            &f,
            &ClassTable::default(),
            &AssembleConfig::default(),
        )
        .unwrap();
        assert!((seg.instances[0].confidence - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn small_and_non_instance_clusters_are_dropped() {
        let (graph, g) = one_cluster(10);
        let f = uniform_field(&g, 1.0);
        let classes = ClassTable::default();
        let wall = assemble(&graph, &[1; 10], &f, &classes, &AssembleConfig::default()).unwrap();
        assert!(wall.instances.is_empty());
        assert_eq!(wall.point_instance, vec![0; 10]);
        let strict = AssembleConfig {
            min_instance_points: 11,
            ..Default::default()
        };
        assert!(assemble(&graph, &[5; 10], &f, &classes, &strict)
            .unwrap()
            .instances
            .is_empty());
    }

    #[test]
    fn sampled_vertices_are_excluded() {
        let (graph, g) = one_cluster(12);
        let f = uniform_field(&g, 1.0);
        // only the first 10 points are original
        let seg = assemble(
            &graph,
            &[5; 10],
            &f,
            &ClassTable::default(),
            &AssembleConfig::default(),
        )
        .unwrap();
        assert_eq!(seg.instances[0].members, (0..10).collect::<Vec<u32>>());
        assert_eq!(seg.point_instance.len(), 10);
    }

    /// Two `w`-by-`w` grid patches side by side with a one-voxel gap, triangulated.
    fn patches(w: u32) -> Mesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for patch in 0..2u32 {
            let base = vertices.len() as u32;
            for j in 0..w {
                for i in 0..w {
                    let x = (patch * (w + 1) + i) as f64 * 0.02;
                    vertices.push(Vertex::at([x, j as f64 * 0.02, 0.0]));
                }
            }
            for j in 0..w - 1 {
                for i in 0..w - 1 {
                    let v = base + j * w + i;
                    triangles.push([v, v + 1, v + w]);
                    triangles.push([v + 1, v + w + 1, v + w]);
                }
            }
        }
        Mesh::new(vertices, triangles, &[]).unwrap()
    }

    #[test]
    fn planar_components() {
        let mesh = patches(13); // 169 vertices per patch
        let n = mesh.len();
        let classes = ClassTable::default();
        let cfg = AssembleConfig::default();
        let pictures = vec![11u32; n];
        let seg =
            add_planar_components(InstanceSegmentation::empty(n), &pictures, &mesh, &classes, &cfg).unwrap();
        assert_eq!(seg.instances.len(), 2);
        assert!(seg
            .instances
            .iter()
            .all(|i| i.members.len() == 169 && i.confidence == 0.5 && i.class_id == 11));

        let mesh = patches(7); // 49 vertices per patch
        let seg = add_planar_components(
            InstanceSegmentation::empty(mesh.len()),
            &vec![11; mesh.len()],
            &mesh,
            &classes,
            &cfg,
        )
        .unwrap();
        assert!(seg.instances.is_empty());

        let chairs = vec![5u32; mesh.len()];
        let before = InstanceSegmentation::empty(mesh.len());
        let after = add_planar_components(before.clone(), &chairs, &mesh, &classes, &cfg).unwrap();
        assert_eq!(after, before);

        let no_planar = ClassTable::parse("5 chair 1 0\n").unwrap();
        assert!(matches!(
            add_planar_components(before, &chairs, &mesh, &no_planar, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn planar_overlap_keeps_members_and_last_writer_column() {
        let mesh = patches(13);
        let n = mesh.len();
        let mut seg = InstanceSegmentation::empty(n);
        seg.push(11, 0.9, (0..169).collect());
        let seg = add_planar_components(
            seg,
            &vec![11; n],
            &mesh,
            &ClassTable::default(),
            &AssembleConfig::default(),
        )
        .unwrap();
        assert_eq!(seg.instances.len(), 3);
        assert_eq!(seg.instances[0].members.len(), 169);
        assert_eq!(seg.point_instance[0], 2);
        let flat = seg.flattened();
        assert!(flat.instances[0].members.is_empty());
        assert_eq!(InstanceSegmentation::parse(&seg.to_text()).unwrap(), flat);
    }

    #[test]
    fn file_format() {
        let mut seg = InstanceSegmentation::empty(10);
        seg.push(5, 0.75, vec![0, 1, 2]);
        seg.push(7, 1.0, vec![5, 9]);
        let text = seg.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 10);
        assert_eq!(lines[0], "2");
        assert_eq!(lines[1], "1 5 0.75");
        assert_eq!(lines[2], "2 7 1");
        assert_eq!(InstanceSegmentation::parse(&text).unwrap(), seg);

        let empty = InstanceSegmentation::empty(4).to_text();
        assert_eq!(empty, "0\n0\n0\n0\n0\n");
        assert_eq!(
            InstanceSegmentation::parse(&empty).unwrap(),
            InstanceSegmentation::empty(4)
        );
    }

    #[test]
    fn malformed_instance_files() {
        assert!(InstanceSegmentation::parse("").is_err());
        assert!(InstanceSegmentation::parse("1\n2 5 0.5\n0\n").is_err());
        assert!(InstanceSegmentation::parse("1\n1 5 1.5\n0\n").is_err());
        assert!(InstanceSegmentation::parse("1\n1 5 0.5\n2\n").is_err());
    }
}
