//! Triangle meshes, per-vertex labels and the undirected edge set that seeds clustering.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Whether a vertex came from the input mesh or was added by densification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum VertexOrigin {
    #[default]
    Original,
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub position: Vec3,
    /// RGB in [0, 1].
    pub color: [f32; 3],
    pub normal: Vec3,
    pub semantic_class: Option<u32>,
    /// 0 means unannotated.
    pub instance_id: Option<u32>,
    pub origin: VertexOrigin,
}

impl Vertex {
    pub const DEFAULT_COLOR: [f32; 3] = [0.5, 0.5, 0.5];

    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            color: Self::DEFAULT_COLOR,
            normal: [0.0, 0.0, 0.0],
            semantic_class: None,
            instance_id: None,
            origin: VertexOrigin::Original,
        }
    }
}

/// Unordered vertex pair stored with the smaller index first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(pub u32, pub u32);

impl Edge {
    /// Returns `None` for self-loops.
    pub fn new(a: u32, b: u32) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Edge(a, b)),
            std::cmp::Ordering::Greater => Some(Edge(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub triangles: Vec<[u32; 3]>,
    /// Sorted, deduplicated. Triangle sides plus any extra (densification) edges.
    pub edges: Vec<Edge>,
}

impl Mesh {
    /// Builds a mesh whose edge set is the triangle sides plus `extra_edges`.
    pub fn new(vertices: Vec<Vertex>, triangles: Vec<[u32; 3]>, extra_edges: &[Edge]) -> Result<Self> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v as usize >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
        }
        for e in extra_edges {
            if e.1 as usize >= n || e.0 >= e.1 {
                return Err(Error::Validation(format!("invalid edge ({}, {})", e.0, e.1)));
            }
        }
        let mut mesh = Mesh {
            vertices,
            triangles,
            edges: Vec::new(),
        };
        mesh.edges = triangle_edges(&mesh.triangles);
        if !extra_edges.is_empty() {
            mesh.add_edges(extra_edges.iter().copied());
        }
        Ok(mesh)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::ply::read_mesh(path)
    }

    pub fn save(&self, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
        crate::ply::write_mesh(path, self, comments)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.vertices.iter().map(|v| v.position).collect()
    }

    pub fn original_count(&self) -> usize {
        self.vertices
            .iter()
            .filter(|v| v.origin == VertexOrigin::Original)
            .count()
    }

    /// Edges that are not a side of any triangle.
    pub fn extra_edges(&self) -> Vec<Edge> {
        let sides = triangle_edges(&self.triangles);
        self.edges
            .iter()
            .filter(|e| sides.binary_search(e).is_err())
            .copied()
            .collect()
    }

    pub fn add_edges(&mut self, edges: impl IntoIterator<Item = Edge>) {
        self.edges.extend(edges);
        self.edges.sort_unstable();
        self.edges.dedup();
    }

    /// Per-vertex instance ids, 0 where unknown.
    pub fn instance_ids(&self) -> Vec<u32> {
        self.vertices.iter().map(|v| v.instance_id.unwrap_or(0)).collect()
    }

    pub fn has_labels(&self) -> bool {
        !self.vertices.is_empty()
            && self
                .vertices
                .iter()
                .all(|v| v.semantic_class.is_some() && v.instance_id.is_some())
    }

    /// Writes `labels` onto the original vertices (which always precede sampled ones).
    pub fn apply_labels(&mut self, labels: &LabelSet) -> Result<()> {
        let originals = self.original_count();
        if labels.len() != originals {
            return Err(Error::Alignment {
                expected: originals,
                found: labels.len(),
            });
        }
        for (v, (&class, &instance)) in self
            .vertices
            .iter_mut()
            .zip(labels.semantic.iter().zip(&labels.instance))
        {
            v.semantic_class = Some(class);
            v.instance_id = Some(instance);
        }
        Ok(())
    }

    /// Vertex adjacency lists (CSR offsets + neighbor indices).
    pub fn adjacency(&self) -> (Vec<usize>, Vec<u32>) {
        let n = self.vertices.len();
        let mut degree = vec![0usize; n + 1];
        for e in &self.edges {
            degree[e.0 as usize + 1] += 1;
            degree[e.1 as usize + 1] += 1;
        }
        for i in 0..n {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; offsets[n]];
        for e in &self.edges {
            neighbors[fill[e.0 as usize]] = e.1;
            fill[e.0 as usize] += 1;
            neighbors[fill[e.1 as usize]] = e.0;
            fill[e.1 as usize] += 1;
        }
        (offsets, neighbors)
    }

    /// Area-weighted vertex normals. Zero-area faces contribute nothing; vertices
    /// touched only by such faces get +z.
    pub fn compute_normals(&mut self) {
        let mut acc = vec![[0.0f64; 3]; self.vertices.len()];
        for tri in &self.triangles {
            // the unnormalized cross product already carries twice the area
            let n = face_cross(
                self.vertices[tri[0] as usize].position,
                self.vertices[tri[1] as usize].position,
                self.vertices[tri[2] as usize].position,
            );
            if norm(n) == 0.0 {
                continue;
            }
            for &v in tri {
                let a = &mut acc[v as usize];
                a[0] += n[0];
                a[1] += n[1];
                a[2] += n[2];
            }
        }
        for (v, n) in self.vertices.iter_mut().zip(acc) {
            v.normal = normalize(n).unwrap_or([0.0, 0.0, 1.0]);
        }
    }
}

fn triangle_edges(triangles: &[[u32; 3]]) -> Vec<Edge> {
    let mut edges: Vec<Edge> = triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .filter_map(|(a, b)| Edge::new(a, b))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

pub(crate) fn face_cross(a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

pub(crate) fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn normalize(v: Vec3) -> Option<Vec3> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

pub(crate) fn distance_squared(a: Vec3, b: Vec3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Ground-truth annotation for the original vertices of a mesh.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelSet {
    pub semantic: Vec<u32>,
    /// 0 is reserved for unannotated vertices.
    pub instance: Vec<u32>,
}

impl LabelSet {
    pub fn new(semantic: Vec<u32>, instance: Vec<u32>) -> Result<Self> {
        if semantic.len() != instance.len() {
            return Err(Error::Alignment {
                expected: semantic.len(),
                found: instance.len(),
            });
        }
        Ok(Self { semantic, instance })
    }

    pub fn len(&self) -> usize {
        self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty()
    }

    /// Reads `<semantic_class_id> <instance_id>` lines. `expected` is the
    /// number of original vertices of the mesh the labels belong to.
    pub fn load(path: impl AsRef<Path>, expected: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let labels = Self::parse(&text)?;
        if labels.len() != expected {
            return Err(Error::Alignment {
                expected,
                found: labels.len(),
            });
        }
        Ok(labels)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut semantic = Vec::new();
        let mut instance = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = |what: &str| -> Result<u32> {
                let tok = fields
                    .next()
                    .ok_or_else(|| Error::format_at_line(lineno + 1, format!("missing {what}")))?;
                tok.parse()
                    .map_err(|_| Error::format_at_line(lineno + 1, format!("invalid {what} `{tok}`")))
            };
            semantic.push(next("semantic class id")?);
            instance.push(next("instance id")?);
            if fields.next().is_some() {
                return Err(Error::format_at_line(lineno + 1, "expected 2 fields"));
            }
        }
        Ok(Self { semantic, instance })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.len() * 8);
        for (s, i) in self.semantic.iter().zip(&self.instance) {
            out.push_str(&format!("{s} {i}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Number of distinct annotated (non-zero) instance ids.
    pub fn annotated_instances(&self) -> usize {
        let mut ids: Vec<u32> = self.instance.iter().copied().filter(|&i| i != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Ground-truth instances as (instance id, class id, member vertices), ordered by id.
    /// An instance's class is the most frequent class among its vertices (ties to the smaller id).
    pub fn instances(&self) -> Vec<(u32, u32, Vec<u32>)> {
        let mut members: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (v, &inst) in self.instance.iter().enumerate() {
            if inst != 0 {
                members.entry(inst).or_default().push(v as u32);
            }
        }
        members
            .into_iter()
            .map(|(id, verts)| {
                let class = modal(verts.iter().map(|&v| self.semantic[v as usize]));
                (id, class, verts)
            })
            .collect()
    }
}

/// Most frequent value; ties go to the smallest value. Panics on empty input.
pub(crate) fn modal(values: impl Iterator<Item = u32>) -> u32 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(u32, usize)> = None;
    for (v, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.expect("modal of empty sequence").0
}
