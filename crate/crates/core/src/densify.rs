//! Mesh densification: random interior samples for triangles that span
//! several voxels, wired into the vertex graph.
//!
//! Each qualifying triangle draws from its own ChaCha8 stream: the generator
//! is seeded with `seed` and the stream index is the triangle index. Output is
//! therefore independent of thread count and scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{distance_squared, face_cross, normalize, Edge, Mesh, Vertex, VertexOrigin};
use crate::voxel::{GridSpec, VoxelCoord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DensifyConfig {
    pub samples_per_triangle: u32,
    /// A triangle qualifies when its corners' scale-0 voxel bounding box
    /// covers at least this many voxels along some axis.
    pub min_span_voxels: u32,
    pub seed: u64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            samples_per_triangle: 5,
            min_span_voxels: 2,
            seed: 0,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_span_voxels == 0 {
            return Err(Error::Config("min_span_voxels must be >= 1".into()));
        }
        Ok(())
    }

    /// Comment lines recorded in the header of a densified mesh file.
    pub fn header_comments(&self) -> Vec<String> {
        vec![format!(
            "densify seed={} samples_per_triangle={} min_span_voxels={}",
            self.seed, self.samples_per_triangle, self.min_span_voxels
        )]
    }
}

/// Extent of the corners' scale-0 voxel bounding box along each axis, in
/// voxel steps: corners in one voxel span 0, in adjacent voxels 1.
pub fn voxel_span(corners: [VoxelCoord; 3]) -> [u32; 3] {
    let mut span = [0u32; 3];
    for (axis, s) in span.iter_mut().enumerate() {
        let vals = corners.map(|c| c.axes()[axis] as u32);
        *s = vals.iter().max().unwrap() - vals.iter().min().unwrap();
    }
    span
}

struct TriangleSamples {
    vertices: Vec<Vertex>,
    /// Edges in local numbering: sample index `i` is `Local(i)`.
    edges: Vec<(LocalEnd, LocalEnd)>,
}

#[derive(Clone, Copy)]
enum LocalEnd {
    Original(u32),
    Sample(u32),
}

/// Appends interior samples to every triangle whose voxel bounding box
/// extends at least `cfg.min_span_voxels` steps along some axis. `spec` must already carry the
/// origin the mesh will be voxelized with.
pub fn densify(mesh: &Mesh, spec: &GridSpec, cfg: &DensifyConfig) -> Result<Mesh> {
    cfg.validate()?;
    spec.validate()?;
    if cfg.samples_per_triangle == 0 {
        return Ok(mesh.clone());
    }
    let per_triangle: Vec<Option<TriangleSamples>> = mesh
        .triangles
        .par_iter()
        .enumerate()
        .map(|(t, tri)| sample_triangle(mesh, spec, cfg, t as u64, *tri))
        .collect::<Result<_>>()?;

    let mut out = mesh.clone();
    let mut new_edges = Vec::new();
    for samples in per_triangle.into_iter().flatten() {
        let base = out.vertices.len() as u32;
        let resolve = |end: LocalEnd| match end {
            LocalEnd::Original(v) => v,
            LocalEnd::Sample(i) => base + i,
        };
        new_edges.extend(
            samples
                .edges
                .iter()
                .filter_map(|&(a, b)| Edge::new(resolve(a), resolve(b))),
        );
        out.vertices.extend(samples.vertices);
    }
    out.add_edges(new_edges);
    Ok(out)
}

fn sample_triangle(
    mesh: &Mesh,
    spec: &GridSpec,
    cfg: &DensifyConfig,
    index: u64,
    tri: [u32; 3],
) -> Result<Option<TriangleSamples>> {
    let corners = tri.map(|v| &mesh.vertices[v as usize]);
    let voxels = [
        spec.coord_of(corners[0].position)?,
        spec.coord_of(corners[1].position)?,
        spec.coord_of(corners[2].position)?,
    ];
    if voxel_span(voxels).iter().all(|&s| s < cfg.min_span_voxels) {
        return Ok(None);
    }

    let [a, b, c] = corners.map(|v| v.position);
    let normal = normalize(face_cross(a, b, c))
        .or_else(|| {
            let mut sum = [0.0; 3];
            for v in corners {
                for (s, n) in sum.iter_mut().zip(v.normal) {
                    *s += n;
                }
            }
            normalize(sum)
        })
        .unwrap_or([0.0, 0.0, 1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);

    let n = cfg.samples_per_triangle as usize;
    let mut vertices = Vec::with_capacity(n);
    let mut sample_voxels = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for i in 0..n {
        let mut u: f64 = rng.random();
        let mut v: f64 = rng.random();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let w = 1.0 - u - v;
        let position = [0, 1, 2].map(|k| a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k]));
        let color = [0, 1, 2].map(|k| {
            (w * corners[0].color[k] as f64 + u * corners[1].color[k] as f64 + v * corners[2].color[k] as f64)
                as f32
        });
        // nearest corner by Euclidean distance, ties to the earlier corner
        let nearest = (0..3)
            .min_by(|&x, &y| {
                distance_squared(position, corners[x].position)
                    .total_cmp(&distance_squared(position, corners[y].position))
            })
            .unwrap();
        let source = corners[nearest];
        vertices.push(Vertex {
            position,
            color,
            normal,
            semantic_class: source.semantic_class,
            instance_id: source.instance_id,
            origin: VertexOrigin::Sampled,
        });
        edges.push((LocalEnd::Sample(i as u32), LocalEnd::Original(tri[nearest])));
        sample_voxels.push(spec.coord_of(position)?);
    }
    for i in 0..n {
        for j in i + 1..n {
            let (p, q) = (sample_voxels[i], sample_voxels[j]);
            if p == q || p.direction_to(q).is_some() {
                edges.push((LocalEnd::Sample(i as u32), LocalEnd::Sample(j as u32)));
            }
        }
    }
    Ok(Some(TriangleSamples { vertices, edges }))
}
