//! Non-neural core of a multi-scale affinity instance segmentation pipeline
//! for meshed indoor point clouds.
//!
//! The pieces, in pipeline order:
//!
//! - [`mesh`] / [`ply`]: meshes, labels and the vertex graph,
//! - [`densify`]: extra samples inside large triangles,
//! - [`voxel`]: sparse multi-scale voxelization and node occupancy,
//! - [`affinity`]: 6-neighbor affinity fields, ground-truth supervision and noisy oracles,
//! - [`cluster`]: parallel graph contraction driven by node affinity,
//! - [`instance`]: semantic voting, planar-class components and confidences,
//! - [`eval`]: per-class AP at IoU 0.5,
//! - [`pipeline`]: all of the above on a labeled scene,
//! - [`synth`]: procedural labeled scenes for testing and demos.

pub mod affinity;
pub mod classes;
pub mod cluster;
pub mod densify;
pub mod error;
pub mod eval;
pub mod instance;
pub mod mesh;
pub mod pipeline;
pub mod ply;
pub mod synth;
pub mod union_find;
pub mod voxel;

pub use affinity::{AffinityField, OracleConfig};
pub use classes::ClassTable;
pub use cluster::{ClusterGraph, ClusterNode};
pub use densify::DensifyConfig;
pub use error::{Error, Result};
pub use eval::{evaluate, EvalReport};
pub use instance::{AssembleConfig, InstanceSegmentation};
pub use mesh::{Edge, LabelSet, Mesh, Vertex, VertexOrigin};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use voxel::{GridSpec, OccupancyCounts, SparseVoxelGrid, VoxelCoord};
