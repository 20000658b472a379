//! End-to-end run on a labeled scene: densify, voxelize, oracle affinity (or
//! a supplied field), cluster, assemble, evaluate.
//!
//! Without a trained network the ground-truth semantic labels stand in for
//! the semantic prediction.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::affinity::{generate_oracle, AffinityField, OracleConfig};
use crate::classes::ClassTable;
use crate::cluster::{cluster_graph, ClusterGraph, IterationStats};
use crate::densify::{densify, DensifyConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::instance::{add_planar_components, assemble, AssembleConfig, InstanceSegmentation};
use crate::mesh::{LabelSet, Mesh};
use crate::voxel::{GridSpec, SparseVoxelGrid};

/// Settings for every stage. Text form: `key = value` lines, `#` comments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    /// The origin is refitted to each mesh.
    pub grid: GridSpec,
    pub densify: DensifyConfig,
    pub oracle: OracleConfig,
    pub assemble: AssembleConfig,
    /// Add connected components of planar classes as extra instances.
    pub planar: bool,
    /// Class table file; the bundled table when `None`.
    pub classes: Option<PathBuf>,
}

pub const CONFIG_KEYS: [&str; 13] = [
    "voxel_size",
    "extent",
    "num_scales",
    "samples_per_triangle",
    "min_span_voxels",
    "seed",
    "flip_probability",
    "jitter_stddev",
    "min_instance_points",
    "min_planar_points",
    "planar_confidence",
    "planar",
    "classes",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(e))))?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "voxel_size" => self.grid.voxel_size = parse_value(key, value)?,
            "extent" => self.grid.extent = parse_value(key, value)?,
            "num_scales" => self.grid.num_scales = parse_value(key, value)?,
            "samples_per_triangle" => self.densify.samples_per_triangle = parse_value(key, value)?,
            "min_span_voxels" => self.densify.min_span_voxels = parse_value(key, value)?,
            "seed" => {
                let seed = parse_value(key, value)?;
                self.densify.seed = seed;
                self.oracle.seed = seed;
            }
            "flip_probability" => self.oracle.flip_probability = parse_value(key, value)?,
            "jitter_stddev" => self.oracle.jitter_stddev = parse_value(key, value)?,
            "min_instance_points" => self.assemble.min_instance_points = parse_value(key, value)?,
            "min_planar_points" => self.assemble.min_planar_points = parse_value(key, value)?,
            "planar_confidence" => self.assemble.planar_confidence = parse_value(key, value)?,
            "planar" => self.planar = parse_value(key, value)?,
            "classes" => self.classes = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.densify.validate()?;
        self.oracle.validate()?;
        self.assemble.validate()
    }

    /// Text form that [`PipelineConfig::apply_text`] reads back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let g = &self.grid;
        let _ = writeln!(out, "voxel_size = {}", g.voxel_size);
        let _ = writeln!(out, "extent = {}", g.extent);
        let _ = writeln!(out, "num_scales = {}", g.num_scales);
        let _ = writeln!(
            out,
            "samples_per_triangle = {}",
            self.densify.samples_per_triangle
        );
        let _ = writeln!(out, "min_span_voxels = {}", self.densify.min_span_voxels);
        let _ = writeln!(out, "seed = {}", self.oracle.seed);
        let _ = writeln!(out, "flip_probability = {}", self.oracle.flip_probability);
        let _ = writeln!(out, "jitter_stddev = {}", self.oracle.jitter_stddev);
        let _ = writeln!(out, "min_instance_points = {}", self.assemble.min_instance_points);
        let _ = writeln!(out, "min_planar_points = {}", self.assemble.min_planar_points);
        let _ = writeln!(out, "planar_confidence = {}", self.assemble.planar_confidence);
        let _ = writeln!(out, "planar = {}", self.planar);
        if let Some(path) = &self.classes {
            let _ = writeln!(out, "classes = {}", path.display());
        }
        out
    }

    pub fn class_table(&self) -> Result<ClassTable> {
        match &self.classes {
            Some(path) => ClassTable::load(path),
            None => Ok(ClassTable::default()),
        }
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    /// Labeled input plus densification samples.
    pub mesh: Mesh,
    pub grid: SparseVoxelGrid,
    pub field: AffinityField,
    pub graph: ClusterGraph,
    /// Flattened: one instance per vertex, members consistent with the column.
    pub segmentation: InstanceSegmentation,
    pub report: EvalReport,
}

/// Runs every stage on `mesh` with ground-truth `labels`. When `affinity` is
/// `None` an oracle field is generated from the labels; generated fields are
/// rounded the same way the affinity file format rounds them, so that the
/// in-memory run matches a run chained through files.
pub fn run_pipeline(
    mesh: &Mesh,
    labels: &LabelSet,
    cfg: &PipelineConfig,
    affinity: Option<&AffinityField>,
    observe: impl FnMut(&IterationStats, &ClusterGraph),
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let classes = cfg.class_table()?;
    let mut labeled = mesh.clone();
    labeled.apply_labels(labels)?;
    let spec = cfg.grid.fitted_to_mesh(&labeled);
    let dense = densify(&labeled, &spec, &cfg.densify)?;
    let grid = SparseVoxelGrid::build(&dense.positions(), &spec)?;
    let field = match affinity {
        Some(f) => {
            check_compatible(f.spec(), &spec)?;
            f.clone()
        }
        None => generate_oracle(&grid, &dense.instance_ids(), &cfg.oracle)?.quantized(),
    };
    let graph = cluster_graph(ClusterGraph::from_mesh(&dense, &grid)?, &field, observe)?;
    let mut seg = assemble(&graph, &labels.semantic, &field, &classes, &cfg.assemble)?;
    if cfg.planar {
        seg = add_planar_components(seg, &labels.semantic, &dense, &classes, &cfg.assemble)?;
    }
    let segmentation = seg.flattened();
    let report = evaluate(&segmentation, labels, &classes)?;
    Ok(PipelineOutput {
        mesh: dense,
        grid,
        field,
        graph,
        segmentation,
        report,
    })
}

/// Errors unless the field was produced for the same grid resolution.
pub fn check_compatible(field: &GridSpec, grid: &GridSpec) -> Result<()> {
    if field.extent != grid.extent
        || field.num_scales != grid.num_scales
        || (field.voxel_size - grid.voxel_size).abs() > 1e-12 * grid.voxel_size.max(1.0)
    {
        return Err(Error::Validation(format!(
            "affinity field grid (voxel_size={} extent={} scales={}) does not match (voxel_size={} extent={} scales={})",
            field.voxel_size, field.extent, field.num_scales, grid.voxel_size, grid.extent, grid.num_scales
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneConfig};

    #[test]
    fn config_round_trips_through_text() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# experiment\nseed = 7\nflip_probability = 0.05\nplanar = true\nnum_scales=3\n")
            .unwrap();
        assert_eq!(cfg.densify.seed, 7);
        assert_eq!(cfg.oracle.seed, 7);
        assert_eq!(cfg.grid.num_scales, 3);
        assert!(cfg.planar);
        let mut again = PipelineConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let mut cfg = PipelineConfig::default();
        let err = cfg.apply_text("voxel_size = 0.02\nvoxelsize = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(PipelineConfig::default().apply_text("extent = 1000").is_err());
        assert!(PipelineConfig::default()
            .apply_text("flip_probability = 2")
            .is_err());
        assert!(PipelineConfig::default().apply_text("seed = x").is_err());
        assert!(PipelineConfig::default().apply_text("seed").is_err());
    }

    #[test]
    fn noiseless_pipeline_is_perfect() {
        let scene = generate_scene(&SceneConfig {
            seed: 5,
            ..Default::default()
        });
        let out = run_pipeline(
            &scene.mesh,
            &scene.labels,
            &PipelineConfig::default(),
            None,
            |_, _| {},
        )
        .unwrap();
        assert_eq!(out.report.mean_ap, Some(1.0));
        assert_eq!(out.graph.nodes.len(), scene.num_objects + 1);
    }
}
