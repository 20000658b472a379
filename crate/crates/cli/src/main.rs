//! `affseg`: composable subcommands over mesh, label, affinity and instance files.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 when an
//! input file is unreadable, malformed or inconsistent.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affseg::affinity::{describe, generate_oracle, generate_supervision};
use affseg::cluster::{cluster_graph, ClusterGraph, ClusterNode, IterationStats};
use affseg::densify::densify;
use affseg::instance::{add_planar_components, assemble, load_semantics, InstanceSegmentation};
use affseg::pipeline::check_compatible;
use affseg::ply::{write_mesh_as, PlyFormat};
use affseg::{
    evaluate, run_pipeline, AffinityField, ClassTable, EvalReport, GridSpec, LabelSet, Mesh, PipelineConfig,
    SparseVoxelGrid,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nformats: mesh=ply-1.0 labels=1 affinity=1 instances=1 clusters=1 config=1"
);

#[derive(Parser)]
#[command(name = "affseg", version = VERSION, about = "Affinity-driven 3D instance segmentation of meshes")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// `key = value` settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    voxel_size: Option<f64>,
    #[arg(long, global = true)]
    extent: Option<u32>,
    #[arg(long, global = true)]
    num_scales: Option<u32>,
    #[arg(long, global = true)]
    samples_per_triangle: Option<u32>,
    #[arg(long, global = true)]
    min_span_voxels: Option<u32>,
    /// Seed for densification and oracle noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    flip_probability: Option<f64>,
    #[arg(long, global = true)]
    jitter_stddev: Option<f64>,
    #[arg(long, global = true)]
    min_instance_points: Option<usize>,
    #[arg(long, global = true)]
    min_planar_points: Option<usize>,
    #[arg(long, global = true)]
    planar_confidence: Option<f64>,
    /// Class table (`<id> <name> <is_instance> <is_planar>` per line).
    #[arg(long, global = true)]
    classes: Option<PathBuf>,
    /// Also add connected components of planar classes as instances.
    #[arg(long, global = true)]
    planar: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Add random samples inside triangles spanning several voxels.
    Densify {
        #[arg(long)]
        mesh: PathBuf,
        /// Labels to attach first, so samples inherit them.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Ascii)]
        format: Format,
    },
    /// Write the occupied voxels of every scale as `<scale> <i> <j> <k> <count>`.
    Voxelize {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground-truth affinity from instance labels.
    GenAffinity {
        #[arg(long)]
        mesh: PathBuf,
        /// Needed when the mesh carries no labels.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground-truth affinity with seeded flips and jitter.
    OracleAffinity {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contract the mesh graph; optionally assemble instances right away.
    #[command(group = clap::ArgGroup::new("output").required(true).multiple(true).args(["out", "clusters"]))]
    Cluster {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        affinity: PathBuf,
        /// Per-vertex semantic class ids (first column), original vertices only.
        #[arg(long, requires = "out")]
        semantics: Option<PathBuf>,
        /// Instance file.
        #[arg(long, requires = "semantics")]
        out: Option<PathBuf>,
        /// Per-vertex cluster id file.
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Instances from a cluster file.
    Assemble {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        affinity: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        semantics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class AP at IoU 0.5.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Also write `<class_id> <AP>` lines here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Densify, voxelize, oracle affinity, cluster, assemble and evaluate.
    Pipeline {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Use this field instead of an oracle.
        #[arg(long)]
        affinity: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

impl From<Format> for PlyFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Ascii => PlyFormat::Ascii,
            Format::BinaryLittleEndian => PlyFormat::BinaryLittleEndian,
            Format::BinaryBigEndian => PlyFormat::BinaryBigEndian,
        }
    }
}

enum Failure {
    Usage(String),
    Data(affseg::Error),
}

impl From<affseg::Error> for Failure {
    fn from(e: affseg::Error) -> Self {
        match e {
            affseg::Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn settings(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    let mut set = |key: &str, value: Option<String>| match value {
        Some(v) => cfg.set(key, &v),
        None => Ok(()),
    };
    set("voxel_size", o.voxel_size.map(|v| v.to_string()))?;
    set("extent", o.extent.map(|v| v.to_string()))?;
    set("num_scales", o.num_scales.map(|v| v.to_string()))?;
    set(
        "samples_per_triangle",
        o.samples_per_triangle.map(|v| v.to_string()),
    )?;
    set("min_span_voxels", o.min_span_voxels.map(|v| v.to_string()))?;
    set("seed", o.seed.map(|v| v.to_string()))?;
    set("flip_probability", o.flip_probability.map(|v| v.to_string()))?;
    set("jitter_stddev", o.jitter_stddev.map(|v| v.to_string()))?;
    set(
        "min_instance_points",
        o.min_instance_points.map(|v| v.to_string()),
    )?;
    set("min_planar_points", o.min_planar_points.map(|v| v.to_string()))?;
    set("planar_confidence", o.planar_confidence.map(|v| v.to_string()))?;
    set("classes", o.classes.as_ref().map(|p| p.display().to_string()))?;
    if o.planar {
        cfg.planar = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let cfg = settings(&cli)?;
    match cli.command {
        Command::Densify {
            mesh,
            labels,
            out,
            format,
        } => {
            let mut mesh = Mesh::load(&mesh)?;
            if let Some(path) = labels {
                let labels = LabelSet::load(path, mesh.original_count())?;
                mesh.apply_labels(&labels)?;
            }
            let spec = cfg.grid.fitted_to_mesh(&mesh);
            let dense = densify(&mesh, &spec, &cfg.densify)?;
            eprintln!(
                "densify: {} vertices, {} added, {} edges",
                dense.len(),
                dense.len() - mesh.len(),
                dense.edges.len()
            );
            write_mesh_as(&out, &dense, &cfg.densify.header_comments(), format.into())?;
        }
        Command::Voxelize { mesh, out } => {
            let mesh = Mesh::load(&mesh)?;
            let grid = build_grid(&mesh, &cfg.grid)?;
            for s in 0..grid.num_scales() {
                eprintln!("scale {s}: {} occupied voxels", grid.level(s).len());
            }
            grid.save_dump(&out)?;
        }
        Command::GenAffinity { mesh, labels, out } => {
            let (mesh, instances) = labeled_mesh(&mesh, labels.as_deref())?;
            let grid = build_grid(&mesh, &cfg.grid)?;
            let field = generate_supervision(&grid, &instances)?;
            eprint!("{}", describe(&field));
            field.write(&out)?;
        }
        Command::OracleAffinity { mesh, labels, out } => {
            let (mesh, instances) = labeled_mesh(&mesh, labels.as_deref())?;
            let grid = build_grid(&mesh, &cfg.grid)?;
            let field = generate_oracle(&grid, &instances, &cfg.oracle)?;
            eprint!("{}", describe(&field));
            field.write(&out)?;
        }
        Command::Cluster {
            mesh,
            affinity,
            semantics,
            out,
            clusters,
        } => {
            let mesh = Mesh::load(&mesh)?;
            let (grid, field) = grid_for_field(&mesh, &affinity)?;
            let graph = cluster_graph(ClusterGraph::from_mesh(&mesh, &grid)?, &field, report_iteration)?;
            eprintln!("cluster: {} clusters", graph.nodes.len());
            if let Some(path) = clusters {
                save_clusters(&path, &graph)?;
            }
            if let (Some(semantics), Some(out)) = (semantics, out) {
                let seg = instances(&cfg, &mesh, &graph, &semantics, &field)?;
                seg.save(out)?;
            }
        }
        Command::Assemble {
            mesh,
            affinity,
            clusters,
            semantics,
            out,
        } => {
            let mesh = Mesh::load(&mesh)?;
            let (grid, field) = grid_for_field(&mesh, &affinity)?;
            let graph = load_clusters(&clusters, &grid)?;
            let seg = instances(&cfg, &mesh, &graph, &semantics, &field)?;
            seg.save(out)?;
        }
        Command::Evaluate { pred, labels, dump } => {
            let pred = InstanceSegmentation::load(pred)?;
            let labels = LabelSet::load(labels, pred.point_instance.len())?;
            let report = evaluate(&pred, &labels, &cfg.class_table()?)?;
            print_report(&report, dump.as_deref())?;
        }
        Command::Pipeline {
            mesh,
            labels,
            affinity,
            out,
            dump,
        } => {
            let mesh = Mesh::load(&mesh)?;
            let labels = LabelSet::load(labels, mesh.original_count())?;
            let field = match affinity {
                Some(path) => Some(AffinityField::read(path)?),
                None => None,
            };
            let result = run_pipeline(&mesh, &labels, &cfg, field.as_ref(), report_iteration)?;
            eprintln!(
                "pipeline: {} vertices after densification, {} clusters, {} instances",
                result.mesh.len(),
                result.graph.nodes.len(),
                result.segmentation.instances.len()
            );
            if let Some(path) = out {
                result.segmentation.save(path)?;
            }
            print_report(&result.report, dump.as_deref())?;
        }
    }
    Ok(())
}

fn report_iteration(stats: &IterationStats, _: &ClusterGraph) {
    eprintln!("{stats}");
}

fn build_grid(mesh: &Mesh, spec: &GridSpec) -> CliResult<SparseVoxelGrid> {
    Ok(SparseVoxelGrid::build(
        &mesh.positions(),
        &spec.fitted_to_mesh(mesh),
    )?)
}

/// Mesh plus per-vertex instance ids, from the mesh itself or a label file
/// covering its original vertices.
fn labeled_mesh(path: &Path, labels: Option<&Path>) -> CliResult<(Mesh, Vec<u32>)> {
    let mut mesh = Mesh::load(path)?;
    match labels {
        Some(labels) => {
            let labels = LabelSet::load(labels, mesh.original_count())?;
            mesh.apply_labels(&labels)?;
        }
        None if mesh.has_labels() => {}
        None => {
            return Err(Failure::Usage(format!(
                "{} carries no labels; pass --labels",
                path.display()
            )))
        }
    }
    let instances = mesh.instance_ids();
    Ok((mesh, instances))
}

/// Reads a field and voxelizes the mesh on the field's grid.
fn grid_for_field(mesh: &Mesh, affinity: &Path) -> CliResult<(SparseVoxelGrid, AffinityField)> {
    let field = AffinityField::read(affinity)?;
    let spec = field.spec().fitted_to_mesh(mesh);
    check_compatible(field.spec(), &spec)?;
    let grid = SparseVoxelGrid::build(&mesh.positions(), &spec)?;
    Ok((grid, field))
}

fn instances(
    cfg: &PipelineConfig,
    mesh: &Mesh,
    graph: &ClusterGraph,
    semantics: &Path,
    field: &AffinityField,
) -> CliResult<InstanceSegmentation> {
    let classes: ClassTable = cfg.class_table()?;
    let semantics = load_semantics(semantics, mesh.original_count())?;
    let mut seg = assemble(graph, &semantics, field, &classes, &cfg.assemble)?;
    if cfg.planar {
        seg = add_planar_components(seg, &semantics, mesh, &classes, &cfg.assemble)?;
    }
    Ok(seg.flattened())
}

/// One line per vertex: the id (smallest member) of its cluster.
fn save_clusters(path: &Path, graph: &ClusterGraph) -> CliResult<()> {
    let mut text = String::new();
    for id in graph.point_labels() {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Failure::Data(io_error(path, e)))
}

fn load_clusters(path: &Path, grid: &SparseVoxelGrid) -> CliResult<ClusterGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(io_error(path, e)))?;
    let mut groups: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
    let mut count = 0u32;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label: u32 = line.parse().map_err(|_| {
            Failure::Data(affseg::Error::Format {
                location: format!("{}: line {}", path.display(), n + 1),
                message: format!("invalid cluster id `{line}`"),
            })
        })?;
        groups.entry(label).or_default().push(count);
        count += 1;
    }
    if count as usize != grid.num_points() {
        return Err(Failure::Data(affseg::Error::Alignment {
            expected: grid.num_points(),
            found: count as usize,
        }));
    }
    let nodes = groups
        .into_values()
        .map(|members| ClusterNode::from_members(members, grid))
        .collect::<affseg::Result<Vec<_>>>()?;
    Ok(ClusterGraph::new(nodes, [])?)
}

fn io_error(path: &Path, source: std::io::Error) -> affseg::Error {
    affseg::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn print_report(report: &EvalReport, dump: Option<&Path>) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(report.table().as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| Failure::Data(io_error(Path::new("<stdout>"), e)))?;
    if let Some(path) = dump {
        std::fs::write(path, report.dump()).map_err(|e| Failure::Data(io_error(path, e)))?;
    }
    Ok(())
}
