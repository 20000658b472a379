//! Multi-scale 6-neighbor affinity fields.
//!
//! Every voxel that contains points at a scale carries six directional scores
//! (−x, +x, −y, +y, −z, +z), each in `[0, 1]` or [`IGNORE`]. A voxel pair's
//! score is fused from the two directed scores stored on either side.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::voxel::{occupancy_threshold, Direction, GridSpec, SparseVoxelGrid, VoxelCoord};

/// Marks a directed score with no valid value.
pub const IGNORE: f32 = -1.0;

pub type Scores = [f32; 6];

pub fn is_ignore(score: f32) -> bool {
    score < 0.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityField {
    spec: GridSpec,
    scales: Vec<FxHashMap<VoxelCoord, Scores>>,
}

impl AffinityField {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            scales: vec![FxHashMap::default(); spec.num_scales as usize],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn num_scales(&self) -> u32 {
        self.scales.len() as u32
    }

    pub fn scores(&self, scale: u32, voxel: VoxelCoord) -> Option<&Scores> {
        self.scales[scale as usize].get(&voxel)
    }

    /// Directed score stored at `voxel` toward `dir`; `IGNORE` if absent.
    #[inline]
    pub fn directed(&self, scale: u32, voxel: VoxelCoord, dir: Direction) -> f32 {
        self.scales[scale as usize]
            .get(&voxel)
            .map_or(IGNORE, |s| s[dir.index()])
    }

    /// Fused score of the pair `(p, p + dir)`: the mean of the two directed
    /// scores that are not `IGNORE`, or `None` when both are.
    #[inline]
    pub fn pair_score(&self, scale: u32, p: VoxelCoord, dir: Direction, q: VoxelCoord) -> Option<f64> {
        let a = self.directed(scale, p, dir);
        let b = self.directed(scale, q, dir.opposite());
        match (is_ignore(a), is_ignore(b)) {
            (false, false) => Some((a as f64 + b as f64) / 2.0),
            (false, true) => Some(a as f64),
            (true, false) => Some(b as f64),
            (true, true) => None,
        }
    }

    pub fn insert(&mut self, scale: u32, voxel: VoxelCoord, scores: Scores) {
        self.scales[scale as usize].insert(voxel, scores);
    }

    pub fn len(&self, scale: u32) -> usize {
        self.scales[scale as usize].len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.iter().all(|s| s.is_empty())
    }

    /// Voxels of one scale in coordinate order.
    pub fn sorted_voxels(&self, scale: u32) -> Vec<(VoxelCoord, Scores)> {
        let mut v: Vec<_> = self.scales[scale as usize]
            .iter()
            .map(|(&c, &s)| (c, s))
            .collect();
        v.sort_unstable_by_key(|&(c, _)| c);
        v
    }

    /// Copy with every score rounded exactly as the text format stores it.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for level in &mut out.scales {
            for scores in level.values_mut() {
                for s in scores.iter_mut() {
                    if !is_ignore(*s) {
                        *s = format!("{:.6}", s).parse().expect("formatted float");
                    }
                }
            }
        }
        out
    }

    /// Reads the text format:
    ///
    /// ```text
    /// # voxel_size=<m> extent=<n> scales=<k>
    /// <scale> <i> <j> <k> <a-x> <a+x> <a-y> <a+y> <a-z> <a+z>
    /// ```
    ///
    /// Scores are in `[0, 1]` or `-1` for ignore. Directions that point
    /// outside the grid are forced to ignore.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut field: Option<AffinityField> = None;
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::format_at_line(lineno, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if field.is_none() {
                    field = Some(Self::new(parse_header(rest, lineno)?));
                }
                continue;
            }
            let field = field
                .as_mut()
                .ok_or_else(|| Error::format_at_line(lineno, "data before `# voxel_size=...` header"))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 10 {
                return Err(Error::format_at_line(
                    lineno,
                    format!("expected 10 fields, found {}", tokens.len()),
                ));
            }
            let int = |t: &str| -> Result<u32> {
                t.parse()
                    .map_err(|_| Error::format_at_line(lineno, format!("invalid integer `{t}`")))
            };
            let scale = int(tokens[0])?;
            if scale >= field.num_scales() {
                return Err(Error::Validation(format!(
                    "line {lineno}: scale {scale} outside [0, {})",
                    field.num_scales()
                )));
            }
            let bound = field.spec.extent_at(scale);
            let mut ijk = [0u16; 3];
            for a in 0..3 {
                let c = int(tokens[1 + a])?;
                if c >= bound {
                    return Err(Error::Validation(format!(
                        "line {lineno}: coordinate {c} outside [0, {bound}) at scale {scale}"
                    )));
                }
                ijk[a] = c as u16;
            }
            let voxel = VoxelCoord::new(ijk[0], ijk[1], ijk[2]);
            let mut scores = [IGNORE; 6];
            for (d, s) in scores.iter_mut().enumerate() {
                let t = tokens[4 + d];
                let v: f32 = t
                    .parse()
                    .map_err(|_| Error::format_at_line(lineno, format!("invalid score `{t}`")))?;
                *s = if v == IGNORE {
                    IGNORE
                } else if (0.0..=1.0).contains(&v) {
                    v
                } else {
                    return Err(Error::Validation(format!(
                        "line {lineno}: score {v} outside [0, 1]"
                    )));
                };
                if voxel.neighbor(Direction::ALL[d], bound).is_none() {
                    *s = IGNORE;
                }
            }
            field.insert(scale, voxel, scores);
        }
        field.ok_or_else(|| Error::format_at_line(1, "missing `# voxel_size=...` header"))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# voxel_size={} extent={} scales={}",
            self.spec.voxel_size, self.spec.extent, self.spec.num_scales
        )?;
        let mut line = String::new();
        for s in 0..self.num_scales() {
            for (c, scores) in self.sorted_voxels(s) {
                line.clear();
                let _ = write!(line, "{s} {} {} {}", c.i(), c.j(), c.k());
                for v in scores {
                    if is_ignore(v) {
                        line.push_str(" -1");
                    } else {
                        let _ = write!(line, " {v:.6}");
                    }
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

fn parse_header(rest: &str, lineno: usize) -> Result<GridSpec> {
    let mut spec = GridSpec::default();
    let (mut size, mut extent, mut scales) = (false, false, false);
    for kv in rest.split_whitespace() {
        let Some((k, v)) = kv.split_once('=') else {
            continue;
        };
        let bad = || Error::format_at_line(lineno, format!("invalid header value `{kv}`"));
        match k {
            "voxel_size" => {
                spec.voxel_size = v.parse().map_err(|_| bad())?;
                size = true;
            }
            "extent" => {
                spec.extent = v.parse().map_err(|_| bad())?;
                extent = true;
            }
            "scales" => {
                spec.num_scales = v.parse().map_err(|_| bad())?;
                scales = true;
            }
            _ => {}
        }
    }
    if !(size && extent && scales) {
        return Err(Error::format_at_line(
            lineno,
            "header must define voxel_size, extent and scales",
        ));
    }
    spec.validate()?;
    Ok(spec)
}

/// Per-voxel instance histogram: sorted `(instance, count)` plus whether any
/// point is unannotated.
struct VoxelStats {
    total: u64,
    histogram: Vec<(u32, u64)>,
    unannotated: bool,
}

fn voxel_stats(points: &[u32], instances: &[u32]) -> VoxelStats {
    let mut ids: Vec<u32> = points.iter().map(|&p| instances[p as usize]).collect();
    ids.sort_unstable();
    let mut histogram: Vec<(u32, u64)> = Vec::new();
    for id in ids {
        match histogram.last_mut() {
            Some((last, n)) if *last == id => *n += 1,
            _ => histogram.push((id, 1)),
        }
    }
    VoxelStats {
        total: points.len() as u64,
        unannotated: histogram.first().is_some_and(|&(id, _)| id == 0),
        histogram,
    }
}

/// Normalized histograms compared as exact integer ratios.
fn same_distribution(a: &VoxelStats, b: &VoxelStats) -> bool {
    a.histogram.len() == b.histogram.len()
        && a.histogram
            .iter()
            .zip(&b.histogram)
            .all(|(&(ia, na), &(ib, nb))| ia == ib && na * b.total == nb * a.total)
}

fn supervision_score(a: &VoxelStats, b: &VoxelStats, threshold: u64) -> f32 {
    if a.total < threshold || b.total < threshold || a.unannotated || b.unannotated {
        IGNORE
    } else if same_distribution(a, b) {
        1.0
    } else {
        0.0
    }
}

/// Ground-truth affinity from per-point instance ids (`instances[p]`, 0 =
/// unannotated). A pair of 6-adjacent voxels scores 1 when both hold at least
/// `4^s` points and their instance distributions are equal, 0 when they
/// differ, and `IGNORE` when a voxel is below the count threshold or holds an
/// unannotated point.
pub fn generate_supervision(grid: &SparseVoxelGrid, instances: &[u32]) -> Result<AffinityField> {
    if instances.len() != grid.num_points() {
        return Err(Error::Alignment {
            expected: grid.num_points(),
            found: instances.len(),
        });
    }
    let spec = *grid.spec();
    let mut field = AffinityField::new(spec);
    for s in 0..spec.num_scales {
        let level = grid.level(s);
        let bound = spec.extent_at(s);
        let threshold = occupancy_threshold(s) as u64;
        let stats: Vec<VoxelStats> = (0..level.len())
            .into_par_iter()
            .map(|slot| voxel_stats(level.points_in_slot(slot), instances))
            .collect();
        let entries: Vec<(VoxelCoord, Scores)> = (0..level.len())
            .into_par_iter()
            .map(|slot| {
                let p = level.voxels()[slot];
                let mut scores = [IGNORE; 6];
                for dir in Direction::ALL {
                    let Some(q) = p.neighbor(dir, bound) else { continue };
                    if let Some(qs) = level.slot(q) {
                        scores[dir.index()] = supervision_score(&stats[slot], &stats[qs], threshold);
                    }
                }
                (p, scores)
            })
            .collect();
        field.scales[s as usize].extend(entries);
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub flip_probability: f64,
    pub jitter_stddev: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            flip_probability: 0.0,
            jitter_stddev: 0.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!(
                "flip_probability must be in [0, 1], got {}",
                self.flip_probability
            )));
        }
        if !(self.jitter_stddev >= 0.0 && self.jitter_stddev.is_finite()) {
            return Err(Error::Config(format!(
                "jitter_stddev must be >= 0, got {}",
                self.jitter_stddev
            )));
        }
        Ok(())
    }
}

/// RNG stream of the voxel pair `(p, p + dir)` with `dir` positive.
fn pair_stream(scale: u32, p: VoxelCoord, dir: Direction) -> u64 {
    (p.packed() << 8) | ((dir.axis() as u64) << 6) | scale as u64
}

/// A synthetic "predicted" field: supervision with each voxel pair
/// independently flipped (1 ↔ 0) with `flip_probability`, then Gaussian
/// jitter clamped to `[0, 1]`. Ignored pairs between existing voxels become
/// 0.5. Both directed slots of a pair receive the same value.
pub fn generate_oracle(
    grid: &SparseVoxelGrid,
    instances: &[u32],
    cfg: &OracleConfig,
) -> Result<AffinityField> {
    cfg.validate()?;
    let supervision = generate_supervision(grid, instances)?;
    Ok(perturb(&supervision, grid, cfg))
}

/// Applies the oracle perturbation to an existing field over `grid`'s voxels.
pub fn perturb(field: &AffinityField, grid: &SparseVoxelGrid, cfg: &OracleConfig) -> AffinityField {
    let spec = *field.spec();
    let jitter =
        (cfg.jitter_stddev > 0.0).then(|| Normal::new(0.0, cfg.jitter_stddev).expect("validated stddev"));
    let mut out = AffinityField::new(spec);
    for s in 0..spec.num_scales {
        let level = grid.level(s);
        let bound = spec.extent_at(s);
        let entries: Vec<(VoxelCoord, Scores)> = level
            .voxels()
            .par_iter()
            .map(|&p| {
                let mut scores = [IGNORE; 6];
                for dir in Direction::ALL {
                    let Some(q) = p.neighbor(dir, bound) else { continue };
                    if level.slot(q).is_none() {
                        continue;
                    }
                    // both sides derive the value from the pair's lower voxel
                    let (lo, pos) = if dir.is_positive() {
                        (p, dir)
                    } else {
                        (q, dir.opposite())
                    };
                    let stored = field.directed(s, lo, pos);
                    scores[dir.index()] = if is_ignore(stored) {
                        0.5
                    } else {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        rng.set_stream(pair_stream(s, lo, pos));
                        let mut v = stored as f64;
                        if rng.random::<f64>() < cfg.flip_probability {
                            v = 1.0 - v;
                        }
                        if let Some(normal) = &jitter {
                            v += normal.sample(&mut rng);
                        }
                        v.clamp(0.0, 1.0) as f32
                    };
                }
                (p, scores)
            })
            .collect();
        out.scales[s as usize].extend(entries);
    }
    out
}

/// Text summary used by the CLI.
pub fn describe(field: &AffinityField) -> String {
    let mut out = String::new();
    for s in 0..field.num_scales() {
        let _ = write!(out, "scale {s}: {} voxels; ", field.len(s));
    }
    out
}
