//! Sparse multi-scale voxelization and per-node occupancy counts.
//!
//! Scale 0 is the finest grid (`voxel_size` wide cells, `extent` cells per
//! axis). Each coarser scale halves the resolution, so a scale-`s` voxel
//! covers a `2^s`-wide block of finest voxels and its coordinate is the
//! scale-0 coordinate shifted right by `s` bits. A group of points occupies a
//! scale-`s` voxel when at least `4^s` of its points fall inside it.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};

/// Integer voxel coordinate packed as `i | j << 16 | k << 32`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelCoord(u64);

impl VoxelCoord {
    pub const fn new(i: u16, j: u16, k: u16) -> Self {
        VoxelCoord(i as u64 | (j as u64) << 16 | (k as u64) << 32)
    }

    pub const fn i(self) -> u16 {
        self.0 as u16
    }

    pub const fn j(self) -> u16 {
        (self.0 >> 16) as u16
    }

    pub const fn k(self) -> u16 {
        (self.0 >> 32) as u16
    }

    pub const fn axes(self) -> [u16; 3] {
        [self.i(), self.j(), self.k()]
    }

    pub const fn packed(self) -> u64 {
        self.0
    }

    /// Coordinate of the containing voxel `levels` scales coarser.
    pub const fn coarsen(self, levels: u32) -> Self {
        Self::new(self.i() >> levels, self.j() >> levels, self.k() >> levels)
    }

    /// The 6-neighbor in `dir`, or `None` if it falls outside `[0, bound)`.
    #[inline]
    pub fn neighbor(self, dir: Direction, bound: u32) -> Option<Self> {
        let mut a = self.axes();
        let axis = dir.axis();
        if dir.is_positive() {
            if a[axis] as u32 + 1 >= bound {
                return None;
            }
            a[axis] += 1;
        } else {
            a[axis] = a[axis].checked_sub(1)?;
        }
        Some(Self::new(a[0], a[1], a[2]))
    }

    /// Direction from `self` to `other` if the two are 6-adjacent.
    pub fn direction_to(self, other: Self) -> Option<Direction> {
        let a = self.axes();
        let b = other.axes();
        let mut found = None;
        for axis in 0..3 {
            match b[axis] as i32 - a[axis] as i32 {
                0 => {}
                d @ (1 | -1) if found.is_none() => {
                    found = Some(Direction::from_axis(axis, d > 0));
                }
                _ => return None,
            }
        }
        found
    }
}

impl std::fmt::Debug for VoxelCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.i(), self.j(), self.k())
    }
}

/// One of the six axis directions, in the order −x, +x, −y, +y, −z, +z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    NegX,
    PosX,
    NegY,
    PosY,
    NegZ,
    PosZ,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::NegX,
        Direction::PosX,
        Direction::NegY,
        Direction::PosY,
        Direction::NegZ,
        Direction::PosZ,
    ];

    pub const POSITIVE: [Direction; 3] = [Direction::PosX, Direction::PosY, Direction::PosZ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn axis(self) -> usize {
        self as usize / 2
    }

    pub const fn is_positive(self) -> bool {
        self as usize % 2 == 1
    }

    pub const fn opposite(self) -> Direction {
        Self::ALL[self as usize ^ 1]
    }

    pub const fn from_axis(axis: usize, positive: bool) -> Direction {
        Self::ALL[axis * 2 + positive as usize]
    }
}

/// Minimum number of a node's points that must fall in a scale-`s` voxel for
/// the node to occupy it.
pub const fn occupancy_threshold(scale: u32) -> u32 {
    1 << (2 * scale)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub voxel_size: f64,
    /// Voxels per axis at scale 0.
    pub extent: u32,
    pub num_scales: u32,
    pub origin: Vec3,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            voxel_size: 0.02,
            extent: 4096,
            num_scales: 2,
            origin: [0.0; 3],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::Config(format!(
                "voxel_size must be > 0, got {}",
                self.voxel_size
            )));
        }
        if !self.extent.is_power_of_two() || self.extent > 1 << 16 {
            return Err(Error::Config(format!(
                "extent must be a power of two no larger than 65536, got {}",
                self.extent
            )));
        }
        if self.num_scales == 0 || self.num_scales > self.extent.trailing_zeros() + 1 {
            return Err(Error::Config(format!(
                "num_scales must be in [1, {}], got {}",
                self.extent.trailing_zeros() + 1,
                self.num_scales
            )));
        }
        Ok(())
    }

    /// Same grid parameters with the origin at the component-wise minimum of
    /// `positions` minus one voxel.
    pub fn fitted_to(&self, positions: impl IntoIterator<Item = Vec3>) -> Self {
        let mut min = [f64::INFINITY; 3];
        for p in positions {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
            }
        }
        if min[0].is_infinite() {
            min = [0.0; 3];
        }
        Self {
            origin: min.map(|m| m - self.voxel_size),
            ..*self
        }
    }

    /// Origin fitted to the mesh's original vertices. Sampled vertices lie
    /// inside triangles, so they never change the bounds.
    pub fn fitted_to_mesh(&self, mesh: &Mesh) -> Self {
        self.fitted_to(
            mesh.vertices
                .iter()
                .filter(|v| v.origin == crate::mesh::VertexOrigin::Original)
                .map(|v| v.position),
        )
    }

    pub fn extent_at(&self, scale: u32) -> u32 {
        self.extent >> scale
    }

    pub fn coord_of(&self, p: Vec3) -> Result<VoxelCoord> {
        let mut c = [0u16; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            if !(f >= 0.0 && f < self.extent as f64) {
                return Err(Error::OutOfExtent {
                    axis: ['x', 'y', 'z'][a],
                    needed: if f.is_finite() {
                        f.abs() as u64 + 1
                    } else {
                        u64::MAX
                    },
                    extent: self.extent,
                });
            }
            c[a] = f as u16;
        }
        Ok(VoxelCoord::new(c[0], c[1], c[2]))
    }
}

/// Voxels of one scale in CSR layout: sorted voxel list, offsets into the
/// point list, and a hash index from coordinate to slot.
#[derive(Clone, Debug, Default)]
pub struct ScaleLevel {
    voxels: Vec<VoxelCoord>,
    offsets: Vec<u32>,
    points: Vec<u32>,
    index: FxHashMap<VoxelCoord, u32>,
}

impl ScaleLevel {
    pub fn voxels(&self) -> &[VoxelCoord] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn slot(&self, c: VoxelCoord) -> Option<usize> {
        self.index.get(&c).map(|&s| s as usize)
    }

    pub fn points_in_slot(&self, slot: usize) -> &[u32] {
        &self.points[self.offsets[slot] as usize..self.offsets[slot + 1] as usize]
    }

    pub fn points_in(&self, c: VoxelCoord) -> &[u32] {
        self.slot(c).map_or(&[], |s| self.points_in_slot(s))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VoxelCoord, &[u32])> + '_ {
        (0..self.voxels.len()).map(|s| (self.voxels[s], self.points_in_slot(s)))
    }
}

#[derive(Clone, Debug)]
pub struct SparseVoxelGrid {
    spec: GridSpec,
    point_coords: Vec<VoxelCoord>,
    scales: Vec<ScaleLevel>,
}

pub fn voxelize(mesh: &Mesh, spec: &GridSpec) -> Result<SparseVoxelGrid> {
    SparseVoxelGrid::build(&mesh.positions(), spec)
}

impl SparseVoxelGrid {
    pub fn build(positions: &[Vec3], spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let point_coords: Vec<VoxelCoord> = positions
            .par_iter()
            .map(|&p| spec.coord_of(p))
            .collect::<Result<_>>()?;
        let scales = (0..spec.num_scales)
            .map(|s| build_level(&point_coords, s))
            .collect();
        Ok(Self {
            spec: *spec,
            point_coords,
            scales,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn num_points(&self) -> usize {
        self.point_coords.len()
    }

    pub fn num_scales(&self) -> u32 {
        self.spec.num_scales
    }

    pub fn level(&self, scale: u32) -> &ScaleLevel {
        &self.scales[scale as usize]
    }

    pub fn coord(&self, point: u32, scale: u32) -> VoxelCoord {
        self.point_coords[point as usize].coarsen(scale)
    }

    /// Text dump, one line per occupied voxel: `<scale> <i> <j> <k> <count>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (s, level) in self.scales.iter().enumerate() {
            for (c, pts) in level.iter() {
                let _ = writeln!(out, "{s} {} {} {} {}", c.i(), c.j(), c.k(), pts.len());
            }
        }
        out
    }

    pub fn save_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.dump()).map_err(|e| Error::io(path, e))
    }
}

fn build_level(point_coords: &[VoxelCoord], scale: u32) -> ScaleLevel {
    let mut keyed: Vec<(VoxelCoord, u32)> = point_coords
        .par_iter()
        .enumerate()
        .map(|(i, c)| (c.coarsen(scale), i as u32))
        .collect();
    // pairs are unique, so unstable sort is still deterministic
    keyed.par_sort_unstable();
    let mut voxels = Vec::new();
    let mut offsets = Vec::new();
    let mut points = Vec::with_capacity(keyed.len());
    for (c, p) in keyed {
        if voxels.last() != Some(&c) {
            voxels.push(c);
            offsets.push(points.len() as u32);
        }
        points.push(p);
    }
    offsets.push(points.len() as u32);
    let mut index = FxHashMap::default();
    index.reserve(voxels.len());
    index.extend(voxels.iter().enumerate().map(|(s, &c)| (c, s as u32)));
    ScaleLevel {
        voxels,
        offsets,
        points,
        index,
    }
}

/// Per-scale point counts of one node, each scale sorted by coordinate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OccupancyCounts {
    scales: Vec<Vec<(VoxelCoord, u32)>>,
}

/// Occupancy counts of a point set.
pub fn occupancy(points: &[u32], grid: &SparseVoxelGrid) -> OccupancyCounts {
    OccupancyCounts::of_points(points, grid)
}

impl OccupancyCounts {
    pub fn of_points(points: &[u32], grid: &SparseVoxelGrid) -> Self {
        let scales = (0..grid.num_scales())
            .map(|s| {
                let mut coords: Vec<VoxelCoord> = points.iter().map(|&p| grid.coord(p, s)).collect();
                coords.sort_unstable();
                let mut counts: Vec<(VoxelCoord, u32)> = Vec::new();
                for c in coords {
                    match counts.last_mut() {
                        Some((last, n)) if *last == c => *n += 1,
                        _ => counts.push((c, 1)),
                    }
                }
                counts
            })
            .collect();
        Self { scales }
    }

    /// Counts of a single point.
    pub fn of_point(point: u32, grid: &SparseVoxelGrid) -> Self {
        Self {
            scales: (0..grid.num_scales())
                .map(|s| vec![(grid.coord(point, s), 1)])
                .collect(),
        }
    }

    pub fn num_scales(&self) -> u32 {
        self.scales.len() as u32
    }

    pub fn counts(&self, scale: u32) -> &[(VoxelCoord, u32)] {
        &self.scales[scale as usize]
    }

    pub fn count(&self, scale: u32, c: VoxelCoord) -> u32 {
        let level = &self.scales[scale as usize];
        level
            .binary_search_by_key(&c, |&(v, _)| v)
            .map_or(0, |i| level[i].1)
    }

    pub fn occupies(&self, scale: u32, c: VoxelCoord) -> bool {
        self.count(scale, c) >= occupancy_threshold(scale)
    }

    pub fn occupied(&self, scale: u32) -> impl Iterator<Item = VoxelCoord> + '_ {
        let t = occupancy_threshold(scale);
        self.scales[scale as usize]
            .iter()
            .filter(move |&&(_, n)| n >= t)
            .map(|&(c, _)| c)
    }

    pub fn occupied_count(&self, scale: u32) -> usize {
        self.occupied(scale).count()
    }

    pub fn total(&self, scale: u32) -> u64 {
        self.scales[scale as usize].iter().map(|&(_, n)| n as u64).sum()
    }

    /// Element-wise sum.
    pub fn merged(&self, other: &Self) -> Self {
        Self::merge_all([self, other])
    }

    /// Element-wise sum of any number of count maps.
    pub fn merge_all<'a>(parts: impl IntoIterator<Item = &'a Self>) -> Self {
        let parts: Vec<&Self> = parts.into_iter().collect();
        let num_scales = parts.first().map_or(0, |p| p.scales.len());
        let scales = (0..num_scales)
            .map(|s| {
                let mut all: Vec<(VoxelCoord, u32)> =
                    parts.iter().flat_map(|p| p.scales[s].iter().copied()).collect();
                if parts.len() > 1 {
                    all.sort_unstable_by_key(|&(c, _)| c);
                }
                let mut out: Vec<(VoxelCoord, u32)> = Vec::with_capacity(all.len());
                for (c, n) in all {
                    match out.last_mut() {
                        Some((last, m)) if *last == c => *m += n,
                        _ => out.push((c, n)),
                    }
                }
                out
            })
            .collect();
        Self { scales }
    }
}

/// Occupied voxels of a node at one scale, sorted.
fn occupied_list(occ: &OccupancyCounts, scale: u32) -> Vec<VoxelCoord> {
    occ.occupied(scale).collect()
}

/// Visits every pair `(p, dir, q)` with `p` occupied by `a`, `q` occupied by
/// `b` and `q` the 6-neighbor of `p` in `dir`. The visiting order depends only
/// on the contents of `a` and `b` (and which is passed first).
pub fn for_each_neighbor_pair(
    a: &OccupancyCounts,
    b: &OccupancyCounts,
    scale: u32,
    bound: u32,
    mut visit: impl FnMut(VoxelCoord, Direction, VoxelCoord),
) {
    let t = occupancy_threshold(scale);
    let ca = a.counts(scale);
    let cb = b.counts(scale);
    // walk the smaller side, probe the larger
    let a_smaller = ca.len() <= cb.len();
    let (walk, probe) = if a_smaller { (ca, cb) } else { (cb, ca) };
    for &(p, n) in walk {
        if n < t {
            continue;
        }
        for dir in Direction::ALL {
            let Some(q) = p.neighbor(dir, bound) else { continue };
            let hit = probe
                .binary_search_by_key(&q, |&(v, _)| v)
                .is_ok_and(|i| probe[i].1 >= t);
            if hit {
                if a_smaller {
                    visit(p, dir, q);
                } else {
                    visit(q, dir.opposite(), p);
                }
            }
        }
    }
}

/// All 6-adjacent pairs `(p, q)` with `p` occupied by `a` and `q` by `b` at `scale`.
pub fn neighbor_pairs(a: &OccupancyCounts, b: &OccupancyCounts, scale: u32) -> Vec<(VoxelCoord, VoxelCoord)> {
    let mut out = Vec::new();
    for_each_neighbor_pair(a, b, scale, u32::MAX, |p, _, q| out.push((p, q)));
    out.sort_unstable();
    out
}

/// Pairs of 6-adjacent voxels both occupied by `occ` at `scale`, each pair
/// reported once as `(p, dir, q)` with `dir` positive.
pub fn internal_pairs(
    occ: &OccupancyCounts,
    scale: u32,
    bound: u32,
) -> Vec<(VoxelCoord, Direction, VoxelCoord)> {
    let occupied = occupied_list(occ, scale);
    let mut out = Vec::new();
    for &p in &occupied {
        for dir in Direction::POSITIVE {
            if let Some(q) = p.neighbor(dir, bound) {
                if occupied.binary_search(&q).is_ok() {
                    out.push((p, dir, q));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_of(points: &[Vec3], spec: GridSpec) -> SparseVoxelGrid {
        SparseVoxelGrid::build(points, &spec).unwrap()
    }

    #[test]
    fn floor_arithmetic() {
        let g = grid_of(&[[0.05, 0.03, 0.0]], GridSpec::default());
        assert_eq!(g.coord(0, 0), VoxelCoord::new(2, 1, 0));
        assert_eq!(g.coord(0, 1), VoxelCoord::new(1, 0, 0));
    }

    #[test]
    fn nearby_points_share_a_voxel() {
        let g = grid_of(
            &[[0.011, 0.011, 0.011], [0.012, 0.011, 0.011]],
            GridSpec::default(),
        );
        assert_eq!(g.coord(0, 0), g.coord(1, 0));
        assert_eq!(g.level(0).len(), 1);
        assert_eq!(g.level(0).points_in(g.coord(0, 0)), &[0, 1]);
    }

    #[test]
    fn oversized_scene_is_rejected() {
        let spec = GridSpec::default().fitted_to([[0.0, 0.0, 0.0], [1.0, 82.0, 1.0]]);
        match SparseVoxelGrid::build(&[[0.0, 0.0, 0.0], [1.0, 82.0, 1.0]], &spec) {
            Err(Error::OutOfExtent {
                axis: 'y',
                extent: 4096,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        // 81 m fits
        let pts = [[0.0, 0.0, 0.0], [1.0, 81.0, 1.0]];
        let spec = GridSpec::default().fitted_to(pts);
        assert!(SparseVoxelGrid::build(&pts, &spec).is_ok());
    }

    #[test]
    fn fitted_origin_is_min_minus_one_voxel() {
        let spec = GridSpec::default().fitted_to([[1.0, 2.0, 3.0], [0.5, 4.0, 3.5]]);
        assert_eq!(spec.origin, [0.48, 1.98, 2.98]);
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            GridSpec {
                voxel_size: 0.0,
                ..Default::default()
            },
            GridSpec {
                extent: 1000,
                ..Default::default()
            },
            GridSpec {
                num_scales: 0,
                ..Default::default()
            },
        ] {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }

    #[test]
    fn occupancy_thresholds() {
        assert_eq!(occupancy_threshold(0), 1);
        assert_eq!(occupancy_threshold(1), 4);
        // five points in one scale-1 voxel (2x2x2 block of scale-0 voxels)
        let pts: Vec<Vec3> = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1]]
            .iter()
            .map(|c| c.map(|x: i32| x as f64 * 0.02 + 0.01))
            .collect();
        let g = grid_of(&pts, GridSpec::default());
        let single = occupancy(&[0], &g);
        assert!(single.occupies(0, VoxelCoord::new(0, 0, 0)));
        assert!(!single.occupies(1, VoxelCoord::new(0, 0, 0)));
        let three = occupancy(&[0, 1, 2], &g);
        assert_eq!(three.count(1, VoxelCoord::new(0, 0, 0)), 3);
        assert!(!three.occupies(1, VoxelCoord::new(0, 0, 0)));
        let four = occupancy(&[0, 1, 2, 3], &g);
        assert!(four.occupies(1, VoxelCoord::new(0, 0, 0)));
        assert_eq!(three.merged(&occupancy(&[3], &g)), four);
    }

    fn occ_at(coords: &[(u16, u16, u16)]) -> OccupancyCounts {
        let pts: Vec<Vec3> = coords
            .iter()
            .map(|&(i, j, k)| {
                [
                    i as f64 * 0.02 + 0.01,
                    j as f64 * 0.02 + 0.01,
                    k as f64 * 0.02 + 0.01,
                ]
            })
            .collect();
        let g = grid_of(
            &pts,
            GridSpec {
                num_scales: 1,
                ..Default::default()
            },
        );
        let idx: Vec<u32> = (0..pts.len() as u32).collect();
        occupancy(&idx, &g)
    }

    #[test]
    fn neighbor_pair_examples() {
        let a = occ_at(&[(0, 0, 0)]);
        assert_eq!(neighbor_pairs(&a, &occ_at(&[(1, 0, 0)]), 0).len(), 1);
        assert!(neighbor_pairs(&a, &occ_at(&[(1, 1, 0)]), 0).is_empty());
        let a2 = occ_at(&[(0, 0, 0), (0, 1, 0)]);
        let b2 = occ_at(&[(1, 0, 0)]);
        assert_eq!(
            neighbor_pairs(&a2, &b2, 0),
            vec![(VoxelCoord::new(0, 0, 0), VoxelCoord::new(1, 0, 0))]
        );
    }

    #[test]
    fn direction_roundtrip() {
        let c = VoxelCoord::new(5, 5, 5);
        for d in Direction::ALL {
            let n = c.neighbor(d, 4096).unwrap();
            assert_eq!(c.direction_to(n), Some(d));
            assert_eq!(n.neighbor(d.opposite(), 4096), Some(c));
        }
        assert_eq!(VoxelCoord::new(0, 0, 0).neighbor(Direction::NegX, 8), None);
        assert_eq!(VoxelCoord::new(7, 0, 0).neighbor(Direction::PosX, 8), None);
        assert_eq!(c.direction_to(VoxelCoord::new(6, 6, 5)), None);
        assert_eq!(c.direction_to(c), None);
    }

    fn brute_pairs(a: &OccupancyCounts, b: &OccupancyCounts, s: u32) -> Vec<(VoxelCoord, VoxelCoord)> {
        let mut out = Vec::new();
        for p in a.occupied(s) {
            for q in b.occupied(s) {
                let (pa, qa) = (p.axes(), q.axes());
                let diff: i32 = (0..3).map(|x| (pa[x] as i32 - qa[x] as i32).abs()).sum();
                if diff == 1 {
                    out.push((p, q));
                }
            }
        }
        out.sort_unstable();
        out
    }

    proptest! {
        #[test]
        fn partition_and_shift(pts in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0), 1..200)) {
            let pts: Vec<Vec3> = pts.into_iter().map(|(x, y, z)| [x, y, z]).collect();
            let spec = GridSpec { num_scales: 3, ..Default::default() }.fitted_to(pts.iter().copied());
            let g = grid_of(&pts, spec);
            for s in 0..3 {
                let mut seen: Vec<u32> = g.level(s).iter().flat_map(|(c, p)| {
                    p.iter().for_each(|&i| assert_eq!(g.coord(i, s), c));
                    p.to_vec()
                }).collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..pts.len() as u32).collect::<Vec<_>>());
                for i in 0..pts.len() as u32 {
                    let c0 = g.coord(i, 0).axes();
                    prop_assert_eq!(g.coord(i, s).axes(), c0.map(|x| x >> s));
                }
            }
        }

        #[test]
        fn additivity_and_pair_symmetry(
            pts in prop::collection::vec((0u16..6, 0u16..6, 0u16..6), 2..120),
            split in 0usize..120,
        ) {
            let spec = GridSpec { num_scales: 2, ..Default::default() };
            let pos: Vec<Vec3> = pts.iter().map(|&(i, j, k)| [i, j, k].map(|c| c as f64 * 0.02 + 0.01)).collect();
            let g = grid_of(&pos, spec);
            let split = split % pts.len();
            let all: Vec<u32> = (0..pts.len() as u32).collect();
            let (a, b) = all.split_at(split);
            let oa = occupancy(a, &g);
            let ob = occupancy(b, &g);
            prop_assert_eq!(oa.merged(&ob), occupancy(&all, &g));
            for s in 0..2 {
                prop_assert_eq!(oa.total(s) + ob.total(s), pts.len() as u64);
                let ab = neighbor_pairs(&oa, &ob, s);
                let mut ba: Vec<_> = neighbor_pairs(&ob, &oa, s).into_iter().map(|(p, q)| (q, p)).collect();
                ba.sort_unstable();
                prop_assert_eq!(&ab, &ba);
                prop_assert_eq!(ab, brute_pairs(&oa, &ob, s));
            }
        }
    }
}
