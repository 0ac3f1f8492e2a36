//! Uniform grid of cuboid districts over the dataset, ribbon registration,
//! and shell-filling classification of districts against a selector.

use std::collections::VecDeque;

use fixedbitset::FixedBitSet;
use glam::{DVec3, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Dataset, PathId};
use crate::selector::WorldShape;

pub type CellCoord = [u32; 3];

/// Upper bound on the mean number of ribbons registered per district when
/// the cell size is derived automatically.
pub const MAX_MEAN_RIBBONS_PER_CELL: f64 = 256.0;
const DEFAULT_CELLS_PER_DIAGONAL: f64 = 64.0;

/// Placement and resolution of the grid. Cell `(i, j, k)` covers
/// `[origin + (i, j, k) * cell_size, origin + (i + 1, j + 1, k + 1) * cell_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: DVec3,
    pub cell_size: DVec3,
    pub dims: [u32; 3],
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn linear(&self, c: CellCoord) -> usize {
        let [nx, ny, _] = self.dims.map(|d| d as usize);
        c[0] as usize + nx * (c[1] as usize + ny * c[2] as usize)
    }

    pub fn coord(&self, linear: usize) -> CellCoord {
        let [nx, ny, _] = self.dims.map(|d| d as usize);
        [(linear % nx) as u32, ((linear / nx) % ny) as u32, (linear / (nx * ny)) as u32]
    }

    pub fn cell_bounds(&self, c: CellCoord) -> (DVec3, DVec3) {
        let lo = self.origin + self.cell_size * DVec3::new(c[0] as f64, c[1] as f64, c[2] as f64);
        (lo, lo + self.cell_size)
    }

    /// Unclamped cell index containing `p` along each axis.
    pub fn cell_index(&self, p: DVec3) -> [i64; 3] {
        let f = ((p - self.origin) / self.cell_size).floor();
        [f.x as i64, f.y as i64, f.z as i64]
    }

    pub fn clamp_index(&self, idx: [i64; 3]) -> CellCoord {
        std::array::from_fn(|k| idx[k].clamp(0, self.dims[k] as i64 - 1) as u32)
    }

    pub fn bounds(&self) -> (DVec3, DVec3) {
        let d = DVec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64);
        (self.origin, self.origin + self.cell_size * d)
    }

    pub fn is_empty(&self) -> bool {
        self.cell_count() == 0
    }
}

/// A ribbon by path and position in the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RibbonRef {
    pub path_id: PathId,
    pub index: u32,
}

/// Non-degenerate ribbons of a dataset, numbered in path order.
#[derive(Debug, Clone, Default)]
pub struct RibbonTable {
    pub refs: Vec<RibbonRef>,
    pub starts: Vec<Vec3>,
    pub ends: Vec<Vec3>,
}

impl RibbonTable {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut table = RibbonTable::default();
        for path in &dataset.paths {
            for (i, w) in path.positions.windows(2).enumerate() {
                if w[0] == w[1] {
                    continue;
                }
                table.refs.push(RibbonRef { path_id: path.id, index: i as u32 });
                table.starts.push(w[0]);
                table.ends.push(w[1]);
            }
        }
        table
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn segment(&self, id: u32) -> (DVec3, DVec3) {
        (self.starts[id as usize].as_dvec3(), self.ends[id as usize].as_dvec3())
    }

    fn aabb(&self, id: usize) -> (DVec3, DVec3) {
        let (a, b) = (self.starts[id].as_dvec3(), self.ends[id].as_dvec3());
        (a.min(b), a.max(b))
    }
}

/// Cell edge derived from the dataset: the bounds diagonal split into 64,
/// shrunk until the mean registration count per cell is at most 256.
pub fn default_cell_size(dataset: &Dataset) -> DVec3 {
    let Some(bounds) = dataset.bounds else {
        return DVec3::ONE;
    };
    let extent = bounds.extent().as_dvec3();
    let diag = extent.length();
    let mut edge = if diag > 0.0 { diag / DEFAULT_CELLS_PER_DIAGONAL } else { 1.0 };
    let ribbons = dataset.ribbon_count() as f64;
    for _ in 0..64 {
        let cells: f64 = (0..3).map(|k| (extent[k] / edge).floor() + 3.0).product();
        if ribbons / cells <= MAX_MEAN_RIBBONS_PER_CELL || cells > 1.0e8 {
            break;
        }
        edge *= 0.8;
    }
    DVec3::splat(edge)
}

/// Sets of district coordinates, each sorted in linear cell order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DistrictClassification {
    pub inside: Vec<CellCoord>,
    pub border: Vec<CellCoord>,
}

/// Work done by each classification phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassifyStats {
    pub march_steps: usize,
    pub shell_cells: usize,
    pub fill_cells: usize,
    /// Cells the closing sweep had to add. Zero whenever the shell is
    /// hermetic inside the grid.
    pub recovered_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarchDirection {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl MarchDirection {
    fn step(self) -> [i64; 3] {
        match self {
            MarchDirection::PosX => [1, 0, 0],
            MarchDirection::NegX => [-1, 0, 0],
            MarchDirection::PosY => [0, 1, 0],
            MarchDirection::NegY => [0, -1, 0],
            MarchDirection::PosZ => [0, 0, 1],
            MarchDirection::NegZ => [0, 0, -1],
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistrictGrid {
    pub spec: GridSpec,
    offsets: Vec<usize>,
    entries: Vec<u32>,
    ribbons: RibbonTable,
}

/// Builds the grid over the dataset bounds padded by one cell on each side
/// and registers each ribbon in every cell its bounding box overlaps.
pub fn build_grid(dataset: &Dataset, cell_size: DVec3) -> DistrictGrid {
    let ribbons = RibbonTable::from_dataset(dataset);
    let Some(bounds) = dataset.bounds else {
        return DistrictGrid::empty(cell_size);
    };
    let lo = bounds.min.as_dvec3();
    let extent = bounds.extent().as_dvec3();
    let origin = lo - cell_size;
    let dims = std::array::from_fn(|k| ((extent[k] / cell_size[k]).floor() as u32).saturating_add(3));
    DistrictGrid::with_ribbons(GridSpec { origin, cell_size, dims }, ribbons)
}

impl DistrictGrid {
    pub fn empty(cell_size: DVec3) -> Self {
        DistrictGrid {
            spec: GridSpec { origin: DVec3::ZERO, cell_size, dims: [0; 3] },
            offsets: vec![0],
            entries: Vec::new(),
            ribbons: RibbonTable::default(),
        }
    }

    /// Grid with explicit placement; ribbons outside it are clamped into the
    /// boundary cells.
    pub fn with_ribbons(spec: GridSpec, ribbons: RibbonTable) -> Self {
        let n = spec.cell_count();
        if n == 0 {
            return DistrictGrid { spec, offsets: vec![0], entries: Vec::new(), ribbons };
        }
        let ranges: Vec<(CellCoord, CellCoord)> = (0..ribbons.len())
            .into_par_iter()
            .map(|id| {
                let (a, b) = ribbons.aabb(id);
                (spec.clamp_index(spec.cell_index(a)), spec.clamp_index(spec.cell_index(b)))
            })
            .collect();
        let mut counts = vec![0usize; n + 1];
        for (lo, hi) in &ranges {
            for_each_cell(*lo, *hi, |c| counts[spec.linear(c) + 1] += 1);
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut entries = vec![0u32; offsets[n]];
        for (id, (lo, hi)) in ranges.iter().enumerate() {
            for_each_cell(*lo, *hi, |c| {
                let slot = &mut cursor[spec.linear(c)];
                entries[*slot] = id as u32;
                *slot += 1;
            });
        }
        DistrictGrid { spec, offsets, entries, ribbons }
    }

    pub fn ribbons(&self) -> &RibbonTable {
        &self.ribbons
    }

    /// Ribbon ids registered in a cell, ascending.
    pub fn cell_ribbons(&self, c: CellCoord) -> &[u32] {
        let i = self.spec.linear(c);
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn registration_count(&self) -> usize {
        self.entries.len()
    }
}

fn for_each_cell(lo: CellCoord, hi: CellCoord, mut f: impl FnMut(CellCoord)) {
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                f([x, y, z]);
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CellState {
    Unknown,
    Border,
    Inside,
    Outside,
}

/// Cells of the grid that can touch the shape: its bounding box, clamped.
struct Region {
    lo: [i64; 3],
    dims: [i64; 3],
    state: Vec<CellState>,
}

impl Region {
    fn new(spec: &GridSpec, shape: &WorldShape) -> Option<Region> {
        let (smin, smax) = shape.aabb();
        let (gmin, gmax) = spec.bounds();
        if smin.cmpgt(gmax).any() || smax.cmplt(gmin).any() {
            return None;
        }
        // closed cells: a face shared with the cell below also touches it
        let below = ((smin - spec.origin) / spec.cell_size).ceil() - DVec3::ONE;
        let lo = spec.clamp_index([below.x as i64, below.y as i64, below.z as i64]).map(i64::from);
        let hi = spec.clamp_index(spec.cell_index(smax)).map(i64::from);
        let dims: [i64; 3] = std::array::from_fn(|k| hi[k] - lo[k] + 1);
        let n = dims.iter().product::<i64>() as usize;
        Some(Region { lo, dims, state: vec![CellState::Unknown; n] })
    }

    fn slot(&self, c: [i64; 3]) -> Option<usize> {
        let r: [i64; 3] = std::array::from_fn(|k| c[k] - self.lo[k]);
        if (0..3).all(|k| r[k] >= 0 && r[k] < self.dims[k]) {
            Some((r[0] + self.dims[0] * (r[1] + self.dims[1] * r[2])) as usize)
        } else {
            None
        }
    }
}

struct Classifier<'a> {
    spec: &'a GridSpec,
    shape: &'a WorldShape,
    region: Region,
    inside: Vec<CellCoord>,
    border: Vec<CellCoord>,
}

const NEIGHBORS_6: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

fn neighbors_26() -> impl Iterator<Item = [i64; 3]> {
    (0..27).filter(|&i| i != 13).map(|i| [i % 3 - 1, (i / 3) % 3 - 1, i / 9 - 1])
}

fn offset(c: [i64; 3], d: [i64; 3]) -> [i64; 3] {
    [c[0] + d[0], c[1] + d[1], c[2] + d[2]]
}

impl Classifier<'_> {
    /// Evaluates (and memoises) a cell, recording it in the result lists the
    /// first time it is seen. Cells outside the region never touch the shape.
    fn state(&mut self, c: [i64; 3]) -> CellState {
        let Some(slot) = self.region.slot(c) else {
            return CellState::Outside;
        };
        if self.region.state[slot] != CellState::Unknown {
            return self.region.state[slot];
        }
        let coord = c.map(|v| v as u32);
        let (lo, hi) = self.spec.cell_bounds(coord);
        let s = if self.shape.contains_box(lo, hi) {
            self.inside.push(coord);
            CellState::Inside
        } else if self.shape.intersects_box(lo, hi) {
            self.border.push(coord);
            CellState::Border
        } else {
            CellState::Outside
        };
        self.region.state[slot] = s;
        s
    }

    fn seen(&self, c: [i64; 3]) -> bool {
        self.region.slot(c).is_some_and(|s| self.region.state[s] != CellState::Unknown)
    }

    /// Any cell of the region touching the shape, scanning in order.
    fn first_touching(&mut self) -> Option<[i64; 3]> {
        let [nx, ny, nz] = self.region.dims;
        let lo = self.region.lo;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let c = [lo[0] + x, lo[1] + y, lo[2] + z];
                    if self.state(c) != CellState::Outside {
                        return Some(c);
                    }
                }
            }
        }
        None
    }
}

pub fn classify(spec: &GridSpec, shape: &WorldShape) -> DistrictClassification {
    classify_with(spec, shape, MarchDirection::PosX).0
}

/// Four-phase shell filling: locate the center district, march to the
/// shell, flood the shell (26-connected), then flood the interior from the
/// center (6-connected). A closing sweep over neighbours of every found cell
/// picks up shells split by the grid boundary, so the result always equals
/// per-cell evaluation of the two predicates.
pub fn classify_with(
    spec: &GridSpec,
    shape: &WorldShape,
    march: MarchDirection,
) -> (DistrictClassification, ClassifyStats) {
    let mut stats = ClassifyStats::default();
    if spec.is_empty() {
        return (DistrictClassification::default(), stats);
    }
    let Some(region) = Region::new(spec, shape) else {
        return (DistrictClassification::default(), stats);
    };
    let mut cl = Classifier { spec, shape, region, inside: Vec::new(), border: Vec::new() };

    // Phase 1: center district, clamped into the grid.
    let (gmin, gmax) = spec.bounds();
    let center_point = shape.center().clamp(gmin, gmax);
    let mut center = spec.clamp_index(spec.cell_index(center_point)).map(i64::from);
    if cl.region.slot(center).is_none() || cl.state(center) == CellState::Outside {
        match cl.first_touching() {
            Some(c) => center = c,
            None => return (DistrictClassification::default(), stats),
        }
    }

    // Phase 2: march until the shell.
    let step = march.step();
    let mut cursor = center;
    let mut seed = None;
    loop {
        stats.march_steps += 1;
        match cl.state(cursor) {
            CellState::Border => {
                seed = Some(cursor);
                break;
            }
            CellState::Inside => cursor = offset(cursor, step),
            _ => break,
        }
    }

    // Phase 3: flood the shell.
    let mut queue = VecDeque::new();
    let mut queued = FixedBitSet::with_capacity(cl.region.state.len());
    if let Some(seed) = seed {
        queue.push_back(seed);
        queued.insert(cl.region.slot(seed).expect("seed lies in region"));
    }
    while let Some(c) = queue.pop_front() {
        stats.shell_cells += 1;
        for d in neighbors_26() {
            let n = offset(c, d);
            let Some(slot) = cl.region.slot(n) else { continue };
            if queued.contains(slot) {
                continue;
            }
            if cl.state(n) == CellState::Border {
                queued.insert(slot);
                queue.push_back(n);
            }
        }
    }

    // Phase 4: flood the interior from the center.
    if cl.state(center) == CellState::Inside {
        let mut filled = FixedBitSet::with_capacity(cl.region.state.len());
        filled.insert(cl.region.slot(center).expect("center lies in region"));
        queue.push_back(center);
        while let Some(c) = queue.pop_front() {
            stats.fill_cells += 1;
            for d in NEIGHBORS_6 {
                let n = offset(c, d);
                let Some(slot) = cl.region.slot(n) else { continue };
                if filled.contains(slot) || queued.contains(slot) {
                    continue;
                }
                if cl.state(n) == CellState::Inside {
                    filled.insert(slot);
                    queue.push_back(n);
                }
            }
        }
    }

    // Closing sweep: neighbours of found cells not yet visited.
    let found = cl.inside.len() + cl.border.len();
    let mut pending: Vec<[i64; 3]> =
        cl.inside.iter().chain(cl.border.iter()).map(|c| c.map(i64::from)).collect();
    while let Some(c) = pending.pop() {
        for d in neighbors_26() {
            let n = offset(c, d);
            if cl.region.slot(n).is_none() || cl.seen(n) {
                continue;
            }
            if cl.state(n) != CellState::Outside {
                pending.push(n);
            }
        }
    }
    stats.recovered_cells = cl.inside.len() + cl.border.len() - found;

    let mut inside = cl.inside;
    let mut border = cl.border;
    inside.sort_by_key(|&c| spec.linear(c));
    border.sort_by_key(|&c| spec.linear(c));
    (DistrictClassification { inside, border }, stats)
}

/// Ribbon ids split into those registered in an inside district and those
/// registered only in border districts. Both ascending and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidates {
    pub certain: Vec<u32>,
    pub to_test: Vec<u32>,
}

pub fn candidate_ribbons(grid: &DistrictGrid, classification: &DistrictClassification) -> Candidates {
    let n = grid.ribbons.len();
    let mut certain = FixedBitSet::with_capacity(n);
    for &c in &classification.inside {
        for &id in grid.cell_ribbons(c) {
            certain.insert(id as usize);
        }
    }
    let mut border = FixedBitSet::with_capacity(n);
    for &c in &classification.border {
        for &id in grid.cell_ribbons(c) {
            border.insert(id as usize);
        }
    }
    border.difference_with(&certain);
    Candidates {
        certain: certain.ones().map(|i| i as u32).collect(),
        to_test: border.ones().map(|i| i as u32).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryOptions {
    /// Extra distance at which a ribbon centerline still counts as touching.
    pub tolerance: f64,
    /// Confirm ribbons from inside districts with the exact segment test.
    /// Registration is conservative, so skipping this may over-select.
    pub strict: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions { tolerance: 0.0, strict: true }
    }
}

impl DistrictGrid {
    /// Ribbons touched by `shape`, restricted to paths in `visible` when
    /// given. Sorted by path id then ribbon index.
    pub fn query(&self, shape: &WorldShape, options: QueryOptions, visible: Option<&FixedBitSet>) -> Vec<RibbonRef> {
        let probe = if options.tolerance > 0.0 { shape.inflated(options.tolerance) } else { *shape };
        let classification = classify(&self.spec, &probe);
        let Candidates { certain, to_test } = candidate_ribbons(self, &classification);
        let is_visible = |id: u32| visible.is_none_or(|v| v.contains(self.ribbons.refs[id as usize].path_id as usize));
        let hits = |id: u32| {
            let (a, b) = self.ribbons.segment(id);
            shape.segment_intersects(a, b, options.tolerance)
        };

        let mut ids: Vec<u32> = if options.strict {
            let mut all = certain;
            all.extend(to_test);
            // two sorted runs: the stable sort merges them in linear time
            all.sort();
            all.into_par_iter().filter(|&id| is_visible(id) && hits(id)).collect()
        } else {
            let mut tested: Vec<u32> = to_test.into_par_iter().filter(|&id| is_visible(id) && hits(id)).collect();
            tested.extend(certain.into_iter().filter(|&id| is_visible(id)));
            tested.par_sort_unstable();
            tested
        };
        ids.dedup();
        ids.into_iter().map(|id| self.ribbons.refs[id as usize]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::euler_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_grid(n: u32) -> GridSpec {
        GridSpec { origin: DVec3::ZERO, cell_size: DVec3::ONE, dims: [n; 3] }
    }

    fn brute_classify(spec: &GridSpec, shape: &WorldShape) -> DistrictClassification {
        let mut out = DistrictClassification::default();
        for i in 0..spec.cell_count() {
            let c = spec.coord(i);
            let (lo, hi) = spec.cell_bounds(c);
            if shape.contains_box(lo, hi) {
                out.inside.push(c);
            } else if shape.intersects_box(lo, hi) {
                out.border.push(c);
            }
        }
        out
    }

    #[test]
    fn axis_aligned_ribbon_registration() {
        let ds = Dataset::from_positions(vec![vec![Vec3::new(0.5, 0.5, 0.5), Vec3::new(2.5, 0.5, 0.5)]]);
        let grid = build_grid(&ds, DVec3::ONE);
        // origin is one cell below the bounds minimum
        assert_eq!(grid.spec.origin, DVec3::splat(-0.5));
        let cells: Vec<CellCoord> =
            (0..grid.spec.cell_count()).map(|i| grid.spec.coord(i)).filter(|&c| !grid.cell_ribbons(c).is_empty()).collect();
        // world cells [0,1), [1,2), [2,3) along x are grid cells 1..=3 here
        let world = |c: CellCoord| grid.spec.cell_bounds(c).0;
        let xs: Vec<f64> = cells.iter().map(|&c| world(c).x).collect();
        assert_eq!(cells.len(), 3);
        assert_eq!(xs, vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn ribbon_inside_one_cell() {
        let spec = unit_grid(4);
        let mut table = RibbonTable::default();
        table.refs.push(RibbonRef { path_id: 0, index: 0 });
        table.starts.push(Vec3::new(1.2, 1.2, 1.2));
        table.ends.push(Vec3::new(1.8, 1.7, 1.3));
        let grid = DistrictGrid::with_ribbons(spec, table);
        assert_eq!(grid.registration_count(), 1);
        assert_eq!(grid.cell_ribbons([1, 1, 1]), &[0]);
    }

    #[test]
    fn registration_equals_aabb_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = GridSpec { origin: DVec3::splat(-1.0), cell_size: DVec3::new(1.0, 0.7, 1.3), dims: [8, 10, 6] };
        let mut table = RibbonTable::default();
        for i in 0..10_000u32 {
            let a = Vec3::new(rng.random_range(-1.0..7.0), rng.random_range(-1.0..6.0), rng.random_range(-1.0..6.8));
            let b = a + Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let b = b.clamp(Vec3::splat(-0.999), Vec3::new(6.999, 5.999, 6.799));
            table.refs.push(RibbonRef { path_id: i, index: 0 });
            table.starts.push(a);
            table.ends.push(b);
        }
        let grid = DistrictGrid::with_ribbons(spec, table.clone());
        for c in (0..spec.cell_count()).map(|i| spec.coord(i)) {
            let (lo, hi) = spec.cell_bounds(c);
            let members = grid.cell_ribbons(c);
            assert!(members.windows(2).all(|w| w[0] < w[1]), "duplicate-free, ascending");
            let mut expected = Vec::new();
            for id in 0..table.len() {
                let (a, b) = table.aabb(id);
                // half-open cells: overlap iff min < hi and max >= lo
                if (0..3).all(|k| a[k] < hi[k] && b[k] >= lo[k]) {
                    expected.push(id as u32);
                }
            }
            assert_eq!(members, expected.as_slice(), "cell {c:?}");
        }
    }

    #[test]
    fn small_sphere_is_single_border_cell() {
        let spec = unit_grid(8);
        let shape = WorldShape::Sphere { center: DVec3::splat(3.5), radius: 0.3 };
        let cl = classify(&spec, &shape);
        assert!(cl.inside.is_empty());
        assert_eq!(cl.border, vec![[3, 3, 3]]);
    }

    #[test]
    fn sphere_matches_brute_force() {
        let spec = unit_grid(12);
        let shape = WorldShape::Sphere { center: DVec3::splat(6.5), radius: 2.5 };
        let (cl, stats) = classify_with(&spec, &shape, MarchDirection::PosX);
        assert_eq!(cl, brute_classify(&spec, &shape));
        assert!(!cl.inside.is_empty());
        assert_eq!(stats.recovered_cells, 0);
    }

    #[test]
    fn four_phases_suffice_for_contained_spheres() {
        let spec = unit_grid(40);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let r = rng.random_range(0.2..12.0);
            let center = DVec3::new(rng.random_range(14.0..26.0), rng.random_range(14.0..26.0), rng.random_range(14.0..26.0));
            let shape = WorldShape::Sphere { center, radius: r };
            let (cl, stats) = classify_with(&spec, &shape, MarchDirection::PosX);
            assert_eq!(stats.recovered_cells, 0, "r={r}");
            assert_eq!(cl, brute_classify(&spec, &shape));
        }
    }

    #[test]
    fn random_shapes_match_brute_force_in_every_direction() {
        let spec = GridSpec { origin: DVec3::new(-3.0, -2.0, -1.0), cell_size: DVec3::new(0.5, 0.6, 0.4), dims: [16, 14, 12] };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..60 {
            let center = DVec3::new(rng.random_range(-5.0..7.0), rng.random_range(-4.0..8.0), rng.random_range(-3.0..6.0));
            let shape = match i % 3 {
                0 => WorldShape::Sphere { center, radius: rng.random_range(0.1..4.0) },
                1 => WorldShape::Cylinder {
                    center,
                    frame: euler_matrix(DVec3::new(rng.random(), rng.random(), rng.random()) * 6.0),
                    radius: rng.random_range(0.1..1.5),
                    half_width: rng.random_range(0.2..4.0),
                },
                _ => WorldShape::Cuboid {
                    center,
                    yaw: rng.random_range(-3.0..3.0),
                    half_extents: DVec3::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)),
                },
            };
            let expected = brute_classify(&spec, &shape);
            for dir in [MarchDirection::PosX, MarchDirection::NegX, MarchDirection::PosY] {
                let (cl, _) = classify_with(&spec, &shape, dir);
                assert_eq!(cl, expected, "{shape:?} {dir:?}");
                for c in &cl.inside {
                    let (lo, hi) = spec.cell_bounds(*c);
                    assert!(shape.contains_box(lo, hi));
                }
                assert!(cl.inside.iter().all(|c| !cl.border.contains(c)));
            }
        }
    }

    #[test]
    fn shape_outside_grid_is_empty() {
        let spec = unit_grid(4);
        let shape = WorldShape::Sphere { center: DVec3::splat(20.0), radius: 1.0 };
        assert_eq!(classify(&spec, &shape), DistrictClassification::default());
        let empty = GridSpec { dims: [0; 3], ..spec };
        assert_eq!(classify(&empty, &shape), DistrictClassification::default());
    }

    #[test]
    fn center_outside_grid_still_found() {
        let spec = unit_grid(6);
        // Sphere centered off-grid but overlapping one face.
        let shape = WorldShape::Sphere { center: DVec3::new(-2.0, 3.0, 3.0), radius: 3.0 };
        let cl = classify(&spec, &shape);
        assert_eq!(cl, brute_classify(&spec, &shape));
        assert!(!cl.border.is_empty());
    }

    #[test]
    fn inside_ribbons_are_certain_only() {
        let spec = unit_grid(10);
        let mut table = RibbonTable::default();
        // spans an inside cell (5,5,5) and a border cell
        table.refs.push(RibbonRef { path_id: 0, index: 0 });
        table.starts.push(Vec3::new(5.5, 5.5, 5.5));
        table.ends.push(Vec3::new(8.5, 5.5, 5.5));
        table.refs.push(RibbonRef { path_id: 1, index: 0 });
        table.starts.push(Vec3::new(8.2, 5.5, 5.5));
        table.ends.push(Vec3::new(8.4, 5.6, 5.5));
        let grid = DistrictGrid::with_ribbons(spec, table);
        let shape = WorldShape::Sphere { center: DVec3::splat(5.5), radius: 3.0 };
        let cl = classify(&spec, &shape);
        assert!(cl.inside.contains(&[5, 5, 5]));
        let cand = candidate_ribbons(&grid, &cl);
        assert_eq!(cand.certain, vec![0]);
        assert_eq!(cand.to_test, vec![1]);

        let no_inside = DistrictClassification { inside: vec![], border: cl.border.clone() };
        let cand = candidate_ribbons(&grid, &no_inside);
        assert!(cand.certain.is_empty());
    }

    #[test]
    fn default_cell_size_caps_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let paths: Vec<Vec<Vec3>> = (0..200)
            .map(|_| (0..500).map(|_| Vec3::new(rng.random::<f32>() * 10.0, rng.random::<f32>() * 10.0, 0.0)).collect())
            .collect();
        let ds = Dataset::from_positions(paths);
        let cs = default_cell_size(&ds);
        let grid = build_grid(&ds, cs);
        assert!(ds.ribbon_count() as f64 / grid.spec.cell_count() as f64 <= MAX_MEAN_RIBBONS_PER_CELL);
    }
}
