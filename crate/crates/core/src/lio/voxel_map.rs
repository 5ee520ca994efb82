use std::collections::HashMap;

use rustc_hash::{FxBuildHasher, FxHashSet};

use nalgebra::Vector3;

use crate::geometry::Timestamp;

/// Integer cell coordinate of a voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex(pub [i64; 3]);

impl VoxelIndex {
    pub fn of(p: &Vector3<f64>, voxel_size: f64) -> Self {
        VoxelIndex([
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        ])
    }

    /// The 27 cells of the 3x3x3 block centred on `self`, in a fixed order.
    pub fn neighborhood(self) -> impl Iterator<Item = VoxelIndex> {
        let [x, y, z] = self.0;
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| (-1..=1).map(move |dz| VoxelIndex([x + dx, y + dy, z + dz])))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapPoint {
    /// Insertion sequence number, unique within a map.
    pub id: u64,
    pub position: Vector3<f64>,
    /// RGB in [0, 255]; gray images write the same value to all channels.
    pub color: Vector3<f64>,
    pub color_weight: f64,
    pub insert_stamp: Timestamp,
    pub rendered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelMapConfig {
    pub voxel_size: f64,
    pub capacity: usize,
    pub min_distance: f64,
}

impl Default for VoxelMapConfig {
    fn default() -> Self {
        Self { voxel_size: 0.5, capacity: 20, min_distance: 0.1 }
    }
}

type FixedState = FxBuildHasher;

/// Hash voxel map holding a bounded point list per cell.
///
/// Iteration order over cells depends only on the insertion history, so runs are
/// reproducible.
#[derive(Clone, Debug)]
pub struct VoxelMap {
    config: VoxelMapConfig,
    cells: HashMap<VoxelIndex, Vec<MapPoint>, FixedState>,
    recently_visited: Vec<VoxelIndex>,
    next_id: u64,
}

impl VoxelMap {
    pub fn new(config: VoxelMapConfig) -> Self {
        Self { config, cells: HashMap::default(), recently_visited: Vec::new(), next_id: 0 }
    }

    pub fn config(&self) -> &VoxelMapConfig {
        &self.config
    }

    pub fn voxel_size(&self) -> f64 {
        self.config.voxel_size
    }

    pub fn index_of(&self, p: &Vector3<f64>) -> VoxelIndex {
        VoxelIndex::of(p, self.config.voxel_size)
    }

    pub fn is_empty(&self) -> bool {
        self.next_id == 0
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, idx: &VoxelIndex) -> Option<&[MapPoint]> {
        self.cells.get(idx).map(Vec::as_slice)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&VoxelIndex, &[MapPoint])> {
        self.cells.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// All points, sorted by insertion id.
    pub fn points(&self) -> Vec<&MapPoint> {
        let mut all: Vec<&MapPoint> = self.cells.values().flatten().collect();
        all.sort_by_key(|p| p.id);
        all
    }

    /// Distinct voxels touched by the latest [`VoxelMap::update`], in first-touch order.
    pub fn recently_visited(&self) -> &[VoxelIndex] {
        &self.recently_visited
    }

    /// Inserts world-frame points. Every point's voxel counts as visited; a point is stored
    /// only if its cell has room and no stored point lies within `min_distance`.
    pub fn update(&mut self, points: &[Vector3<f64>], stamp: Timestamp) -> usize {
        self.recently_visited.clear();
        let mut seen: FxHashSet<VoxelIndex> = FxHashSet::default();
        let min_d2 = self.config.min_distance * self.config.min_distance;
        let mut inserted = 0;
        for p in points.iter().filter(|p| p.iter().all(|v| v.is_finite())) {
            let idx = self.index_of(p);
            if seen.insert(idx) {
                self.recently_visited.push(idx);
            }
            let cell = self.cells.entry(idx).or_default();
            if cell.len() >= self.config.capacity {
                continue;
            }
            if cell.iter().any(|q| (q.position - p).norm_squared() < min_d2) {
                continue;
            }
            cell.push(MapPoint {
                id: self.next_id,
                position: *p,
                color: Vector3::zeros(),
                color_weight: 0.0,
                insert_stamp: stamp,
                rendered: false,
            });
            self.next_id += 1;
            inserted += 1;
        }
        // a visited cell whose only candidate was rejected may be empty; drop it
        self.cells.retain(|_, v| !v.is_empty());
        inserted
    }

    /// Up to `k` stored points nearest to `q` within `max_distance`, nearest first.
    pub fn nearest(&self, q: &Vector3<f64>, k: usize, max_distance: f64) -> Vec<(f64, &MapPoint)> {
        let max_d2 = max_distance * max_distance;
        let mut best: Vec<(f64, &MapPoint)> = Vec::with_capacity(k + 1);
        for idx in self.index_of(q).neighborhood() {
            let Some(cell) = self.cells.get(&idx) else { continue };
            for p in cell {
                let d2 = (p.position - q).norm_squared();
                if d2 > max_d2 || (best.len() == k && d2 >= best[k - 1].0) {
                    continue;
                }
                let pos = best.partition_point(|(d, _)| *d <= d2);
                best.insert(pos, (d2, p));
                best.truncate(k);
            }
        }
        best
    }

    /// Mutable access to the points of one cell.
    pub fn cell_mut(&mut self, idx: &VoxelIndex) -> Option<&mut Vec<MapPoint>> {
        self.cells.get_mut(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point() {
        let mut map = VoxelMap::new(VoxelMapConfig::default());
        let p = Vector3::new(0.3, 1.2, -0.1);
        assert_eq!(map.update(&[p], Timestamp(1.0)), 1);
        assert_eq!(map.cell_count(), 1);
        assert_eq!(map.len(), 1);
        assert_eq!(map.recently_visited(), &[VoxelIndex([0, 2, -1])]);
    }

    #[test]
    fn duplicate_within_min_distance_is_visited_but_not_inserted() {
        let mut map = VoxelMap::new(VoxelMapConfig::default());
        map.update(&[Vector3::new(0.1, 0.1, 0.1)], Timestamp(1.0));
        let n = map.update(&[Vector3::new(0.12, 0.1, 0.1)], Timestamp(2.0));
        assert_eq!(n, 0);
        assert_eq!(map.len(), 1);
        assert_eq!(map.recently_visited(), &[VoxelIndex([0, 0, 0])]);
    }

    #[test]
    fn capacity_and_hashing_hold_on_random_points() {
        let cfg = VoxelMapConfig { voxel_size: 1.0, capacity: 20, min_distance: 0.01 };
        let mut map = VoxelMap::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vector3<f64>> = (0..1000)
            .map(|_| Vector3::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..1.0)))
            .collect();
        map.update(&pts, Timestamp(0.0));
        // brute-force recount of every cell from the stored points
        let mut counts: HashMap<VoxelIndex, usize> = HashMap::new();
        for (idx, cell) in map.cells() {
            assert!(cell.len() <= 20);
            for p in cell {
                assert_eq!(VoxelIndex::of(&p.position, 1.0), *idx);
                *counts.entry(*idx).or_default() += 1;
            }
        }
        assert!(counts.values().all(|&c| c <= 20));
        assert_eq!(counts.len(), 4);
        assert_eq!(map.recently_visited().len(), 4);
    }

    #[test]
    fn nearest_neighbours_match_brute_force() {
        let mut map = VoxelMap::new(VoxelMapConfig { voxel_size: 0.5, capacity: 50, min_distance: 0.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vector3<f64>> = (0..2000)
            .map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-0.5..0.5)))
            .collect();
        map.update(&pts, Timestamp(0.0));
        let stored: Vec<Vector3<f64>> = map.points().iter().map(|p| p.position).collect();
        for _ in 0..50 {
            let q = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), 0.0);
            let got: Vec<f64> = map.nearest(&q, 5, 0.5).iter().map(|(d, _)| *d).collect();
            let mut brute: Vec<f64> =
                stored.iter().map(|p| (p - q).norm_squared()).filter(|d| *d <= 0.25).collect();
            brute.sort_by(f64::total_cmp);
            brute.truncate(5);
            assert_eq!(got, brute);
        }
    }
}
