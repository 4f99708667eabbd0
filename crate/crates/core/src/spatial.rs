//! Uniform grid hash over 3D points for radius queries.

use rustc_hash::FxHashMap as HashMap;

use nalgebra::Vector3;

pub type CellKey = (i64, i64, i64);

/// Buckets point indices into cubic cells of side `cell_size`.
#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell_size: f64,
    cells: HashMap<CellKey, Vec<usize>>,
}

impl SpatialHash {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            cell_size,
            cells: HashMap::default(),
        }
    }

    pub fn build<'a, I>(cell_size: f64, points: I) -> Self
    where
        I: IntoIterator<Item = &'a Vector3<f64>>,
    {
        let mut grid = Self::new(cell_size);
        for (i, p) in points.into_iter().enumerate() {
            grid.insert(p, i);
        }
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn key(&self, p: &Vector3<f64>) -> CellKey {
        (
            (p.x / self.cell_size).floor() as i64,
            (p.y / self.cell_size).floor() as i64,
            (p.z / self.cell_size).floor() as i64,
        )
    }

    pub fn insert(&mut self, p: &Vector3<f64>, index: usize) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push(index);
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Indices in every cell overlapping the cube of half-width `radius`
    /// around `center`: a superset of the points within `radius`. Output is
    /// sorted ascending.
    pub fn candidates(&self, center: &Vector3<f64>, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        self.for_each_candidate(center, radius, |bucket| out.extend_from_slice(bucket));
        out.sort_unstable();
    }

    /// Whether some point within `radius` of `center` satisfies `pred`.
    pub fn any_within<F: FnMut(usize) -> bool>(
        &self,
        points: &[Vector3<f64>],
        center: &Vector3<f64>,
        radius: f64,
        mut pred: F,
    ) -> bool {
        let r2 = radius * radius;
        let lo = self.key(&center.add_scalar(-radius));
        let hi = self.key(&center.add_scalar(radius));
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(bucket) = self.cells.get(&(x, y, z)) {
                        if bucket
                            .iter()
                            .any(|&i| (points[i] - center).norm_squared() <= r2 && pred(i))
                        {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Calls `f` with every non-empty cell overlapping the cube of
    /// half-width `radius` around `center` until it returns true. Returns
    /// whether it did.
    pub fn any_bucket<F: FnMut(&CellKey, &[usize]) -> bool>(
        &self,
        center: &Vector3<f64>,
        radius: f64,
        mut f: F,
    ) -> bool {
        let lo = self.key(&center.add_scalar(-radius));
        let hi = self.key(&center.add_scalar(radius));
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    let key = (x, y, z);
                    if let Some(bucket) = self.cells.get(&key) {
                        if f(&key, bucket) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Non-empty cells and their members.
    pub fn buckets(&self) -> impl Iterator<Item = (&CellKey, &Vec<usize>)> {
        self.cells.iter()
    }

    fn for_each_candidate<F: FnMut(&[usize])>(&self, center: &Vector3<f64>, radius: f64, mut f: F) {
        let lo = self.key(&center.add_scalar(-radius));
        let hi = self.key(&center.add_scalar(radius));
        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(bucket) = self.cells.get(&(x, y, z)) {
                        f(bucket);
                    }
                }
            }
        }
    }

    /// Indices whose point lies within `radius` of `center` (inclusive).
    pub fn within(
        &self,
        points: &[Vector3<f64>],
        center: &Vector3<f64>,
        radius: f64,
        out: &mut Vec<usize>,
    ) {
        out.clear();
        let r2 = radius * radius;
        self.for_each_candidate(center, radius, |bucket| {
            out.extend(
                bucket
                    .iter()
                    .copied()
                    .filter(|&i| (points[i] - center).norm_squared() <= r2),
            )
        });
        out.sort_unstable();
    }
}
