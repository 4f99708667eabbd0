//! Sparse voxel grid of Dirichlet cells.

use rustc_hash::FxHashMap as HashMap;

use nalgebra::Vector3;

use crate::bki::{DirichletCell, PosteriorStats, Uncertainty};

pub type VoxelIndex = [i64; 3];

/// Everything a query reports about one location.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// `None` when no evidence reached the location.
    pub label: Option<usize>,
    pub expectation: Vec<f64>,
    pub variance: f64,
    pub uncertainty: Uncertainty,
}

impl QueryResult {
    pub fn from_cell(cell: &DirichletCell) -> Self {
        let PosteriorStats {
            label,
            expectation,
            variance,
        } = cell.posterior_stats();
        Self {
            label: cell.is_touched().then_some(label),
            expectation,
            variance,
            uncertainty: cell.decomposed_uncertainty(),
        }
    }

    pub fn unknown(classes: usize, alpha0: f64) -> Self {
        Self::from_cell(&DirichletCell::new(classes, alpha0))
    }

    /// `1 − u_total`.
    pub fn confidence(&self) -> f64 {
        1.0 - self.uncertainty.total
    }

    /// `1 − Var/max(Var)`.
    pub fn variance_confidence(&self) -> f64 {
        (1.0 - self.variance / crate::bki::MAX_VARIANCE).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub resolution: f64,
    pub origin: Vector3<f64>,
    classes: usize,
    alpha0: f64,
    cells: HashMap<VoxelIndex, DirichletCell>,
}

impl VoxelGrid {
    pub fn new(resolution: f64, origin: Vector3<f64>, classes: usize, alpha0: f64) -> Self {
        assert!(resolution > 0.0);
        Self {
            resolution,
            origin,
            classes,
            alpha0,
            cells: HashMap::default(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    /// `floor((x − origin)/resolution)` per axis.
    pub fn index(&self, x: &Vector3<f64>) -> VoxelIndex {
        let r = (x - self.origin) / self.resolution;
        [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
    }

    pub fn center(&self, idx: VoxelIndex) -> Vector3<f64> {
        Vector3::new(
            (idx[0] as f64 + 0.5) * self.resolution + self.origin.x,
            (idx[1] as f64 + 0.5) * self.resolution + self.origin.y,
            (idx[2] as f64 + 0.5) * self.resolution + self.origin.z,
        )
    }

    /// Index range along one axis whose cell centers fall in `[lo, hi]`.
    pub fn axis_span(&self, axis: usize, lo: f64, hi: f64) -> (i64, i64) {
        let o = self.origin[axis];
        let first = ((lo - o) / self.resolution - 0.5).ceil() as i64;
        let last = ((hi - o) / self.resolution - 0.5).floor() as i64;
        // Guard against the division rounding the other way.
        let first = first - 1;
        let last = last + 1;
        (first, last)
    }

    /// Indices of every cell whose center lies within `radius` of `x`.
    pub fn cells_within(&self, x: &Vector3<f64>, radius: f64, out: &mut Vec<VoxelIndex>) {
        out.clear();
        let r2 = radius * radius;
        let spans: Vec<(i64, i64)> = (0..3)
            .map(|a| self.axis_span(a, x[a] - radius, x[a] + radius))
            .collect();
        for i in spans[0].0..=spans[0].1 {
            for j in spans[1].0..=spans[1].1 {
                for k in spans[2].0..=spans[2].1 {
                    let idx = [i, j, k];
                    if (self.center(idx) - x).norm_squared() <= r2 {
                        out.push(idx);
                    }
                }
            }
        }
    }

    pub fn cell(&self, idx: VoxelIndex) -> Option<&DirichletCell> {
        self.cells.get(&idx)
    }

    pub fn cell_mut(&mut self, idx: VoxelIndex) -> &mut DirichletCell {
        let (classes, alpha0) = (self.classes, self.alpha0);
        self.cells
            .entry(idx)
            .or_insert_with(|| DirichletCell::new(classes, alpha0))
    }

    pub fn insert(&mut self, idx: VoxelIndex, cell: DirichletCell) {
        self.cells.insert(idx, cell);
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells in ascending index order.
    pub fn sorted_cells(&self) -> Vec<(VoxelIndex, &DirichletCell)> {
        let mut v: Vec<_> = self.cells.iter().map(|(k, c)| (*k, c)).collect();
        v.sort_unstable_by_key(|(k, _)| *k);
        v
    }

    pub fn query(&self, idx: VoxelIndex) -> QueryResult {
        match self.cells.get(&idx) {
            Some(cell) => QueryResult::from_cell(cell),
            None => QueryResult::unknown(self.classes, self.alpha0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_center() {
        let g = VoxelGrid::new(0.2, Vector3::new(1.0, 0.0, 0.0), 3, 0.001);
        assert_eq!(g.index(&Vector3::new(1.05, -0.05, 0.39)), [0, -1, 1]);
        let c = g.center([0, -1, 1]);
        assert!((c - Vector3::new(1.1, -0.1, 0.3)).norm() < 1e-12);
        assert_eq!(g.index(&c), [0, -1, 1]);
    }

    #[test]
    fn cells_within_matches_scan() {
        let g = VoxelGrid::new(0.2, Vector3::new(0.03, -0.1, 0.0), 3, 0.001);
        let x = Vector3::new(0.37, 0.41, -0.22);
        let mut out = Vec::new();
        for &r in &[0.0, 0.05, 0.2, 0.55, 1.3] {
            g.cells_within(&x, r, &mut out);
            let mut brute = Vec::new();
            for i in -20..20 {
                for j in -20..20 {
                    for k in -20..20 {
                        if (g.center([i, j, k]) - x).norm() <= r {
                            brute.push([i, j, k]);
                        }
                    }
                }
            }
            assert_eq!(out, brute, "r={r}");
        }
    }

    #[test]
    fn unknown_query() {
        let g = VoxelGrid::new(0.2, Vector3::zeros(), 3, 0.001);
        let q = g.query([5, 5, 5]);
        assert_eq!(q.label, None);
        assert_eq!(q.uncertainty.total, 1.0);
    }
}
