//! Bird's-eye-view projection of a built map.

use std::collections::BTreeMap;

use nalgebra::Vector2;

use super::contribution::Footprint2;
use super::grid::QueryResult;
use super::{Map, MapError};
use crate::bki::DirichletCell;

pub type BevIndex = [i64; 2];

/// 2D grid of Dirichlet cells over the xy plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub resolution: f64,
    pub origin: Vector2<f64>,
    classes: usize,
    alpha0: f64,
    cells: BTreeMap<BevIndex, DirichletCell>,
}

impl BevGrid {
    pub fn new(resolution: f64, origin: Vector2<f64>, classes: usize, alpha0: f64) -> Self {
        Self {
            resolution,
            origin,
            classes,
            alpha0,
            cells: BTreeMap::new(),
        }
    }

    pub fn index(&self, x: &Vector2<f64>) -> BevIndex {
        let r = (x - self.origin) / self.resolution;
        [r.x.floor() as i64, r.y.floor() as i64]
    }

    pub fn center(&self, idx: BevIndex) -> Vector2<f64> {
        Vector2::new(
            (idx[0] as f64 + 0.5) * self.resolution + self.origin.x,
            (idx[1] as f64 + 0.5) * self.resolution + self.origin.y,
        )
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, idx: BevIndex) -> Option<&DirichletCell> {
        self.cells.get(&idx)
    }

    /// Cells in ascending index order.
    pub fn cells(&self) -> impl Iterator<Item = (&BevIndex, &DirichletCell)> {
        self.cells.iter()
    }

    pub fn query(&self, idx: BevIndex) -> QueryResult {
        match self.cells.get(&idx) {
            Some(cell) => QueryResult::from_cell(cell),
            None => QueryResult::unknown(self.classes, self.alpha0),
        }
    }

    fn accumulate(&mut self, idx: BevIndex, w: f64, p: &[f64], u: f64) {
        let (classes, alpha0) = (self.classes, self.alpha0);
        self.cells
            .entry(idx)
            .or_insert_with(|| DirichletCell::new(classes, alpha0))
            .accumulate(w, p, u);
    }

    fn span(&self, axis: usize, lo: f64, hi: f64) -> (i64, i64) {
        let o = self.origin[axis];
        (
            ((lo - o) / self.resolution - 0.5).ceil() as i64 - 1,
            ((hi - o) / self.resolution - 0.5).floor() as i64 + 1,
        )
    }
}

pub(super) fn project(map: &Map) -> Result<BevGrid, MapError> {
    let cfg = map.config();
    let mut bev = BevGrid::new(
        cfg.voxel_resolution,
        cfg.origin.xy(),
        cfg.num_classes,
        cfg.alpha0,
    );
    let tau2 = cfg.tau(2);
    for c in map.contributions() {
        let fp = c.project_xy(tau2)?;
        let center = c.center.xy();
        if let Footprint2::Cell = fp {
            let idx = bev.index(&center);
            bev.accumulate(idx, 1.0, &c.prob, c.u);
            continue;
        }
        let reach = fp.reach(c.support);
        let (x0, x1) = bev.span(0, center.x - reach, center.x + reach);
        let (y0, y1) = bev.span(1, center.y - reach, center.y + reach);
        for i in x0..=x1 {
            for j in y0..=y1 {
                let q = bev.center([i, j]);
                if (q - center).norm_squared() > reach * reach {
                    continue;
                }
                let w = fp.weight(&center, &q, c.support);
                if w > 0.0 {
                    bev.accumulate([i, j], w, &c.prob, c.u);
                }
            }
        }
    }
    Ok(bev)
}

#[cfg(test)]
mod tests {
    use super::super::{MapConfig, Mode};
    use super::*;
    use crate::belief::ClassProbability;
    use crate::gaussian::EvidentialPoint;
    use nalgebra::Vector3;

    #[test]
    fn empty_map_gives_empty_grid() {
        let map = Map::new(MapConfig::default()).unwrap();
        assert!(map.project_bev().unwrap().is_empty());
    }

    #[test]
    fn counting_map_projects_cells() {
        let cfg = MapConfig {
            mode: Mode::Scsm,
            num_classes: 2,
            ..MapConfig::default()
        };
        let mut map = Map::new(cfg).unwrap();
        let pts: Vec<EvidentialPoint> = [0.05, 0.5, 1.7]
            .iter()
            .map(|&z| {
                EvidentialPoint::new(
                    Vector3::new(0.1, 0.1, z),
                    ClassProbability::new(vec![0.9, 0.1]).unwrap(),
                    0.1,
                    3.0,
                )
                .unwrap()
            })
            .collect();
        map.ingest_frame(&pts, Vector3::zeros()).unwrap();
        let bev = map.project_bev().unwrap();
        assert_eq!(bev.len(), 1);
        assert_eq!(bev.cell([0, 0]).unwrap().alpha(), vec![3.001, 0.001]);
    }
}
