//! Confusion counts and the scores derived from them.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::EvalError;

/// Per-class outcome counts over a query set, plus the Brier accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionTally {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub queries: u64,
    pub occupied: u64,
    pub brier_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `None` for classes absent from the ground truth.
    pub iou: Vec<Option<f64>>,
    pub miou: f64,
    pub acc: f64,
    /// `None` when no query landed on an occupied location.
    pub brier: Option<f64>,
}

impl ConfusionTally {
    pub fn new(classes: usize) -> Self {
        Self {
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
            queries: 0,
            occupied: 0,
            brier_sum: 0.0,
        }
    }

    /// Tally with given counts and no Brier data.
    pub fn from_counts(tp: Vec<u64>, fp: Vec<u64>, fn_: Vec<u64>, queries: u64) -> Self {
        let occupied = tp.iter().sum::<u64>() + fp.iter().sum::<u64>();
        Self {
            tp,
            fp,
            fn_,
            queries,
            occupied,
            brier_sum: 0.0,
        }
    }

    pub fn classes(&self) -> usize {
        self.tp.len()
    }

    /// Records one query. `prediction` is the predicted label with its
    /// confidence, or `None` when the map has no evidence there.
    pub fn record(&mut self, truth: usize, prediction: Option<(usize, f64)>) {
        self.queries += 1;
        match prediction {
            None => self.fn_[truth] += 1,
            Some((label, conf)) => {
                self.occupied += 1;
                let correct = if label == truth {
                    self.tp[truth] += 1;
                    1.0
                } else {
                    self.fp[label] += 1;
                    self.fn_[truth] += 1;
                    0.0
                };
                self.brier_sum += (correct - conf) * (correct - conf);
            }
        }
    }

    pub fn metrics(&self) -> Result<Metrics, EvalError> {
        if self.queries == 0 {
            return Err(EvalError::NoQueries);
        }
        let iou: Vec<Option<f64>> = (0..self.classes())
            .map(|c| {
                let present = self.tp[c] + self.fn_[c] > 0;
                present.then(|| {
                    self.tp[c] as f64 / (self.tp[c] + self.fp[c] + self.fn_[c]) as f64
                })
            })
            .collect();
        let present: Vec<f64> = iou.iter().flatten().copied().collect();
        let miou = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        let acc = self.tp.iter().sum::<u64>() as f64 / self.queries as f64;
        let brier = (self.occupied > 0).then(|| self.brier_sum / self.occupied as f64);
        Ok(Metrics {
            iou,
            miou,
            acc,
            brier,
        })
    }
}

/// One evaluation location with its true label.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceQuery {
    pub position: Vector3<f64>,
    pub label: usize,
}

/// Voxelizes labeled points at `resolution / 4`, drops voxels whose points
/// disagree on the label and returns one query per remaining voxel at the
/// centroid of its points. Output is ordered by voxel index.
pub fn build_reference_queries<'a, I>(points: I, resolution: f64) -> Vec<ReferenceQuery>
where
    I: IntoIterator<Item = (&'a Vector3<f64>, usize)>,
{
    struct Acc {
        sum: Vector3<f64>,
        count: usize,
        label: usize,
        mixed: bool,
    }
    let res = resolution / 4.0;
    let mut voxels: BTreeMap<[i64; 3], Acc> = BTreeMap::new();
    for (p, label) in points {
        let key = [
            (p.x / res).floor() as i64,
            (p.y / res).floor() as i64,
            (p.z / res).floor() as i64,
        ];
        let acc = voxels.entry(key).or_insert(Acc {
            sum: Vector3::zeros(),
            count: 0,
            label,
            mixed: false,
        });
        acc.sum += p;
        acc.count += 1;
        acc.mixed |= acc.label != label;
    }
    voxels
        .into_values()
        .filter(|a| !a.mixed)
        .map(|a| ReferenceQuery {
            position: a.sum / a.count as f64,
            label: a.label,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn hand_tally() {
        let t = ConfusionTally::from_counts(vec![3, 1], vec![1, 0], vec![0, 1], 5);
        let m = t.metrics().unwrap();
        assert!((m.iou[0].unwrap() - 0.75).abs() < 1e-15);
        assert!((m.iou[1].unwrap() - 0.5).abs() < 1e-15);
        assert!((m.miou - 0.625).abs() < 1e-15);
        assert!((m.acc - 0.8).abs() < 1e-15);
    }

    #[test]
    fn perfect_map() {
        let mut t = ConfusionTally::new(3);
        for _ in 0..10 {
            t.record(1, Some((1, 1.0)));
        }
        let m = t.metrics().unwrap();
        assert_eq!(m.iou, vec![None, Some(1.0), None]);
        assert_eq!(m.miou, 1.0);
        assert_eq!(m.acc, 1.0);
        assert_eq!(m.brier, Some(0.0));
    }

    #[test]
    fn empty_map_and_no_queries() {
        let mut t = ConfusionTally::new(2);
        t.record(0, None);
        t.record(1, None);
        let m = t.metrics().unwrap();
        assert_eq!(m.acc, 0.0);
        assert_eq!(m.brier, None);
        assert!(matches!(
            ConfusionTally::new(2).metrics(),
            Err(EvalError::NoQueries)
        ));
    }

    proptest! {
        #[test]
        fn tally_identities(
            records in proptest::collection::vec(
                (0usize..4, proptest::option::of((0usize..4, 0.0f64..=1.0))), 1..200)
        ) {
            let mut t = ConfusionTally::new(4);
            let mut conf_one = ConfusionTally::new(4);
            for (truth, pred) in &records {
                t.record(*truth, *pred);
                conf_one.record(*truth, pred.map(|(l, _)| (l, 1.0)));
            }
            let tp: u64 = t.tp.iter().sum();
            let wrong = t.occupied - tp;
            let unoccupied = t.queries - t.occupied;
            prop_assert_eq!(tp + wrong + unoccupied, t.queries);
            let m = t.metrics().unwrap();
            let mut best: f64 = 0.0;
            for v in m.iou.iter().flatten() {
                prop_assert!((0.0..=1.0).contains(v));
                best = best.max(*v);
            }
            prop_assert!(m.miou <= best + 1e-15);
            if let Some(b) = m.brier {
                prop_assert!((0.0..=1.0).contains(&b));
                let b1 = conf_one.metrics().unwrap().brier.unwrap();
                prop_assert!((b1 - wrong as f64 / t.occupied as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reference_queries_drop_mixed_voxels() {
        let pts = [
            Vector3::new(0.01, 0.01, 0.01),
            Vector3::new(0.02, 0.02, 0.02),
            Vector3::new(0.11, 0.01, 0.01),
            Vector3::new(0.12, 0.01, 0.01),
        ];
        let labels = [0, 0, 1, 2];
        let q = build_reference_queries(pts.iter().zip(labels), 0.2);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].label, 0);
        assert!((q[0].position - Vector3::new(0.015, 0.015, 0.015)).norm() < 1e-15);
    }

    #[test]
    fn reference_query_count_matches_recount() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts: Vec<(Vector3<f64>, usize)> = (0..100)
            .map(|_| {
                let p = Vector3::new(next() * 0.3, next() * 0.3, next() * 0.1);
                (p, (next() * 3.0) as usize)
            })
            .collect();
        let q = build_reference_queries(pts.iter().map(|(p, l)| (p, *l)), 0.2);
        let mut groups: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (p, l) in &pts {
            let k = [
                (p.x / 0.05).floor() as i64,
                (p.y / 0.05).floor() as i64,
                (p.z / 0.05).floor() as i64,
            ];
            groups.entry(k).or_default().push(*l);
        }
        let consistent = groups
            .values()
            .filter(|ls| ls.iter().all(|l| *l == ls[0]))
            .count();
        assert_eq!(q.len(), consistent);
    }

    #[test]
    fn uniform_labels_keep_every_voxel() {
        let pts: Vec<Vector3<f64>> = (0..50).map(|i| Vector3::new(i as f64 * 0.05 + 0.01, 0.0, 0.0)).collect();
        let q = build_reference_queries(pts.iter().map(|p| (p, 2)), 0.2);
        assert_eq!(q.len(), 50);
    }
}
