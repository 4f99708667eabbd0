//! Temporal refinement of the persistent primitive set.
//!
//! Merging folds primitives that sit within `d_S` of a primitive whose whole
//! `d_L` neighborhood agrees on the label. Pruning drops a primitive when a
//! neighbor within `d_L` disagrees on the label and was observed from
//! substantially closer (`δ_j > ε·δ_i`).

use nalgebra::Vector3;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::gaussian::GaussianPrimitive;
use crate::spatial::{CellKey, SpatialHash};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("radii must satisfy 0 < d_S <= d_L (d_S = {d_s}, d_L = {d_l})")]
    BadRadii { d_s: f64, d_l: f64 },
    #[error("pruning ratio must be >= 1, got {0}")]
    BadEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    /// Consistency radius.
    pub d_l: f64,
    /// Merge radius.
    pub d_s: f64,
    /// Pruning ratio on sensor distances.
    pub epsilon: f64,
}

impl RefineParams {
    /// `d_L = 5ℓ`, `d_S = ℓ`, `ε = 2.5`.
    pub fn from_length_scale(length_scale: f64) -> Self {
        Self {
            d_l: 5.0 * length_scale,
            d_s: length_scale,
            epsilon: 2.5,
        }
    }

    pub fn validate(&self) -> Result<(), RefineError> {
        if !(self.d_s > 0.0 && self.d_s <= self.d_l) {
            return Err(RefineError::BadRadii {
                d_s: self.d_s,
                d_l: self.d_l,
            });
        }
        if !(self.epsilon >= 1.0) {
            return Err(RefineError::BadEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// Anything that wraps a primitive and can absorb a sibling during merging.
pub trait Refinable: Clone {
    fn primitive(&self) -> &GaussianPrimitive;
    fn absorb(&mut self, other: &Self);
}

impl Refinable for GaussianPrimitive {
    fn primitive(&self) -> &GaussianPrimitive {
        self
    }

    fn absorb(&mut self, other: &Self) {
        GaussianPrimitive::absorb(self, other);
    }
}

/// Marks every primitive whose mean lies within `radius` of one of `focus`.
/// `None` marks all of them.
fn focus_mask(
    means: &[Vector3<f64>],
    grid: &SpatialHash,
    focus: Option<&[Vector3<f64>]>,
    radius: f64,
) -> Vec<bool> {
    let Some(focus) = focus else {
        return vec![true; means.len()];
    };
    let mut mask = vec![false; means.len()];
    let mut found = Vec::new();
    for c in focus {
        grid.within(means, c, radius, &mut found);
        for &i in &found {
            mask[i] = true;
        }
    }
    mask
}

/// One merge sweep against a snapshot of means and labels taken at its
/// start. Targets are visited in insertion order; returns the number of
/// primitives folded away.
pub fn merge_sweep<T: Refinable>(items: &mut Vec<T>, params: &RefineParams) -> usize {
    merge_sweep_near(items, params, None).0
}

/// [`merge_sweep`] restricted to targets within `d_L` of `focus`. Also
/// returns the positions that changed: old and new means of every target
/// that absorbed something and old means of the absorbed.
pub fn merge_sweep_near<T: Refinable>(
    items: &mut Vec<T>,
    params: &RefineParams,
    focus: Option<&[Vector3<f64>]>,
) -> (usize, Vec<Vector3<f64>>) {
    let n = items.len();
    let mut changes = Vec::new();
    if n < 2 {
        return (0, changes);
    }
    let means: Vec<Vector3<f64>> = items.iter().map(|g| g.primitive().mean()).collect();
    let labels: Vec<usize> = items.iter().map(|g| g.primitive().label()).collect();
    let grid = SpatialHash::build(params.d_l, &means);
    let visit = focus_mask(&means, &grid, focus, params.d_l);
    let mut absorbed = vec![false; n];
    let mut neighbors = Vec::new();
    let mut merged = 0;
    for i in 0..n {
        if absorbed[i] || !visit[i] {
            continue;
        }
        if grid.any_within(&means, &means[i], params.d_l, |j| labels[j] != labels[i]) {
            continue;
        }
        grid.within(&means, &means[i], params.d_s, &mut neighbors);
        let before = merged;
        for &j in &neighbors {
            if j == i || absorbed[j] {
                continue;
            }
            let other = items[j].clone();
            items[i].absorb(&other);
            absorbed[j] = true;
            changes.push(means[j]);
            merged += 1;
        }
        if merged > before {
            changes.push(means[i]);
            changes.push(items[i].primitive().mean());
        }
    }
    if merged > 0 {
        let mut keep = absorbed.iter().map(|a| !a);
        items.retain(|_| keep.next().unwrap());
    }
    (merged, changes)
}

/// Repeats [`merge_sweep`] until a sweep merges nothing, so the result is a
/// fixpoint and a second call is a no-op. Returns the total merged count.
pub fn merge_pass<T: Refinable>(items: &mut Vec<T>, params: &RefineParams) -> usize {
    merge_pass_near(items, params, None).0
}

/// [`merge_pass`] for a set that was at a merge fixpoint before the
/// primitives at `focus` were inserted or removed. Gives the same result as
/// the full pass while visiting only primitives near a change. Returns the
/// merged count and every changed position.
pub fn merge_pass_near<T: Refinable>(
    items: &mut Vec<T>,
    params: &RefineParams,
    focus: Option<Vec<Vector3<f64>>>,
) -> (usize, Vec<Vector3<f64>>) {
    let mut total = 0;
    let mut all = Vec::new();
    let mut focus = focus;
    loop {
        let (merged, changes) = merge_sweep_near(items, params, focus.as_deref());
        if merged == 0 {
            return (total, all);
        }
        total += merged;
        all.extend_from_slice(&changes);
        focus = Some(changes);
    }
}

/// Drops every primitive `j` that has a neighbor `i` within `d_L` with a
/// different label and `δ_j > ε·δ_i`. All decisions use the pre-pass set, so
/// removals never cascade. Returns the number pruned.
pub fn prune_pass<T: Refinable>(items: &mut Vec<T>, params: &RefineParams) -> usize {
    prune_pass_near(items, params, None).0
}

/// [`prune_pass`] for a set where nothing would be pruned except near
/// `focus`. Returns the pruned count and the means of the removed.
pub fn prune_pass_near<T: Refinable>(
    items: &mut Vec<T>,
    params: &RefineParams,
    focus: Option<&[Vector3<f64>]>,
) -> (usize, Vec<Vector3<f64>>) {
    let flags = prune_flags_near(items, params, focus);
    let removed: Vec<Vector3<f64>> = items
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| f)
        .map(|(g, _)| g.primitive().mean())
        .collect();
    if !removed.is_empty() {
        let mut drop = flags.into_iter();
        items.retain(|_| !drop.next().unwrap());
    }
    (removed.len(), removed)
}

/// Which members of `items` [`prune_pass`] would remove.
pub fn prune_flags<T: Refinable>(items: &[T], params: &RefineParams) -> Vec<bool> {
    prune_flags_near(items, params, None)
}

fn prune_flags_near<T: Refinable>(
    items: &[T],
    params: &RefineParams,
    focus: Option<&[Vector3<f64>]>,
) -> Vec<bool> {
    let n = items.len();
    let means: Vec<Vector3<f64>> = items.iter().map(|g| g.primitive().mean()).collect();
    let labels: Vec<usize> = items.iter().map(|g| g.primitive().label()).collect();
    let dists: Vec<f64> = items.iter().map(|g| g.primitive().sensor_dist).collect();
    let grid = SpatialHash::build(params.d_l, &means);
    let visit = focus_mask(&means, &grid, focus, params.d_l);
    let classes = items
        .first()
        .map_or(0, |g| g.primitive().prob.probs().len());
    // Smallest sensor distance per label in each cell, to skip cells that
    // cannot hold a pruning neighbor.
    let closest: FxHashMap<CellKey, Vec<f64>> = grid
        .buckets()
        .map(|(key, bucket)| {
            let mut mins = vec![f64::INFINITY; classes];
            for &i in bucket {
                mins[labels[i]] = mins[labels[i]].min(dists[i]);
            }
            (*key, mins)
        })
        .collect();
    let r2 = params.d_l * params.d_l;
    (0..n)
        .map(|j| {
            if !visit[j] {
                return false;
            }
            let (lj, dj) = (labels[j], dists[j]);
            grid.any_bucket(&means[j], params.d_l, |key, bucket| {
                let could = closest[key]
                    .iter()
                    .enumerate()
                    .any(|(c, &d)| c != lj && dj > params.epsilon * d);
                could
                    && bucket.iter().any(|&i| {
                        labels[i] != lj
                            && dj > params.epsilon * dists[i]
                            && (means[i] - means[j]).norm_squared() <= r2
                    })
            })
        })
        .collect()
}
