//! Gaussian primitives built from a frame of evidential points.
//!
//! A frame is partitioned by predicted class, each partition is clustered
//! with K-Means++, and every cluster becomes a primitive holding raw moments
//! (`Σx`, `Σxxᵀ`, count) plus the Dempster-Shafer fusion of its members'
//! semantics.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::belief::{self, BeliefError, BeliefMass, ClassProbability};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("cluster budget {total} is smaller than the {classes} non-empty classes")]
    BudgetTooSmall { total: usize, classes: usize },
    #[error("cannot build a primitive from an empty cluster")]
    EmptyCluster,
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// One observed 3D point with its predicted class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidentialPoint {
    pub position: Vector3<f64>,
    pub prob: ClassProbability,
    pub uncertainty: f64,
    /// Distance from the sensor origin at capture time.
    pub sensor_range: f64,
}

impl EvidentialPoint {
    pub fn new(
        position: Vector3<f64>,
        prob: ClassProbability,
        uncertainty: f64,
        sensor_range: f64,
    ) -> Result<Self> {
        let p = Self {
            position,
            prob,
            uncertainty,
            sensor_range,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(GaussianError::InvalidPoint("non-finite position".into()));
        }
        if !(0.0..=1.0).contains(&self.uncertainty) {
            return Err(GaussianError::InvalidPoint(format!(
                "uncertainty {} outside [0, 1]",
                self.uncertainty
            )));
        }
        if !(self.sensor_range >= 0.0) || !self.sensor_range.is_finite() {
            return Err(GaussianError::InvalidPoint(format!(
                "sensor range {}",
                self.sensor_range
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> usize {
        self.prob.argmax()
    }

    pub fn belief(&self) -> Result<BeliefMass> {
        Ok(belief::prob_to_belief(&self.prob, self.uncertainty)?)
    }
}

/// Anisotropic Gaussian in moment form with fused semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    /// First moment `Σx`.
    pub m1: Vector3<f64>,
    /// Second moment `Σxxᵀ`.
    pub m2: Matrix3<f64>,
    /// Normalization (number of aggregated points).
    pub eta: f64,
    pub semantics: BeliefMass,
    /// Cached `belief_to_prob(semantics)`.
    pub prob: ClassProbability,
    /// Mean sensor range of the aggregated points.
    pub sensor_dist: f64,
}

impl GaussianPrimitive {
    pub fn from_parts(
        m1: Vector3<f64>,
        m2: Matrix3<f64>,
        eta: f64,
        semantics: BeliefMass,
        sensor_dist: f64,
    ) -> Self {
        let prob = semantics.to_probability();
        Self {
            m1,
            m2,
            eta,
            semantics,
            prob,
            sensor_dist,
        }
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.m1 / self.eta
    }

    /// `Σ = M2/η − μμᵀ`, symmetrized.
    pub fn covariance(&self) -> Matrix3<f64> {
        let mu = self.mean();
        let cov = self.m2 / self.eta - mu * mu.transpose();
        (cov + cov.transpose()) * 0.5
    }

    /// Covariance with `floor · I` added.
    pub fn regularized_covariance(&self, floor: f64) -> Matrix3<f64> {
        self.covariance() + Matrix3::identity() * floor
    }

    pub fn label(&self) -> usize {
        self.prob.argmax()
    }

    pub fn uncertainty(&self) -> f64 {
        self.semantics.uncertainty()
    }

    /// Folds `other` into `self`: moments add, semantics are combined with
    /// Dempster's rule (kept unchanged on total conflict), and the sensor
    /// distance becomes the η-weighted mean.
    pub fn absorb(&mut self, other: &GaussianPrimitive) {
        let eta = self.eta + other.eta;
        self.sensor_dist = (self.sensor_dist * self.eta + other.sensor_dist * other.eta) / eta;
        self.m1 += other.m1;
        self.m2 += other.m2;
        self.eta = eta;
        if let Ok(fused) = belief::combine(&self.semantics, &other.semantics) {
            self.prob = fused.to_probability();
            self.semantics = fused;
        }
    }
}

/// Groups point indices by predicted class (lowest class index on ties).
pub fn partition_by_class(points: &[EvidentialPoint]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        out.entry(p.label()).or_default().push(i);
    }
    out
}

/// Splits `total_k` clusters across classes in proportion to their point
/// counts with largest-remainder rounding; every non-empty class gets at
/// least one cluster.
pub fn allocate_cluster_counts(
    sizes: &BTreeMap<usize, usize>,
    total_k: usize,
) -> Result<BTreeMap<usize, usize>> {
    let classes: Vec<(usize, usize)> = sizes
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(&c, &n)| (c, n))
        .collect();
    if classes.is_empty() {
        return Ok(BTreeMap::new());
    }
    if total_k < classes.len() {
        return Err(GaussianError::BudgetTooSmall {
            total: total_k,
            classes: classes.len(),
        });
    }
    let total_points: usize = classes.iter().map(|(_, n)| n).sum();
    let quotas: Vec<f64> = classes
        .iter()
        .map(|&(_, n)| total_k as f64 * n as f64 / total_points as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut leftover = total_k - counts.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..classes.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    // Lift empty classes to one cluster, taking from the largest allocation.
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .expect("non-empty");
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    Ok(classes
        .iter()
        .zip(counts)
        .map(|(&(c, _), k)| (c, k))
        .collect())
}

/// K-Means++ seeding followed by Lloyd iterations.
///
/// Returns one cluster index per position. `k` is clamped to `[1, N]`.
/// Iterations stop once assignments are stable or after `max_iters`;
/// emptied clusters are re-seeded with the point farthest from its center so
/// every cluster ends non-empty.
pub fn kmeanspp(positions: &[Vector3<f64>], k: usize, max_iters: usize, seed: u64) -> Vec<usize> {
    let n = positions.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    if k == n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vector3<f64>> = Vec::with_capacity(k);
    centers.push(positions[rng.random_range(0..n)]);
    let mut nearest: Vec<f64> = positions
        .iter()
        .map(|p| (p - centers[0]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = positions[next];
        centers.push(c);
        for (d, p) in nearest.iter_mut().zip(positions) {
            *d = d.min((p - c).norm_squared());
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let sorted = SortedCenters::new(&centers);
        for (i, p) in positions.iter().enumerate() {
            let best = sorted.nearest(&centers, p);
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![Vector3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &a) in positions.iter().zip(&assignment) {
            sums[a] += p;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
        if counts.iter().any(|&c| c == 0) {
            reseed_empty(positions, &mut assignment, &mut centers, &mut counts);
            changed = true;
        }
        if !changed {
            break;
        }
    }
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        reseed_empty(positions, &mut assignment, &mut centers, &mut counts);
    }
    assignment
}

#[cfg(test)]
fn nearest_center(centers: &[Vector3<f64>], p: &Vector3<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Centers sorted along x. Nearest-center lookups scan outward from the
/// query's x and stop once the x gap alone exceeds the best distance; the
/// answer (lowest index among ties) equals [`nearest_center`].
struct SortedCenters {
    order: Vec<usize>,
    xs: Vec<f64>,
}

impl SortedCenters {
    fn new(centers: &[Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..centers.len()).collect();
        order.sort_by(|&a, &b| centers[a].x.total_cmp(&centers[b].x).then(a.cmp(&b)));
        let xs = order.iter().map(|&j| centers[j].x).collect();
        Self { order, xs }
    }

    fn nearest(&self, centers: &[Vector3<f64>], p: &Vector3<f64>) -> usize {
        let start = self.xs.partition_point(|&x| x < p.x);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        let visit = |j: usize, best: &mut usize, best_d: &mut f64| {
            let d = (p - centers[j]).norm_squared();
            if d < *best_d || (d == *best_d && j < *best) {
                *best_d = d;
                *best = j;
            }
        };
        let (mut up, mut down) = (start, start);
        loop {
            let mut moved = false;
            if up < self.xs.len() {
                let dx = self.xs[up] - p.x;
                if dx * dx <= best_d {
                    visit(self.order[up], &mut best, &mut best_d);
                    up += 1;
                    moved = true;
                } else {
                    up = self.xs.len();
                }
            }
            if down > 0 {
                let dx = p.x - self.xs[down - 1];
                if dx * dx <= best_d {
                    visit(self.order[down - 1], &mut best, &mut best_d);
                    down -= 1;
                    moved = true;
                } else {
                    down = 0;
                }
            }
            if !moved {
                return best;
            }
        }
    }
}

fn reseed_empty(
    positions: &[Vector3<f64>],
    assignment: &mut [usize],
    centers: &mut [Vector3<f64>],
    counts: &mut [usize],
) {
    for j in 0..centers.len() {
        if counts[j] > 0 {
            continue;
        }
        // Steal the point farthest from its own center among clusters that can
        // spare one.
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in positions.iter().enumerate() {
            let a = assignment[i];
            if counts[a] < 2 {
                continue;
            }
            let d = (p - centers[a]).norm_squared();
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[assignment[i]] -= 1;
            assignment[i] = j;
            counts[j] = 1;
            centers[j] = positions[i];
        }
    }
}

/// Aggregates a cluster of points into a primitive.
pub fn build_primitive(cluster: &[&EvidentialPoint]) -> Result<GaussianPrimitive> {
    if cluster.is_empty() {
        return Err(GaussianError::EmptyCluster);
    }
    let mut m1 = Vector3::zeros();
    let mut m2 = Matrix3::zeros();
    let mut range_sum = 0.0;
    let mut masses = Vec::with_capacity(cluster.len());
    for p in cluster {
        m1 += p.position;
        m2 += p.position * p.position.transpose();
        range_sum += p.sensor_range;
        masses.push(p.belief()?);
    }
    let fused = belief::combine_all(&masses)?;
    let eta = cluster.len() as f64;
    Ok(GaussianPrimitive::from_parts(
        m1,
        m2,
        eta,
        fused.mass,
        range_sum / eta,
    ))
}

/// Clustering settings for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub total_clusters: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            total_clusters: 1024,
            max_iters: 50,
            seed: 0,
        }
    }
}

/// Partition → allocate → cluster → aggregate for one frame. Primitives come
/// out ordered by class, then by cluster index.
pub fn build_frame_primitives(
    points: &[EvidentialPoint],
    params: &ClusterParams,
    frame_index: u64,
) -> Result<Vec<GaussianPrimitive>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let partition = partition_by_class(points);
    let sizes: BTreeMap<usize, usize> = partition.iter().map(|(&c, v)| (c, v.len())).collect();
    let budget = params.total_clusters.max(partition.len());
    let counts = allocate_cluster_counts(&sizes, budget)?;
    let mut out = Vec::new();
    for (class, members) in &partition {
        let k = counts[class];
        let positions: Vec<Vector3<f64>> = members.iter().map(|&i| points[i].position).collect();
        let seed = mix_seed(params.seed, frame_index, *class as u64);
        let assignment = kmeanspp(&positions, k, params.max_iters, seed);
        let clusters = assignment.iter().copied().max().map_or(0, |m| m + 1);
        let mut groups: Vec<Vec<&EvidentialPoint>> = vec![Vec::new(); clusters];
        for (&i, &a) in members.iter().zip(&assignment) {
            groups[a].push(&points[i]);
        }
        for g in groups.iter().filter(|g| !g.is_empty()) {
            out.push(build_primitive(g)?);
        }
    }
    Ok(out)
}

/// SplitMix64-style mixing so per-class clustering runs get independent
/// streams from one user seed.
fn mix_seed(seed: u64, frame: u64, class: u64) -> u64 {
    let mut z = seed
        .wrapping_add(frame.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(class.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
