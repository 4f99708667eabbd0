//! Direct point-wise S-BKI and EBS updates used as reduction oracles.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::{E, PI};

use e2bki::belief::ClassProbability;
use e2bki::gaussian::EvidentialPoint;
use e2bki::map::{Map, MapConfig, Mode};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLASSES: usize = 3;
pub const POINTS: usize = 24;
pub const FRAMES: usize = 100;
pub const RES: f64 = 0.2;
pub const ALPHA0: f64 = 0.001;
pub const ELL: f64 = 0.2;
pub const BETA: f64 = 0.75;
pub const U_PCT: f64 = 0.10;

pub fn kernel(d: f64, l: f64) -> f64 {
    if d >= l {
        return 0.0;
    }
    let r = d / l;
    (2.0 + (2.0 * PI * r).cos()) / 3.0 * (1.0 - r) + (2.0 * PI * r).sin() / (2.0 * PI)
}

/// Random frame. `one_hot` frames carry y with u = 0; otherwise p is a
/// mixture that keeps every p^c ≥ u/C so no belief is clamped.
pub fn random_frame(rng: &mut ChaCha8Rng, one_hot: bool) -> Vec<EvidentialPoint> {
    (0..POINTS)
        .map(|_| {
            let x = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.4..0.4),
            );
            let label = rng.random_range(0..CLASSES);
            let (probs, u) = if one_hot {
                let mut y = vec![0.0; CLASSES];
                y[label] = 1.0;
                (y, 0.0)
            } else {
                let u: f64 = rng.random_range(0.0..1.0);
                let raw: Vec<f64> = (0..CLASSES)
                    .map(|c| rng.random_range(0.0..1.0) + if c == label { 1.0 } else { 0.0 })
                    .collect();
                let s: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw
                    .iter()
                    .map(|q| (1.0 - u) * q / s + u / CLASSES as f64)
                    .collect();
                let t: f64 = probs.iter().sum();
                (probs.iter().map(|p| p / t).collect(), u)
            };
            let range = rng.random_range(1.0..20.0);
            EvidentialPoint::new(x, ClassProbability::new(probs).unwrap(), u, range).unwrap()
        })
        .collect()
}

pub fn cell_index(x: f64) -> i64 {
    (x / RES).floor() as i64
}

pub fn center(i: i64) -> f64 {
    (i as f64 + 0.5) * RES
}

/// Direct point-wise accumulation over every cell whose center is within
/// the point's support. `support(u)` returns `None` for filtered points.
pub fn oracle<F>(frames: &[Vec<EvidentialPoint>], one_hot: bool, support: F) -> HashMap<[i64; 3], Vec<f64>>
where
    F: Fn(&[EvidentialPoint], &EvidentialPoint) -> Option<f64>,
{
    let mut cells: HashMap<[i64; 3], Vec<f64>> = HashMap::new();
    for frame in frames {
        for p in frame {
            let Some(l) = support(frame, p) else { continue };
            let lo: Vec<i64> = (0..3).map(|a| cell_index(p.position[a] - l) - 1).collect();
            let hi: Vec<i64> = (0..3).map(|a| cell_index(p.position[a] + l) + 1).collect();
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let c = Vector3::new(center(i), center(j), center(k));
                        let w = kernel((c - p.position).norm(), l);
                        if w <= 0.0 {
                            continue;
                        }
                        let alpha = cells.entry([i, j, k]).or_insert_with(|| vec![ALPHA0; CLASSES]);
                        for (a, q) in alpha.iter_mut().zip(p.prob.probs()) {
                            let y = if one_hot { (*q == 1.0) as u8 as f64 } else { *q };
                            *a += w * y;
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Per-frame threshold that drops the ⌈ũN⌉ most uncertain points.
pub fn frame_threshold(frame: &[EvidentialPoint]) -> f64 {
    let mut u: Vec<f64> = frame.iter().map(|p| p.uncertainty).collect();
    u.sort_by(f64::total_cmp);
    let k = (U_PCT * u.len() as f64 - 1e-9).ceil() as usize;
    if k == 0 {
        return u[u.len() - 1];
    }
    0.5 * (u[u.len() - k - 1] + u[u.len() - k])
}

pub fn ebs_support(frame: &[EvidentialPoint], p: &EvidentialPoint) -> Option<f64> {
    (p.uncertainty <= frame_threshold(frame)).then(|| ELL * BETA * E.powf(1.0 - p.uncertainty))
}

pub fn base_config(mode: Mode) -> MapConfig {
    let mut c = MapConfig {
        mode,
        num_classes: CLASSES,
        voxel_resolution: RES,
        alpha0: ALPHA0,
        ..MapConfig::default()
    };
    c.kernel.length_scale = ELL;
    c.kernel.beta = BETA;
    c.kernel.u_percentile = U_PCT;
    c
}

/// Point primitives, refinement off, zero-size ellipsoids.
pub fn degenerate(mut c: MapConfig) -> MapConfig {
    c.cluster.total_clusters = POINTS;
    c.enable_merge = false;
    c.enable_prune = false;
    c.mass_fraction = 0.0;
    c
}

pub fn build(config: MapConfig, frames: &[Vec<EvidentialPoint>]) -> Map {
    let mut map = Map::new(config).unwrap();
    for f in frames {
        map.ingest_frame(f, Vector3::zeros()).unwrap();
    }
    map
}

/// Largest |Δα| between `map` and `expected`; cells absent from `expected`
/// are compared against the prior.
pub fn max_alpha_error(map: &Map, expected: &HashMap<[i64; 3], Vec<f64>>) -> f64 {
    let mut worst: f64 = 0.0;
    for (idx, alpha) in expected {
        let cell = map
            .grid()
            .cell(*idx)
            .unwrap_or_else(|| panic!("cell {idx:?} missing"));
        for (a, b) in cell.alpha().iter().zip(alpha) {
            worst = worst.max((a - b).abs());
        }
    }
    for (idx, cell) in map.grid().sorted_cells() {
        if !expected.contains_key(&idx) {
            for a in cell.alpha() {
                worst = worst.max((a - ALPHA0).abs());
            }
        }
    }
    worst
}

pub fn assert_matches(map: &Map, expected: &HashMap<[i64; 3], Vec<f64>>) {
    let worst = max_alpha_error(map, expected);
    assert!(worst <= 1e-9, "max |Δα| = {worst:e}");
}

pub fn frames(seed: u64, one_hot: bool) -> Vec<Vec<EvidentialPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..FRAMES).map(|_| random_frame(&mut rng, one_hot)).collect()
}

