//! Synthetic drive through a parametric scene with range-dependent label
//! corruption.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::belief::ClassProbability;
use crate::gaussian::EvidentialPoint;
use crate::map::frame::{write_frame, write_truth, Frame};

pub const TERRAIN: usize = 0;
pub const ROAD: usize = 1;
pub const FENCE: usize = 2;
pub const VEGETATION: usize = 3;
pub const CLASS_NAMES: [&str; 4] = ["terrain", "road", "fence", "vegetation"];

/// A surface patch with its true class.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// Horizontal ground rectangle at `z = 0`; road where `|y| < road_half_width`.
    Ground {
        x: (f64, f64),
        y: (f64, f64),
        road_half_width: f64,
    },
    /// Vertical strip in the plane `y = const`.
    Fence { x: (f64, f64), y: f64, z: (f64, f64) },
    /// Upper half of an axis-aligned ellipsoid resting on the ground.
    Blob { center: Vector3<f64>, radii: Vector3<f64> },
}

impl Surface {
    fn area(&self) -> f64 {
        match self {
            Surface::Ground { x, y, .. } => (x.1 - x.0) * (y.1 - y.0),
            Surface::Fence { x, z, .. } => (x.1 - x.0) * (z.1 - z.0),
            Surface::Blob { radii, .. } => {
                // Thomsen's approximation, halved.
                let p = 1.6075;
                let (a, b, c) = (radii.x.powf(p), radii.y.powf(p), radii.z.powf(p));
                2.0 * std::f64::consts::PI * ((a * b + a * c + b * c) / 3.0).powf(1.0 / p)
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vector3<f64>, usize) {
        match self {
            Surface::Ground {
                x,
                y,
                road_half_width,
            } => {
                let p = Vector3::new(rng.random_range(x.0..x.1), rng.random_range(y.0..y.1), 0.0);
                let class = if p.y.abs() < *road_half_width { ROAD } else { TERRAIN };
                (p, class)
            }
            Surface::Fence { x, y, z } => (
                Vector3::new(rng.random_range(x.0..x.1), *y, rng.random_range(z.0..z.1)),
                FENCE,
            ),
            Surface::Blob { center, radii } => {
                let n = Normal::<f64>::new(0.0, 1.0).unwrap();
                let mut d = Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng).abs());
                while d.norm() < 1e-9 {
                    d = Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng).abs());
                }
                let d = d.normalize();
                (center + d.component_mul(radii), VEGETATION)
            }
        }
    }
}

/// Scene layout, sensor path and noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub surfaces: Vec<Surface>,
    pub path_start: Vector3<f64>,
    pub path_end: Vector3<f64>,
    pub points_per_frame: usize,
    pub max_range: f64,
    /// Inside this range every candidate is kept; beyond it the acceptance
    /// falls as `(near_range/r)²`.
    pub near_range: f64,
    pub position_sigma: f64,
    /// Corruption probability approached at long range.
    pub max_corruption: f64,
    pub corruption_midpoint: f64,
    pub corruption_width: f64,
    /// Standard deviation of the noise added to the reported uncertainty.
    pub u_jitter: f64,
    /// Share of the non-uncertain mass given to the predicted class.
    pub prediction_sharpness: f64,
}

impl SceneSpec {
    /// Ground with a road, a fence along the road and vegetation blobs, driven
    /// along the road centerline.
    pub fn standard(seed: u64) -> Self {
        let mut surfaces = vec![
            Surface::Ground {
                x: (-10.0, 50.0),
                y: (-14.0, 14.0),
                road_half_width: 2.0,
            },
            Surface::Fence {
                x: (5.0, 35.0),
                y: 6.0,
                z: (0.0, 1.5),
            },
        ];
        let blobs = [
            ([8.0, -6.0], [1.2, 1.0, 0.9]),
            ([14.0, -8.5], [1.5, 1.2, 1.1]),
            ([20.0, -5.0], [1.0, 1.0, 0.8]),
            ([26.5, -7.5], [1.8, 1.3, 1.2]),
            ([33.0, -5.5], [1.1, 0.9, 1.0]),
            ([12.0, 9.0], [1.4, 1.1, 1.3]),
            ([23.0, 10.0], [1.6, 1.4, 1.1]),
            ([37.0, 9.0], [1.2, 1.2, 0.9]),
            ([42.0, -4.0], [1.0, 1.3, 1.0]),
            ([3.0, -5.0], [0.9, 0.9, 0.8]),
        ];
        for (c, r) in blobs {
            surfaces.push(Surface::Blob {
                center: Vector3::new(c[0], c[1], 0.0),
                radii: Vector3::new(r[0], r[1], r[2]),
            });
        }
        Self {
            seed,
            surfaces,
            path_start: Vector3::new(2.0, 0.0, 1.5),
            path_end: Vector3::new(38.0, 0.0, 1.5),
            points_per_frame: 4000,
            max_range: 15.0,
            near_range: 3.0,
            position_sigma: 0.02,
            max_corruption: 0.3,
            corruption_midpoint: 9.0,
            corruption_width: 1.5,
            u_jitter: 0.05,
            prediction_sharpness: 0.8,
        }
    }

    /// Probability that a point observed at range `r` carries a wrong label.
    pub fn corruption_probability(&self, r: f64) -> f64 {
        if self.max_corruption == 0.0 {
            return 0.0;
        }
        self.max_corruption / (1.0 + (-(r - self.corruption_midpoint) / self.corruption_width).exp())
    }

    pub fn classes(&self) -> usize {
        CLASS_NAMES.len()
    }

    pub fn sensor_position(&self, frame: usize, frames: usize) -> Vector3<f64> {
        let t = if frames > 1 {
            frame as f64 / (frames - 1) as f64
        } else {
            0.0
        };
        self.path_start + (self.path_end - self.path_start) * t
    }
}

/// A generated frame with the true class of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub frame: Frame,
    pub truth: Vec<usize>,
}

fn predicted_distribution(
    classes: usize,
    predicted: usize,
    u: f64,
    sharpness: f64,
) -> ClassProbability {
    let rest = (1.0 - sharpness) / (classes - 1) as f64;
    let share = u / classes as f64;
    let probs: Vec<f64> = (0..classes)
        .map(|c| {
            let q = if c == predicted { sharpness } else { rest };
            (1.0 - u) * q + share
        })
        .collect();
    let sum: f64 = probs.iter().sum();
    ClassProbability::new(probs.iter().map(|p| p / sum).collect()).expect("normalized")
}

/// Generates `frames` frames. Identical specs give identical output.
pub fn generate_scene(spec: &SceneSpec, frames: usize) -> Vec<SceneFrame> {
    let classes = spec.classes();
    let areas: Vec<f64> = spec.surfaces.iter().map(Surface::area).collect();
    let total_area: f64 = areas.iter().sum();
    let pos_noise = Normal::new(0.0, spec.position_sigma.max(0.0)).unwrap();
    let u_noise = Normal::new(0.0, spec.u_jitter.max(0.0)).unwrap();
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(f as u64 + 1);
        let sensor = spec.sensor_position(f, frames);
        let mut points = Vec::with_capacity(spec.points_per_frame);
        let mut truth = Vec::with_capacity(spec.points_per_frame);
        while points.len() < spec.points_per_frame {
            let mut pick = rng.random::<f64>() * total_area;
            let mut surface = &spec.surfaces[spec.surfaces.len() - 1];
            for (s, a) in spec.surfaces.iter().zip(&areas) {
                if pick < *a {
                    surface = s;
                    break;
                }
                pick -= a;
            }
            let (clean, class) = surface.sample(&mut rng);
            let range = (clean - sensor).norm();
            if range > spec.max_range || range < 0.5 {
                continue;
            }
            let accept = (spec.near_range / range).powi(2).min(1.0);
            if rng.random::<f64>() >= accept {
                continue;
            }
            let position = clean
                + Vector3::new(
                    pos_noise.sample(&mut rng),
                    pos_noise.sample(&mut rng),
                    pos_noise.sample(&mut rng),
                );
            let rho = spec.corruption_probability(range);
            let predicted = if rng.random::<f64>() < rho {
                let other = rng.random_range(0..classes - 1);
                if other >= class {
                    other + 1
                } else {
                    other
                }
            } else {
                class
            };
            let u = (rho + u_noise.sample(&mut rng)).clamp(0.0, 1.0);
            let prob = predicted_distribution(classes, predicted, u, spec.prediction_sharpness);
            let observed_range = (position - sensor).norm();
            points.push(
                EvidentialPoint::new(position, prob, u, observed_range).expect("valid point"),
            );
            truth.push(class);
        }
        out.push(SceneFrame {
            frame: Frame {
                classes,
                origin: sensor,
                points,
            },
            truth,
        });
    }
    out
}

/// Writes `frame_NNNN.txt` and `frame_NNNN.truth` for each frame; returns the
/// frame file paths in order.
pub fn write_scene(frames: &[SceneFrame], dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("frame_{i:04}.txt"));
        fs::write(&path, write_frame(&f.frame))?;
        fs::write(truth_path(&path), write_truth(&f.truth))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Sidecar path for a frame file: same stem, `.truth` extension.
pub fn truth_path(frame_path: &Path) -> PathBuf {
    frame_path.with_extension("truth")
}
