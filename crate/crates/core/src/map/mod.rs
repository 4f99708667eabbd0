//! The mapping engine: per-frame ingestion, voxel/continuous/BEV queries and
//! export.

mod bev;
mod config;
mod contribution;
mod export;
pub mod frame;
mod grid;
mod store;

use rustc_hash::FxHashSet as HashSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use thiserror::Error;

pub use bev::{BevGrid, BevIndex};
pub use config::{ConfigError, MapConfig, Mode, QueryMode};
pub use contribution::{Contribution, Footprint, Footprint2};
pub use grid::{QueryResult, VoxelGrid, VoxelIndex};
pub use store::{PrimitiveStore, StoredPrimitive};

use crate::belief::ClassProbability;
use crate::bki::DirichletCell;
use crate::ellipsoid::EllipsoidError;
use crate::gaussian::{build_frame_primitives, EvidentialPoint, GaussianError};
use crate::kernel::{u_threshold, KernelError};
use crate::refine::{merge_pass_near, prune_pass_near};
use crate::spatial::SpatialHash;

#[derive(Debug, Error)]
pub enum MapError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Ellipsoid(#[from] EllipsoidError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

/// Wall time spent in each pipeline stage for one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub construction: Duration,
    pub refinement: Duration,
    pub bki: Duration,
}

impl std::ops::AddAssign for StageTimings {
    fn add_assign(&mut self, rhs: Self) {
        self.construction += rhs.construction;
        self.refinement += rhs.refinement;
        self.bki += rhs.bki;
    }
}

/// What one call to [`Map::ingest_frame`] did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameReport {
    pub frame_index: u64,
    pub sensor_origin: Vector3<f64>,
    pub points: usize,
    pub skipped_points: usize,
    pub primitives_created: usize,
    pub merged: usize,
    pub pruned: usize,
    /// Primitives (or points, in baseline modes) written into the grid.
    pub applied: usize,
    /// Inputs dropped by the uncertainty threshold.
    pub filtered: usize,
    pub cells_touched: usize,
    pub store_size: usize,
    pub timings: StageTimings,
}

#[derive(Debug)]
struct LogIndex {
    hash: SpatialHash,
    radius: f64,
    centers: Vec<Vector3<f64>>,
}

#[derive(Debug)]
pub struct Map {
    config: MapConfig,
    grid: VoxelGrid,
    store: PrimitiveStore,
    log: Vec<Contribution>,
    frames: u64,
    skipped: u64,
    tau3: f64,
    log_index: OnceLock<LogIndex>,
    /// Means pruned since the last merge fixpoint; `None` when unknown, which
    /// forces a full refinement sweep.
    pruned_since_merge: Option<Vec<Vector3<f64>>>,
}

impl Map {
    pub fn new(config: MapConfig) -> Result<Self, MapError> {
        config.validate()?;
        let grid = VoxelGrid::new(
            config.voxel_resolution,
            config.origin,
            config.num_classes,
            config.alpha0,
        );
        let store = PrimitiveStore::new(config.refine_params().d_l);
        let tau3 = config.tau(3);
        Ok(Self {
            config,
            grid,
            store,
            log: Vec::new(),
            frames: 0,
            skipped: 0,
            tau3,
            log_index: OnceLock::new(),
            pruned_since_merge: Some(Vec::new()),
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn store(&self) -> &PrimitiveStore {
        &self.store
    }

    pub fn contributions(&self) -> &[Contribution] {
        &self.log
    }

    pub fn frames_ingested(&self) -> u64 {
        self.frames
    }

    pub fn skipped_points(&self) -> u64 {
        self.skipped
    }

    fn valid_points(&self, points: &[EvidentialPoint]) -> Vec<EvidentialPoint> {
        points
            .iter()
            .filter(|p| p.prob.class_count() == self.config.num_classes && p.validate().is_ok())
            .cloned()
            .collect()
    }

    /// Runs the configured pipeline on one frame. Invalid points are skipped
    /// and counted; an empty frame changes nothing but the frame counter.
    pub fn ingest_frame(
        &mut self,
        points: &[EvidentialPoint],
        sensor_origin: Vector3<f64>,
    ) -> Result<FrameReport, MapError> {
        let valid = self.valid_points(points);
        let mut report = FrameReport {
            frame_index: self.frames,
            sensor_origin,
            points: points.len(),
            skipped_points: points.len() - valid.len(),
            ..Default::default()
        };
        self.skipped += report.skipped_points as u64;
        if !valid.is_empty() {
            self.log_index = OnceLock::new();
            let mut touched = HashSet::default();
            match self.config.mode {
                Mode::Scsm => self.ingest_scsm(&valid, &mut report, &mut touched),
                Mode::Sbki => self.ingest_sbki(&valid, &mut report, &mut touched),
                Mode::Ebs => self.ingest_ebs(&valid, &mut report, &mut touched)?,
                Mode::E2bki => self.ingest_e2bki(&valid, &mut report, &mut touched)?,
            }
            report.cells_touched = touched.len();
        }
        report.store_size = self.store.len();
        self.frames += 1;
        Ok(report)
    }

    fn ingest_scsm(
        &mut self,
        points: &[EvidentialPoint],
        report: &mut FrameReport,
        touched: &mut HashSet<VoxelIndex>,
    ) {
        let start = Instant::now();
        let classes = self.config.num_classes;
        for p in points {
            let y = ClassProbability::one_hot(classes, p.label()).into_inner();
            self.apply(Contribution::voxel(p.position, y, p.uncertainty), touched);
        }
        report.applied = points.len();
        report.timings.bki = start.elapsed();
    }

    fn ingest_sbki(
        &mut self,
        points: &[EvidentialPoint],
        report: &mut FrameReport,
        touched: &mut HashSet<VoxelIndex>,
    ) {
        let start = Instant::now();
        let classes = self.config.num_classes;
        let l = self.config.kernel.length_scale;
        for p in points {
            let y = ClassProbability::one_hot(classes, p.label()).into_inner();
            self.apply(Contribution::point(p.position, y, p.uncertainty, l), touched);
        }
        report.applied = points.len();
        report.timings.bki = start.elapsed();
    }

    fn ingest_ebs(
        &mut self,
        points: &[EvidentialPoint],
        report: &mut FrameReport,
        touched: &mut HashSet<VoxelIndex>,
    ) -> Result<(), MapError> {
        let start = Instant::now();
        let us: Vec<f64> = points.iter().map(|p| p.uncertainty).collect();
        let thr = u_threshold(&us, self.config.kernel.u_percentile)?;
        for p in points {
            if p.uncertainty > thr {
                report.filtered += 1;
                continue;
            }
            let support = self.config.kernel.effective_length(p.uncertainty);
            let c = Contribution::point(p.position, p.prob.probs().to_vec(), p.uncertainty, support);
            self.apply(c, touched);
            report.applied += 1;
        }
        report.timings.bki = start.elapsed();
        Ok(())
    }

    fn ingest_e2bki(
        &mut self,
        points: &[EvidentialPoint],
        report: &mut FrameReport,
        touched: &mut HashSet<VoxelIndex>,
    ) -> Result<(), MapError> {
        let start = Instant::now();
        let created = build_frame_primitives(points, &self.config.cluster, self.frames)?;
        report.primitives_created = created.len();
        let inserted: Vec<Vector3<f64>> = created.iter().map(|g| g.mean()).collect();
        self.store
            .items
            .extend(created.into_iter().map(|primitive| StoredPrimitive {
                primitive,
                fresh: true,
            }));
        report.timings.construction = start.elapsed();

        let start = Instant::now();
        let params = self.config.refine_params();
        let pending = self.pruned_since_merge.take();
        let known = pending.is_some();
        let mut changed = inserted;
        if self.config.enable_merge {
            let focus = pending.map(|mut p| {
                p.extend_from_slice(&changed);
                p
            });
            let (merged, moved) = merge_pass_near(&mut self.store.items, &params, focus);
            report.merged = merged;
            changed.extend(moved);
        }
        let mut removed = Vec::new();
        if self.config.enable_prune {
            let focus = known.then_some(changed.as_slice());
            let (pruned, gone) = prune_pass_near(&mut self.store.items, &params, focus);
            report.pruned = pruned;
            removed = gone;
        }
        self.pruned_since_merge = Some(removed);
        self.store.reindex();
        report.timings.refinement = start.elapsed();

        let start = Instant::now();
        let floor = self.config.cov_floor();
        let mut batch = Vec::new();
        for item in self.store.items.iter_mut().filter(|s| s.fresh) {
            item.fresh = false;
            let g = &item.primitive;
            batch.push((g.mean(), g.regularized_covariance(floor), g.prob.probs().to_vec(), g.uncertainty()));
        }
        if !batch.is_empty() {
            let us: Vec<f64> = batch.iter().map(|b| b.3).collect();
            let thr = u_threshold(&us, self.config.kernel.u_percentile)?;
            for (mean, cov, prob, u) in batch {
                if u > thr {
                    report.filtered += 1;
                    continue;
                }
                let support = self.config.kernel.effective_length(u);
                let c = Contribution::ellipsoid(mean, cov, self.tau3, prob, u, support)?;
                self.apply(c, touched);
                report.applied += 1;
            }
        }
        report.timings.bki = start.elapsed();
        Ok(())
    }

    /// Writes one contribution into the grid and appends it to the log.
    fn apply(&mut self, c: Contribution, touched: &mut HashSet<VoxelIndex>) {
        if let Footprint::Voxel = c.footprint {
            let idx = self.grid.index(&c.center);
            self.grid.cell_mut(idx).accumulate(1.0, &c.prob, c.u);
            touched.insert(idx);
        } else {
            let mut cells = Vec::new();
            self.grid.cells_within(&c.center, c.reach(), &mut cells);
            for idx in cells {
                let w = c.weight(&self.grid.center(idx));
                if w > 0.0 {
                    self.grid.cell_mut(idx).accumulate(w, &c.prob, c.u);
                    touched.insert(idx);
                }
            }
        }
        self.log.push(c);
    }

    /// Stored cell at `idx`.
    pub fn query_voxel(&self, idx: VoxelIndex) -> QueryResult {
        self.grid.query(idx)
    }

    fn log_index(&self) -> &LogIndex {
        self.log_index.get_or_init(|| {
            let centers: Vec<Vector3<f64>> = self.log.iter().map(|c| c.center).collect();
            let radius = self.log.iter().map(Contribution::reach).fold(0.0, f64::max);
            let cell = if radius > 0.0 {
                radius
            } else {
                self.config.voxel_resolution
            };
            LogIndex {
                hash: SpatialHash::build(cell, &centers),
                radius,
                centers,
            }
        })
    }

    /// Transient cell at an arbitrary location, built by replaying the
    /// contributions that reach it in their original order. Counting maps
    /// have no spatial kernel and fall back to the enclosing voxel.
    pub fn query_point(&self, x: &Vector3<f64>) -> QueryResult {
        if self.config.mode == Mode::Scsm {
            return self.grid.query(self.grid.index(x));
        }
        let index = self.log_index();
        let mut cell = DirichletCell::new(self.config.num_classes, self.config.alpha0);
        let mut candidates = Vec::new();
        index.hash.within(&index.centers, x, index.radius, &mut candidates);
        for i in candidates {
            let c = &self.log[i];
            let w = c.weight(x);
            if w > 0.0 {
                cell.accumulate(w, &c.prob, c.u);
            }
        }
        QueryResult::from_cell(&cell)
    }

    /// Query according to the configured 3D query mode: the enclosing voxel
    /// or a continuous evaluation at `x`.
    pub fn query(&self, x: &Vector3<f64>) -> QueryResult {
        match self.config.query_mode {
            QueryMode::Continuous => self.query_point(x),
            _ => self.grid.query(self.grid.index(x)),
        }
    }

    /// Bird's-eye-view grid at the voxel resolution, built by projecting
    /// every contribution onto the xy plane.
    pub fn project_bev(&self) -> Result<BevGrid, MapError> {
        bev::project(self)
    }
}
