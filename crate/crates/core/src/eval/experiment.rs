//! Experiment matrix over modes, frame subsampling and corruption levels.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::metrics::{build_reference_queries, ConfusionTally, Metrics, ReferenceQuery};
use super::scene::{generate_scene, SceneFrame, SceneSpec};
use crate::map::{Map, MapConfig, MapError, Mode};

pub const CSV_HEADER: &str =
    "mode,seed,frame_fraction,corruption,miou,acc,brier,wall_ms,brier_var,brier_utotal";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    pub frame_fractions: Vec<f64>,
    /// Long-range corruption levels substituted into the scene.
    pub corruptions: Vec<f64>,
    pub frames: usize,
    /// Scene template; its seed is replaced per run.
    pub scene: SceneSpec,
    /// Map template; mode and clustering seed are replaced per run.
    pub config: MapConfig,
}

impl ExperimentSpec {
    pub fn standard(seeds: Vec<u64>) -> Self {
        Self {
            seeds,
            modes: Mode::ALL.to_vec(),
            frame_fractions: vec![1.0, 0.2, 0.04],
            corruptions: vec![0.3],
            frames: 50,
            scene: SceneSpec::standard(0),
            config: MapConfig::default(),
        }
    }
}

/// Scores of one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScores {
    pub metrics: Metrics,
    /// Brier with confidence `1 − Var/max(Var)`.
    pub brier_var: Option<f64>,
    /// Brier with confidence `1 − u_total`.
    pub brier_utotal: Option<f64>,
    pub primitives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub mode: Mode,
    pub seed: u64,
    pub frame_fraction: f64,
    pub corruption: f64,
    pub wall_ms: f64,
    pub result: Result<CellScores, String>,
}

impl ExperimentRow {
    /// Brier under the mode's own confidence: `u_total` for the full
    /// pipeline, normalized variance for the baselines.
    pub fn native_brier(&self) -> Option<f64> {
        let s = self.result.as_ref().ok()?;
        match self.mode {
            Mode::E2bki => s.brier_utotal,
            _ => s.brier_var,
        }
    }

    pub fn acc(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|s| s.metrics.acc)
    }
}

/// Indices of the frames kept when using `fraction` of them: every
/// `round(1/fraction)`-th frame starting at the first.
pub fn subsample(frames: usize, fraction: f64) -> Vec<usize> {
    let stride = (1.0 / fraction).round().max(1.0) as usize;
    (0..frames).step_by(stride).collect()
}

/// Reference queries over every frame of a scene.
pub fn scene_queries(scene: &[SceneFrame], resolution: f64) -> Vec<ReferenceQuery> {
    build_reference_queries(
        scene
            .iter()
            .flat_map(|f| f.frame.points.iter().map(|p| &p.position).zip(f.truth.iter().copied())),
        resolution,
    )
}

/// Builds a map from the chosen frames.
pub fn build_map(config: &MapConfig, scene: &[SceneFrame], frames: &[usize]) -> Result<Map, MapError> {
    let mut map = Map::new(config.clone())?;
    for &i in frames {
        let f = &scene[i].frame;
        map.ingest_frame(&f.points, f.origin)?;
    }
    Ok(map)
}

/// Scores `map` on `queries` through its configured 3D query mode.
pub fn evaluate(map: &Map, queries: &[ReferenceQuery]) -> Result<CellScores, String> {
    let classes = map.config().num_classes;
    let mut by_u = ConfusionTally::new(classes);
    let mut by_var = ConfusionTally::new(classes);
    for q in queries {
        let r = map.query(&q.position);
        by_u.record(q.label, r.label.map(|l| (l, r.confidence())));
        by_var.record(q.label, r.label.map(|l| (l, r.variance_confidence())));
    }
    let metrics = by_u.metrics().map_err(|e| e.to_string())?;
    let brier_var = by_var.metrics().map_err(|e| e.to_string())?.brier;
    Ok(CellScores {
        brier_utotal: metrics.brier,
        brier_var,
        metrics,
        primitives: map.store().len(),
    })
}

/// Runs every (seed, corruption, mode, fraction) cell. Scenes are generated
/// once per (seed, corruption); cells run in parallel. Rows come back in a
/// fixed order regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Vec<ExperimentRow> {
    let scenes: Vec<(u64, f64)> = spec
        .seeds
        .iter()
        .flat_map(|&s| spec.corruptions.iter().map(move |&c| (s, c)))
        .collect();
    scenes
        .par_iter()
        .flat_map_iter(|&(seed, corruption)| {
            let scene_spec = SceneSpec {
                seed,
                max_corruption: corruption,
                ..spec.scene.clone()
            };
            let scene = generate_scene(&scene_spec, spec.frames);
            let queries = scene_queries(&scene, spec.config.voxel_resolution);
            let cells: Vec<(Mode, f64)> = spec
                .modes
                .iter()
                .flat_map(|&m| spec.frame_fractions.iter().map(move |&f| (m, f)))
                .collect();
            let rows: Vec<ExperimentRow> = cells
                .par_iter()
                .map(|&(mode, fraction)| {
                    let mut config = spec.config.clone();
                    config.mode = mode;
                    config.cluster.seed = seed;
                    let keep = subsample(scene.len(), fraction);
                    let start = Instant::now();
                    let built = build_map(&config, &scene, &keep);
                    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    let result = built
                        .map_err(|e| e.to_string())
                        .and_then(|map| evaluate(&map, &queries));
                    if let Err(e) = &result {
                        log::warn!("{mode} seed {seed} fraction {fraction}: {e}");
                    }
                    ExperimentRow {
                        mode,
                        seed,
                        frame_fraction: fraction,
                        corruption,
                        wall_ms,
                        result,
                    }
                })
                .collect();
            rows
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// CSV report. With `wall_time` false the `wall_ms` column is written as
/// `NA`, which makes the file a pure function of the inputs.
pub fn rows_to_csv(rows: &[ExperimentRow], wall_time: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let wall = if wall_time {
            format!("{:.3}", r.wall_ms)
        } else {
            "NA".to_string()
        };
        let (miou, acc, bv, bu) = match &r.result {
            Ok(s) => (
                Some(s.metrics.miou),
                Some(s.metrics.acc),
                s.brier_var,
                s.brier_utotal,
            ),
            Err(_) => (None, None, None, None),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.mode,
            r.seed,
            r.frame_fraction,
            r.corruption,
            opt(miou),
            opt(acc),
            opt(r.native_brier()),
            wall,
            opt(bv),
            opt(bu)
        );
    }
    out
}
