//! Evaluation: metrics, reference queries, synthetic scenes and experiment
//! runs.

mod experiment;
mod metrics;
pub mod scene;

use thiserror::Error;

pub use experiment::{
    build_map, evaluate, rows_to_csv, run_experiment, scene_queries, subsample, CellScores,
    ExperimentRow, ExperimentSpec, CSV_HEADER,
};
pub use metrics::{build_reference_queries, ConfusionTally, Metrics, ReferenceQuery};
pub use scene::{generate_scene, SceneFrame, SceneSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no queries to score")]
    NoQueries,
}
