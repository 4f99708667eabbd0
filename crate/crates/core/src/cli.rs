//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 missing or malformed
//! frame/input file, 3 configuration error. Results go to stdout as TSV or
//! CSV; diagnostics go to stderr.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::eval::scene::{generate_scene, write_scene, SceneSpec};
use crate::eval::{rows_to_csv, run_experiment, ExperimentSpec};
use crate::map::frame::{read_frame, Frame, FrameError};
use crate::map::{ConfigError, FrameReport, Map, MapConfig, MapError, Mode, QueryMode, QueryResult, StageTimings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(MapError),
    #[error("{0}")]
    Io(String),
}

impl From<MapError> for CliError {
    fn from(e: MapError) -> Self {
        match e {
            MapError::Config(c) => CliError::Config(c),
            other => CliError::Map(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Frame(_) | CliError::Input(_) => EXIT_INPUT,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Map(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "e2bki", version, about = "Evidential semantic mapping with Gaussian primitives")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a map from frame files and export it.
    Build(BuildArgs),
    /// Query an exported map at points read from a file.
    Query(QueryArgs),
    /// Print the bird's-eye-view grid of an exported map.
    Bev(BevArgs),
    /// Time the pipeline stages with merging on and off.
    Bench(BenchArgs),
    /// Run the mode x subsampling x corruption matrix and write a CSV.
    Experiment(ExperimentArgs),
    /// Write a synthetic scene as frame files with truth sidecars.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MapOptions {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub query_mode: Option<QueryMode>,
    /// Seed for every random choice in the run.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl MapOptions {
    pub fn resolve(&self) -> Result<MapConfig, CliError> {
        let mut config = match &self.config {
            Some(p) => MapConfig::load(p)?,
            None => MapConfig::default(),
        };
        if let Some(m) = self.mode {
            config.mode = m;
        }
        if let Some(q) = self.query_mode {
            config.query_mode = q;
        }
        if let Some(s) = self.seed {
            config.cluster.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub map: MapOptions,
    /// Frame files in ingestion order, or directories of `frame_*.txt`.
    #[arg(long, num_args = 1.., required = true)]
    pub frames: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Directory written by `build`.
    #[arg(long)]
    pub map: PathBuf,
    /// Whitespace-separated `x y z` per line.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long, value_enum)]
    pub query_mode: Option<QueryMode>,
}

#[derive(Debug, Args)]
pub struct BevArgs {
    #[arg(long)]
    pub map: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub map: MapOptions,
    /// Frame files; the standard synthetic scene is used when omitted.
    #[arg(long, num_args = 1..)]
    pub frames: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Base configuration; mode and seed are set per cell.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', value_enum)]
    pub modes: Vec<Mode>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.2, 0.04])]
    pub fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3])]
    pub corruptions: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub frame_count: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write `NA` in the wall_ms column so reruns are byte-identical.
    #[arg(long)]
    pub no_wall_time: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub frame_count: usize,
    #[arg(long)]
    pub points_per_frame: Option<usize>,
    /// Long-range label corruption probability.
    #[arg(long)]
    pub corruption: Option<f64>,
}

/// Inputs of a `build` run, checked before any work starts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub frames: Vec<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

impl RunManifest {
    /// Expands directories into their sorted `frame_*.txt` files and checks
    /// that every path exists.
    pub fn new(
        config: Option<PathBuf>,
        frames: &[PathBuf],
        out: PathBuf,
        seed: Option<u64>,
        mode: Option<Mode>,
    ) -> Result<Self, CliError> {
        if let Some(c) = &config {
            if !c.is_file() {
                return Err(CliError::Config(ConfigError::Io {
                    path: c.display().to_string(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "not found"),
                }));
            }
        }
        Ok(Self {
            config,
            frames: expand_frames(frames)?,
            out,
            seed,
            mode,
        })
    }
}

pub fn expand_frames(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.starts_with("frame_") && name.ends_with(".txt")
                })
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(CliError::Input(format!("{}: no frame_*.txt files", p.display())));
            }
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(CliError::Input(format!("{}: frame file not found", p.display())));
        }
    }
    Ok(out)
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
}

/// Parses `args` and runs the command, writing results to `out`. Returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_threads(cli.threads);
    let result = match &cli.command {
        Command::Build(a) => cmd_build(a, out),
        Command::Query(a) => cmd_query(a, out),
        Command::Bev(a) => cmd_bev(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
        Command::Generate(a) => cmd_generate(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

const REPORT_HEADER: &str = "frame\tpoints\tskipped\tcreated\tmerged\tpruned\tapplied\tfiltered\tcells_touched\tstore_size\tconstruction_ms\trefinement_ms\tbki_ms";

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn report_line(r: &FrameReport) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}",
        r.frame_index,
        r.points,
        r.skipped_points,
        r.primitives_created,
        r.merged,
        r.pruned,
        r.applied,
        r.filtered,
        r.cells_touched,
        r.store_size,
        ms(r.timings.construction),
        ms(r.timings.refinement),
        ms(r.timings.bki)
    )
}

fn load_frames(paths: &[PathBuf]) -> Result<Vec<Frame>, CliError> {
    paths
        .iter()
        .map(|p| read_frame(p).map_err(CliError::from))
        .collect()
}

pub fn cmd_build(args: &BuildArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = args.map.resolve()?;
    let manifest = RunManifest::new(
        args.map.config.clone(),
        &args.frames,
        args.out.clone(),
        args.map.seed,
        args.map.mode,
    )?;
    let mut map = Map::new(config)?;
    let mut reports = String::from(REPORT_HEADER);
    reports.push('\n');
    let mut points = 0usize;
    for path in &manifest.frames {
        let frame = read_frame(path)?;
        if frame.classes != map.config().num_classes {
            return Err(CliError::Input(format!(
                "{}: frame has {} classes, map expects {}",
                path.display(),
                frame.classes,
                map.config().num_classes
            )));
        }
        let r = map.ingest_frame(&frame.points, frame.origin)?;
        log::info!("{}: {} points, {} cells touched", path.display(), r.points, r.cells_touched);
        points += r.points;
        reports.push_str(&report_line(&r));
        reports.push('\n');
    }
    map.export(&manifest.out)?;
    let report_path = manifest.out.join("frames.tsv");
    fs::write(&report_path, reports).map_err(|e| io(&report_path, e))?;
    let summary = format!(
        "mode\t{}\nframes\t{}\npoints\t{}\nskipped\t{}\ncells\t{}\nprimitives\t{}\ncontributions\t{}\n",
        map.config().mode,
        manifest.frames.len(),
        points,
        map.skipped_points(),
        map.grid().len(),
        map.store().len(),
        map.contributions().len()
    );
    let summary_path = manifest.out.join("summary.tsv");
    fs::write(&summary_path, &summary).map_err(|e| io(&summary_path, e))?;
    write_out(out, &summary)
}

fn parse_points(path: &Path) -> Result<Vec<Vector3<f64>>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        match vals {
            Ok(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => {
                pts.push(Vector3::new(v[0], v[1], v[2]))
            }
            _ => {
                return Err(CliError::Input(format!(
                    "{}: line {}: expected `x y z`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(pts)
}

fn result_columns(q: &QueryResult) -> String {
    let mut s = match q.label {
        Some(l) => l.to_string(),
        None => "unknown".to_string(),
    };
    for e in &q.expectation {
        let _ = write!(s, "\t{e:.6}");
    }
    let u = q.uncertainty;
    let _ = write!(
        s,
        "\t{:.6e}\t{:.6}\t{:.6}\t{:.6}",
        q.variance, u.semantic, u.sparsity, u.total
    );
    s
}

fn result_header(classes: usize) -> String {
    let mut s = String::from("label");
    for c in 0..classes {
        let _ = write!(s, "\tp{c}");
    }
    s.push_str("\tvariance\tu_sem\tu_spa\tu_total");
    s
}

pub fn cmd_query(args: &QueryArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let map = Map::import(&args.map)?;
    let points = parse_points(&args.points)?;
    let mode = args.query_mode.unwrap_or(map.config().query_mode);
    let classes = map.config().num_classes;
    let mut text = format!("x\ty\tz\t{}\n", result_header(classes));
    let bev = match mode {
        QueryMode::Bev => Some(map.project_bev()?),
        _ => None,
    };
    for p in &points {
        let r = match (mode, &bev) {
            (QueryMode::Bev, Some(b)) => b.query(b.index(&Vector2::new(p.x, p.y))),
            (QueryMode::Continuous, _) => map.query_point(p),
            _ => map.query_voxel(map.grid().index(p)),
        };
        let _ = writeln!(text, "{}\t{}\t{}\t{}", p.x, p.y, p.z, result_columns(&r));
    }
    write_out(out, &text)
}

pub fn cmd_bev(args: &BevArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let map = Map::import(&args.map)?;
    let bev = map.project_bev()?;
    let classes = map.config().num_classes;
    let mut text = format!("i\tj\tx\ty\t{}\n", result_header(classes));
    for (idx, cell) in bev.cells() {
        let c = bev.center(*idx);
        let r = QueryResult::from_cell(cell);
        let _ = writeln!(text, "{}\t{}\t{:?}\t{:?}\t{}", idx[0], idx[1], c.x, c.y, result_columns(&r));
    }
    write_out(out, &text)
}

/// Stage totals of one timed run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchRun {
    pub timings: StageTimings,
    pub primitives_per_frame: Vec<usize>,
    pub applied: usize,
}

/// Ingests `frames` into a fresh map and totals the stage timings.
pub fn bench_once(config: &MapConfig, frames: &[Frame]) -> Result<BenchRun, MapError> {
    let mut map = Map::new(config.clone())?;
    let mut run = BenchRun::default();
    for f in frames {
        let r = map.ingest_frame(&f.points, f.origin)?;
        run.timings += r.timings;
        run.primitives_per_frame.push(r.store_size);
        run.applied += r.applied;
    }
    Ok(run)
}

/// Fastest of `repeats` runs per stage.
pub fn bench_best(config: &MapConfig, frames: &[Frame], repeats: usize) -> Result<BenchRun, MapError> {
    let mut best: Option<BenchRun> = None;
    for _ in 0..repeats.max(1) {
        let run = bench_once(config, frames)?;
        best = Some(match best {
            None => run,
            Some(mut b) => {
                b.timings.construction = b.timings.construction.min(run.timings.construction);
                b.timings.refinement = b.timings.refinement.min(run.timings.refinement);
                b.timings.bki = b.timings.bki.min(run.timings.bki);
                b
            }
        });
    }
    Ok(best.expect("at least one run"))
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = args.map.resolve()?;
    config.mode = Mode::E2bki;
    let frames = if args.frames.is_empty() {
        let spec = SceneSpec::standard(args.map.seed.unwrap_or(0));
        generate_scene(&spec, 50).into_iter().map(|f| f.frame).collect()
    } else {
        load_frames(&expand_frames(&args.frames)?)?
    };
    let on = bench_best(&MapConfig { enable_merge: true, ..config.clone() }, &frames, args.repeats)?;
    let off = bench_best(&MapConfig { enable_merge: false, ..config }, &frames, args.repeats)?;
    let mut text = String::from("stage\tmerge_on_ms\tmerge_off_ms\tratio_on_over_off\n");
    let stages = [
        ("construction", on.timings.construction, off.timings.construction),
        ("refinement", on.timings.refinement, off.timings.refinement),
        ("bki", on.timings.bki, off.timings.bki),
        (
            "total",
            on.timings.construction + on.timings.refinement + on.timings.bki,
            off.timings.construction + off.timings.refinement + off.timings.bki,
        ),
    ];
    for (name, a, b) in stages {
        let ratio = if b.is_zero() { f64::NAN } else { ms(a) / ms(b) };
        let _ = writeln!(text, "{name}\t{:.3}\t{:.3}\t{ratio:.4}", ms(a), ms(b));
    }
    let last = |r: &BenchRun| r.primitives_per_frame.last().copied().unwrap_or(0);
    let _ = writeln!(text, "primitives_final\t{}\t{}\t", last(&on), last(&off));
    let _ = writeln!(text, "primitives_applied\t{}\t{}\t", on.applied, off.applied);
    write_out(out, &text)
}

pub fn cmd_experiment(args: &ExperimentArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut spec = ExperimentSpec::standard(args.seeds.clone());
    if let Some(p) = &args.config {
        spec.config = MapConfig::load(p)?;
    }
    if !args.modes.is_empty() {
        spec.modes = args.modes.clone();
    }
    for &f in &args.fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::Config(ConfigError::Invalid(format!(
                "frame fraction {f} outside (0, 1]"
            ))));
        }
    }
    spec.frame_fractions = args.fractions.clone();
    spec.corruptions = args.corruptions.clone();
    spec.frames = args.frame_count;
    let rows = run_experiment(&spec);
    let csv = rows_to_csv(&rows, !args.no_wall_time);
    match &args.out {
        Some(p) => fs::write(p, csv).map_err(|e| io(p, e)),
        None => write_out(out, &csv),
    }
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut spec = SceneSpec::standard(args.seed);
    if let Some(n) = args.points_per_frame {
        spec.points_per_frame = n;
    }
    if let Some(c) = args.corruption {
        if !(0.0..=1.0).contains(&c) {
            return Err(CliError::Config(ConfigError::Invalid(format!(
                "corruption {c} outside [0, 1]"
            ))));
        }
        spec.max_corruption = c;
    }
    let frames = generate_scene(&spec, args.frame_count);
    let paths = write_scene(&frames, &args.out).map_err(|e| io(&args.out, e))?;
    let mut text = String::new();
    for p in paths {
        let _ = writeln!(text, "{}", p.display());
    }
    write_out(out, &text)
}
