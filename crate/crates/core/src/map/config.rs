//! Map configuration and its flat `key = value` text form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use thiserror::Error;

use crate::ellipsoid::chi2_quantile;
use crate::gaussian::ClusterParams;
use crate::kernel::KernelParams;
use crate::refine::RefineParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Which mapping rule is applied to incoming frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, clap::ValueEnum)]
pub enum Mode {
    /// Per-voxel counting, no spatial spread.
    Scsm,
    /// One-hot labels spread with the sparse kernel.
    Sbki,
    /// Class probabilities with the uncertainty-adaptive kernel.
    Ebs,
    /// Gaussian primitives with the ellipsoidal evidential kernel.
    E2bki,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Scsm, Mode::Sbki, Mode::Ebs, Mode::E2bki];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Scsm => "scsm",
            Mode::Sbki => "sbki",
            Mode::Ebs => "ebs",
            Mode::E2bki => "e2bki",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// How the map is read back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum QueryMode {
    Voxel3d,
    Bev,
    Continuous,
}

impl QueryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryMode::Voxel3d => "voxel3d",
            QueryMode::Bev => "bev",
            QueryMode::Continuous => "continuous",
        }
    }
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [QueryMode::Voxel3d, QueryMode::Bev, QueryMode::Continuous]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown query mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub voxel_resolution: f64,
    pub origin: Vector3<f64>,
    pub num_classes: usize,
    pub alpha0: f64,
    pub kernel: KernelParams,
    pub epsilon: f64,
    pub dl_scale: f64,
    pub ds_scale: f64,
    pub enable_merge: bool,
    pub enable_prune: bool,
    pub cluster: ClusterParams,
    /// Covariance floor is `(cov_floor_scale · voxel_resolution)²`.
    pub cov_floor_scale: f64,
    /// Probability mass enclosed by each primitive's ellipsoid; 0 collapses
    /// primitives to their means.
    pub mass_fraction: f64,
    pub mode: Mode,
    pub query_mode: QueryMode,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            voxel_resolution: 0.2,
            origin: Vector3::zeros(),
            num_classes: 4,
            alpha0: 0.001,
            kernel: KernelParams::default(),
            epsilon: 2.5,
            dl_scale: 5.0,
            ds_scale: 1.0,
            enable_merge: true,
            enable_prune: true,
            cluster: ClusterParams::default(),
            cov_floor_scale: 0.25,
            mass_fraction: 0.10,
            mode: Mode::E2bki,
            query_mode: QueryMode::Voxel3d,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl MapConfig {
    pub fn refine_params(&self) -> RefineParams {
        RefineParams {
            d_l: self.dl_scale * self.kernel.length_scale,
            d_s: self.ds_scale * self.kernel.length_scale,
            epsilon: self.epsilon,
        }
    }

    pub fn cov_floor(&self) -> f64 {
        let s = self.cov_floor_scale * self.voxel_resolution;
        s * s
    }

    /// Level set `τ` for `dof`-dimensional ellipsoids.
    pub fn tau(&self, dof: usize) -> f64 {
        if self.mass_fraction == 0.0 {
            0.0
        } else {
            chi2_quantile(dof, self.mass_fraction).expect("mass fraction validated")
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(self.voxel_resolution > 0.0 && self.voxel_resolution.is_finite()) {
            return invalid(format!("voxel resolution {}", self.voxel_resolution));
        }
        if !self.origin.iter().all(|c| c.is_finite()) {
            return invalid("origin must be finite".into());
        }
        if self.num_classes < 2 {
            return invalid(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return invalid(format!("alpha0 {}", self.alpha0));
        }
        self.kernel
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.refine_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.cluster.total_clusters == 0 {
            return invalid("total_clusters must be positive".into());
        }
        if self.cluster.max_iters == 0 {
            return invalid("kmeans_max_iters must be positive".into());
        }
        if !(self.cov_floor_scale > 0.0 && self.cov_floor_scale.is_finite()) {
            return invalid(format!("cov_floor_scale {}", self.cov_floor_scale));
        }
        if !(0.0..1.0).contains(&self.mass_fraction) {
            return invalid(format!("mass_fraction {} outside [0, 1)", self.mass_fraction));
        }
        Ok(())
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "map.voxel_resolution" => self.voxel_resolution = parse_value(key, value)?,
            "map.origin" => {
                let parts: Vec<f64> = value
                    .split_whitespace()
                    .map(|v| parse_value(key, v))
                    .collect::<Result<_, _>>()?;
                if parts.len() != 3 {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                    });
                }
                self.origin = Vector3::new(parts[0], parts[1], parts[2]);
            }
            "map.mode" => {
                self.mode = value.parse().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                })?
            }
            "map.query_mode" => {
                self.query_mode = value.parse().map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                })?
            }
            "kernel.length_scale" => self.kernel.length_scale = parse_value(key, value)?,
            "kernel.beta" => self.kernel.beta = parse_value(key, value)?,
            "kernel.gamma" => self.kernel.gamma = parse_value(key, value)?,
            "kernel.u_percentile" => self.kernel.u_percentile = parse_value(key, value)?,
            "kernel.adaptive_scale" => self.kernel.adaptive_scale = parse_value(key, value)?,
            "gaussian.total_clusters" => self.cluster.total_clusters = parse_value(key, value)?,
            "gaussian.kmeans_max_iters" => self.cluster.max_iters = parse_value(key, value)?,
            "gaussian.rng_seed" => self.cluster.seed = parse_value(key, value)?,
            "gaussian.cov_floor_scale" => self.cov_floor_scale = parse_value(key, value)?,
            "refine.epsilon" => self.epsilon = parse_value(key, value)?,
            "refine.dl_scale" => self.dl_scale = parse_value(key, value)?,
            "refine.ds_scale" => self.ds_scale = parse_value(key, value)?,
            "refine.enabled_merge" => self.enable_merge = parse_value(key, value)?,
            "refine.enabled_prune" => self.enable_prune = parse_value(key, value)?,
            "ellipsoid.mass_fraction" => self.mass_fraction = parse_value(key, value)?,
            "bki.alpha0" => self.alpha0 = parse_value(key, value)?,
            "bki.num_classes" => self.num_classes = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored. The result is validated.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| ConfigError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Every key, one per line. Reals use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let k = &self.kernel;
        let lines = [
            format!("map.voxel_resolution = {:?}", self.voxel_resolution),
            format!(
                "map.origin = {:?} {:?} {:?}",
                self.origin.x, self.origin.y, self.origin.z
            ),
            format!("map.mode = {}", self.mode),
            format!("map.query_mode = {}", self.query_mode),
            format!("kernel.length_scale = {:?}", k.length_scale),
            format!("kernel.beta = {:?}", k.beta),
            format!("kernel.gamma = {:?}", k.gamma),
            format!("kernel.u_percentile = {:?}", k.u_percentile),
            format!("kernel.adaptive_scale = {}", k.adaptive_scale),
            format!("gaussian.total_clusters = {}", self.cluster.total_clusters),
            format!("gaussian.kmeans_max_iters = {}", self.cluster.max_iters),
            format!("gaussian.rng_seed = {}", self.cluster.seed),
            format!("gaussian.cov_floor_scale = {:?}", self.cov_floor_scale),
            format!("refine.epsilon = {:?}", self.epsilon),
            format!("refine.dl_scale = {:?}", self.dl_scale),
            format!("refine.ds_scale = {:?}", self.ds_scale),
            format!("refine.enabled_merge = {}", self.enable_merge),
            format!("refine.enabled_prune = {}", self.enable_prune),
            format!("ellipsoid.mass_fraction = {:?}", self.mass_fraction),
            format!("bki.alpha0 = {:?}", self.alpha0),
            format!("bki.num_classes = {}", self.num_classes),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
