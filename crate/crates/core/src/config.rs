//! Strict TOML run configuration.
//!
//! ```toml
//! command = "entropy"          # spectrum | random-spectrum | splitting | entropy | friedland | verify
//! seed = 7                     # default 0
//! format = "json"              # json | csv, default json
//! output = "reports"           # report directory, default "reports"
//! jobs = 4                     # worker threads, default: all cores
//!
//! [system]
//! builtin = "times2-times3"    # or give [system.f1] and optionally [system.f2]
//! nu = [0.4, 0.6]              # Bernoulli weights, default [0.5, 0.5]
//!
//! [system.f1]                  # instead of `builtin`
//! kind = "linear-toral"        # linear-toral | circle-expanding | truncated-operator
//! matrix = [[2, 1], [1, 1]]    # linear-toral (integers) and truncated-operator
//! factor = 2                   # circle-expanding only
//! dim = 2                      # optional, checked against the matrix
//! tail_norm_bound = 0.01       # truncated-operator only, optional
//! ball_radius = 10.0           # truncated-operator only, default 10
//!
//! [params]                     # every key optional
//! p = 2                        # frame size, default: full dimension
//! n = 10000
//! samples = 50
//! burn_in = 1000               # default n / 10
//! epsilon = 0.05
//! n_range = [8, 12]
//! beta = 0.1
//! grid = 20
//! shift_steps = 0
//! x0 = [0.1, 0.2]              # default: the map's base point
//! lambda_alpha = 0.0
//! truncation_dims = [8, 16, 32, 64]
//! sample_points = 8
//! covering_n = 20
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::de::{DeTable, DeValue};

use crate::error::{Error, Result};
use crate::registry::{self, SystemSpec};
use crate::systems::{DynamicalMap, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    RandomSpectrum,
    Splitting,
    Entropy,
    Friedland,
    Verify,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::RandomSpectrum => "random-spectrum",
            Command::Splitting => "splitting",
            Command::Entropy => "entropy",
            Command::Friedland => "friedland",
            Command::Verify => "verify",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown format {s:?}; expected json or csv")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKindName {
    LinearToral,
    CircleExpanding,
    TruncatedOperator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub kind: MapKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_norm_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f2: Option<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covering_n: Option<usize>,
}

impl Params {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(10_000)
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(50)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or_else(|| crate::lyapunov::default_burn_in(self.n()))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(0.05)
    }

    pub fn n_range(&self) -> [usize; 2] {
        self.n_range.unwrap_or([8, 12])
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(0.1)
    }

    pub fn grid(&self) -> usize {
        self.grid.unwrap_or(20)
    }

    pub fn shift_steps(&self) -> usize {
        self.shift_steps.unwrap_or(0)
    }

    pub fn lambda_alpha(&self) -> f64 {
        self.lambda_alpha.unwrap_or(0.0)
    }

    pub fn sample_points(&self) -> usize {
        self.sample_points.unwrap_or(8)
    }

    pub fn covering_n(&self) -> usize {
        self.covering_n.unwrap_or(20)
    }

    /// Requested truncation dims, or powers of two up to `dim` followed by `dim`.
    pub fn truncation_dims(&self, dim: usize) -> Vec<usize> {
        self.truncation_dims.clone().unwrap_or_else(|| {
            let mut dims: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2))
                .take_while(|&k| k < dim)
                .collect();
            dims.push(dim);
            dims
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub system: SystemConfig,
    #[serde(default)]
    pub params: Params,
}

/// The part of a config that determines report contents.
#[derive(Serialize)]
struct HashedView<'a> {
    command: Command,
    seed: u64,
    format: Format,
    system: &'a SystemConfig,
    params: &'a Params,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        line: None,
        message: message.into(),
    }
}

fn check(cond: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(config_error(path, message()))
    }
}

impl RunConfig {
    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("reports"))
    }

    /// Hex SHA-256 of the canonical JSON of everything that shapes the report.
    ///
    /// `output` and `jobs` are excluded: they change neither the numbers nor the bytes.
    pub fn config_hash(&self) -> String {
        let view = HashedView {
            command: self.command,
            seed: self.seed,
            format: self.format,
            system: &self.system,
            params: &self.params,
        };
        let bytes = serde_json::to_vec(&view).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Value checks that do not depend on the chosen system.
    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        check(sys.builtin.is_some() != sys.f1.is_some(), "system", || {
            "give exactly one of `builtin` or `f1`".into()
        })?;
        check(!(sys.builtin.is_some() && sys.f2.is_some()), "system.f2", || {
            "`f2` cannot be combined with `builtin`".into()
        })?;
        if let Some(name) = &sys.builtin {
            check(registry::BUILTIN_NAMES.contains(&name.as_str()), "system.builtin", || {
                format!("unknown built-in {name:?}; known: {}", registry::BUILTIN_NAMES.join(", "))
            })?;
        }
        if let Some(nu) = sys.nu {
            Weights::new(nu[0], nu[1]).map_err(|e| config_error("system.nu", strip_prefix(e)))?;
        }
        for (key, map) in [("system.f1", &sys.f1), ("system.f2", &sys.f2)] {
            if let Some(m) = map {
                build_map(m, key)?;
            }
        }

        let p = &self.params;
        let positive = |v: Option<usize>, key: &str| check(v != Some(0), key, || "must be >= 1".into());
        positive(p.p, "params.p")?;
        positive(p.n, "params.n")?;
        positive(p.sample_points, "params.sample_points")?;
        check(p.samples.is_none_or(|s| s >= 2), "params.samples", || {
            "must be >= 2 for a confidence interval".into()
        })?;
        check(p.burn_in.is_none_or(|b| b < 1_000_000_000), "params.burn_in", || "is implausibly large".into())?;
        check(p.epsilon.is_none_or(|e| e > 0.0 && e < 1.0), "params.epsilon", || {
            "must lie in (0, 1)".into()
        })?;
        check(p.beta.is_none_or(|b| b > 0.0 && b.is_finite()), "params.beta", || "must be positive".into())?;
        check(p.grid.is_none_or(|g| g >= 2), "params.grid", || "must be >= 2".into())?;
        check(p.covering_n.is_none_or(|g| g >= 2), "params.covering_n", || "must be >= 2".into())?;
        check(p.lambda_alpha.is_none_or(f64::is_finite), "params.lambda_alpha", || "must be finite".into())?;
        if let Some([lo, hi]) = p.n_range {
            check(lo >= 1 && lo < hi, "params.n_range", || {
                format!("needs 1 <= start < end, got [{lo}, {hi}]")
            })?;
        }
        if let Some(x0) = &p.x0 {
            check(x0.iter().all(|v| v.is_finite()), "params.x0", || "entries must be finite".into())?;
        }
        if let Some(dims) = &p.truncation_dims {
            check(
                !dims.is_empty() && dims[0] >= 1 && dims.windows(2).all(|w| w[0] < w[1]),
                "params.truncation_dims",
                || "must be a non-empty strictly ascending list of positive integers".into(),
            )?;
        }
        check(self.jobs != Some(0), "jobs", || "must be >= 1".into())?;
        Ok(())
    }

    /// Builds the configured system, applying `system.nu` over the default weights.
    pub fn system_spec(&self) -> Result<SystemSpec> {
        let sys = &self.system;
        let mut spec = match (&sys.builtin, &sys.f1) {
            (Some(name), _) => registry::builtin(name).map_err(|e| config_error("system.builtin", strip_prefix(e)))?,
            (None, Some(f1)) => {
                let a = build_map(f1, "system.f1")?;
                match &sys.f2 {
                    Some(f2) => SystemSpec::pair("custom", a, build_map(f2, "system.f2")?),
                    None => SystemSpec::single("custom", a),
                }
            }
            (None, None) => return Err(config_error("system", "give exactly one of `builtin` or `f1`")),
        };
        if let Some(nu) = sys.nu {
            spec.nu = Weights::new(nu[0], nu[1]).map_err(|e| config_error("system.nu", strip_prefix(e)))?;
        }
        if let (Some(f2), Some(x0)) = (&spec.f2, &self.params.x0) {
            check(f2.dim() == x0.len(), "params.x0", || {
                format!("has {} entries, the system has dimension {}", x0.len(), f2.dim())
            })?;
        }
        if let Some(x0) = &self.params.x0 {
            check(spec.f1.dim() == x0.len(), "params.x0", || {
                format!("has {} entries, the system has dimension {}", x0.len(), spec.f1.dim())
            })?;
        }
        if let Some(p) = self.params.p {
            check(p <= spec.f1.dim(), "params.p", || {
                format!("frame size {p} exceeds dimension {}", spec.f1.dim())
            })?;
        }
        Ok(spec)
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::InvalidInput(m) => m,
        other => other.to_string(),
    }
}

fn build_map(m: &MapConfig, key: &str) -> Result<DynamicalMap> {
    let forbid = |present: bool, field: &str, kind: &str| {
        check(!present, &format!("{key}.{field}"), || format!("not allowed for kind {kind}"))
    };
    let name = m.name.clone().unwrap_or_else(|| key.trim_start_matches("system.").to_string());
    let map = match m.kind {
        MapKindName::LinearToral => {
            forbid(m.factor.is_some(), "factor", "linear-toral")?;
            forbid(m.tail_norm_bound.is_some(), "tail_norm_bound", "linear-toral")?;
            forbid(m.ball_radius.is_some(), "ball_radius", "linear-toral")?;
            let matrix = m
                .matrix
                .as_ref()
                .ok_or_else(|| config_error(&format!("{key}.matrix"), "required for kind linear-toral"))?;
            let ints = matrix
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&v| {
                            if v.fract() == 0.0 && v.abs() < 1e15 {
                                Ok(v as i64)
                            } else {
                                Err(config_error(&format!("{key}.matrix"), format!("entry {v} is not an integer")))
                            }
                        })
                        .collect::<Result<Vec<i64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            DynamicalMap::linear_toral(name, ints)
        }
        MapKindName::CircleExpanding => {
            forbid(m.matrix.is_some(), "matrix", "circle-expanding")?;
            forbid(m.tail_norm_bound.is_some(), "tail_norm_bound", "circle-expanding")?;
            forbid(m.ball_radius.is_some(), "ball_radius", "circle-expanding")?;
            let factor = m
                .factor
                .ok_or_else(|| config_error(&format!("{key}.factor"), "required for kind circle-expanding"))?;
            DynamicalMap::circle_expanding(name, factor)
        }
        MapKindName::TruncatedOperator => {
            forbid(m.factor.is_some(), "factor", "truncated-operator")?;
            let matrix = m
                .matrix
                .as_ref()
                .ok_or_else(|| config_error(&format!("{key}.matrix"), "required for kind truncated-operator"))?;
            let d = matrix.len();
            check(d > 0 && matrix.iter().all(|r| r.len() == d), &format!("{key}.matrix"), || {
                "must be square and non-empty".into()
            })?;
            let t = nalgebra::DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
            DynamicalMap::truncated_operator(name, t, m.tail_norm_bound, m.ball_radius.unwrap_or(10.0))
        }
    }
    .map_err(|e| config_error(key, strip_prefix(e)))?;
    if let Some(dim) = m.dim {
        check(dim == map.dim(), &format!("{key}.dim"), || {
            format!("declared {dim}, the matrix has dimension {}", map.dim())
        })?;
    }
    Ok(map)
}

/// 1-based line of the byte offset `pos`.
fn line_at(src: &str, pos: usize) -> usize {
    src.as_bytes()[..pos.min(src.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

/// Line of the value at a dotted key path such as `system.nu` or `params.n_range[1]`.
fn line_of_path(src: &str, path: &str) -> Option<usize> {
    let root = DeTable::parse(src).ok()?;
    let mut table = root.get_ref();
    let mut current: Option<&toml::Spanned<DeValue>> = None;
    for segment in path.split('.').filter(|s| !s.is_empty()) {
        let (key, indices) = match segment.find('[') {
            Some(i) => (&segment[..i], &segment[i..]),
            None => (segment, ""),
        };
        let mut value = match current {
            None => table.get(key)?,
            Some(v) => v.get_ref().get(key)?,
        };
        for idx in indices.split(['[', ']']).filter(|s| !s.is_empty()) {
            value = value.get_ref().get(idx.parse::<usize>().ok()?)?;
        }
        if let DeValue::Table(t) = value.get_ref() {
            table = t;
        }
        current = Some(value);
    }
    current.map(|v| line_at(src, v.span().start))
}

/// Parses and validates a config; errors carry the key path and, when known, the line.
pub fn parse_config(src: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(src).map_err(|e| Error::Config {
        path: String::new(),
        line: e.span().map(|s| line_at(src, s.start)),
        message: e.message().to_string(),
    })?;
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.inner();
        Error::Config {
            line: inner.span().map(|s| line_at(src, s.start)).or_else(|| line_of_path(src, &path)),
            path: if path == "." { String::new() } else { path },
            message: inner.message().to_string(),
        }
    })?;
    config.validate().and_then(|_| config.system_spec().map(|_| ())).map_err(|e| match e {
        Error::Config { path, message, .. } => Error::Config {
            line: line_of_path(src, &path),
            path,
            message,
        },
        other => other,
    })?;
    Ok(config)
}
