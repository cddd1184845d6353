//! Experiment configuration: line-oriented `section.key = value` files with
//! environment-variable overrides (`QSD1D_SECTION_KEY`).
//!
//! The format is deliberately flat — trivially diffable inside run
//! manifests and parseable anywhere. Unknown keys are errors, every
//! out-of-range value reports its line.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::model::{logistic_feller_model, polynomial_drift_model, DiffusionModel, ModelError};
use crate::simulate::InitialLaw;
use crate::spectral::GridSpacing;

/// Prefix for environment overrides, e.g. `QSD1D_GRID_N=1000`.
pub const ENV_PREFIX: &str = "QSD1D_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{key} (from environment): {msg}")]
    Env { key: String, msg: String },
    #[error("missing required key {0}")]
    Missing(String),
    #[error("invalid value for {key}: {msg}")]
    Invalid { key: String, msg: String },
    #[error("model construction failed: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub name: String,
    /// Raw model parameters (sigma/r/k for logistic_feller, coefficient
    /// list for polynomial).
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub eps: f64,
    /// Right truncation; defaults to the model's domain hint.
    pub r: Option<f64>,
    pub n: usize,
    pub spacing: GridSpacing,
}

#[derive(Debug, Clone)]
pub struct SimBlock {
    pub dt: f64,
    pub t_end: f64,
    pub paths: usize,
    pub seed: u64,
    pub record_times: Vec<f64>,
    pub initial: InitialSpec,
}

/// Initial law spec as named in config files. `Alpha` variants resolve
/// against the spectral data at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Point(f64),
    Uniform(f64, f64),
    Alpha,
    AlphaUpperHalf,
}

impl InitialSpec {
    pub fn label(&self) -> String {
        match self {
            InitialSpec::Point(x) => format!("point:{x}"),
            InitialSpec::Uniform(a, b) => format!("uniform:{a},{b}"),
            InitialSpec::Alpha => "alpha".to_string(),
            InitialSpec::AlphaUpperHalf => "alpha_upper_half".to_string(),
        }
    }

    /// Concrete sampling law (needs grid weights for the alpha variants).
    pub fn to_law(&self, alpha: Option<&[f64]>) -> Option<InitialLaw> {
        match self {
            InitialSpec::Point(x) => Some(InitialLaw::Point(*x)),
            InitialSpec::Uniform(a, b) => Some(InitialLaw::Uniform(*a, *b)),
            InitialSpec::Alpha => alpha.map(|a| InitialLaw::GridMeasure(a.to_vec())),
            InitialSpec::AlphaUpperHalf => alpha.map(|a| {
                let mut w = a.to_vec();
                let half = w.len() / 2;
                for v in w.iter_mut().take(half) {
                    *v = 0.0;
                }
                InitialLaw::GridMeasure(w)
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiChoice {
    One,
    OnePlusX,
}

impl PsiChoice {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PsiChoice::One => 1.0,
            PsiChoice::OnePlusX => 1.0 + x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisBlock {
    pub psi: PsiChoice,
    pub c: f64,
    pub bins: usize,
    pub fit_window: Option<(f64, f64)>,
    /// Sample times for the decay and bound experiments.
    pub times: Vec<f64>,
    /// Sample times for the time-average experiment.
    pub qe_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OutputBlock {
    pub dir: String,
    pub plot: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub sim: SimBlock,
    pub analysis: AnalysisBlock,
    pub output: OutputBlock,
    /// Canonical text the config hash is computed from.
    pub canonical_text: String,
}

impl ExperimentConfig {
    /// Instantiate the configured diffusion model.
    pub fn build_model(&self) -> Result<DiffusionModel, ConfigError> {
        build_model(&self.model)
    }

    /// Right truncation: explicit value or the model's domain hint.
    pub fn grid_r(&self, model: &DiffusionModel) -> f64 {
        self.grid.r.unwrap_or(model.domain_hint().1)
    }
}

pub fn build_model(mc: &ModelConfig) -> Result<DiffusionModel, ConfigError> {
    match mc.name.as_str() {
        "logistic_feller" => {
            let get = |k: &str| -> Result<f64, ConfigError> {
                mc.params
                    .get(k)
                    .ok_or_else(|| ConfigError::Missing(format!("model.{k}")))?
                    .parse::<f64>()
                    .map_err(|e| ConfigError::Invalid {
                        key: format!("model.{k}"),
                        msg: e.to_string(),
                    })
            };
            Ok(logistic_feller_model(get("sigma")?, get("r")?, get("k")?)?)
        }
        "polynomial" | "brownian" => {
            let coeffs = match mc.params.get("coefficients") {
                None => Vec::new(),
                Some(raw) if raw.trim().is_empty() => Vec::new(),
                Some(raw) => parse_coefficients(raw).map_err(|msg| ConfigError::Invalid {
                    key: "model.coefficients".to_string(),
                    msg,
                })?,
            };
            Ok(polynomial_drift_model(&coeffs))
        }
        other => Err(ConfigError::Invalid {
            key: "model.name".to_string(),
            msg: format!("unknown model '{other}' (expected logistic_feller, polynomial, brownian)"),
        }),
    }
}

/// `power:coeff` pairs separated by commas, e.g. `3:1.0,0:-0.5`.
fn parse_coefficients(raw: &str) -> Result<Vec<(f64, f64)>, String> {
    raw.split(',')
        .map(|pair| {
            let (p, c) = pair
                .split_once(':')
                .ok_or_else(|| format!("expected power:coeff, got '{pair}'"))?;
            let p: f64 = p.trim().parse().map_err(|e| format!("bad power '{p}': {e}"))?;
            let c: f64 = c.trim().parse().map_err(|e| format!("bad coeff '{c}': {e}"))?;
            Ok((p, c))
        })
        .collect()
}

fn parse_f64_list(raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number '{v}': {e}"))
        })
        .collect()
}

const KNOWN_KEYS: &[&str] = &[
    "model.name",
    "model.sigma",
    "model.r",
    "model.k",
    "model.coefficients",
    "grid.eps",
    "grid.r",
    "grid.n",
    "grid.spacing",
    "sim.dt",
    "sim.t",
    "sim.paths",
    "sim.seed",
    "sim.record_times",
    "sim.initial",
    "analysis.psi",
    "analysis.c",
    "analysis.bins",
    "analysis.fit_window",
    "analysis.times",
    "analysis.qe_times",
    "output.dir",
    "output.plot",
];

/// Parse and validate a config file, then apply `QSD1D_*` environment
/// overrides. Defaults: eps 1e-3, N 2000, log spacing, R from the model
/// hint, c 0.5, 40 bins, dt 1e-3, T 3, 10000 paths, seed 42.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_text(&text)
}

/// Parse config content directly (used by tests and the CLI).
pub fn parse_config_text(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Line {
            line: line_no,
            msg: format!("expected key = value, got '{line}'"),
        })?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::Line {
                line: line_no,
                msg: format!("unknown key '{key}'"),
            });
        }
        entries.insert(key, (value, line_no));
    }

    // environment overrides: QSD1D_SECTION_KEY
    for (env_key, env_val) in std::env::vars() {
        if let Some(stripped) = env_key.strip_prefix(ENV_PREFIX) {
            if let Some((section, key)) = stripped.split_once('_') {
                let dotted = format!(
                    "{}.{}",
                    section.to_ascii_lowercase(),
                    key.to_ascii_lowercase()
                );
                if KNOWN_KEYS.contains(&dotted.as_str()) {
                    entries.insert(dotted, (env_val.clone(), 0));
                }
            }
        }
    }

    let get = |key: &str| entries.get(key).cloned();
    let err_at = |line: usize, key: &str, msg: String| -> ConfigError {
        if line == 0 {
            ConfigError::Env {
                key: format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('.', "_")),
                msg,
            }
        } else {
            ConfigError::Line { line, msg }
        }
    };
    macro_rules! parse_or {
        ($key:expr, $default:expr, $ty:ty) => {
            match get($key) {
                None => $default,
                Some((v, line)) => v.parse::<$ty>().map_err(|e| {
                    err_at(line, $key, format!("cannot parse '{v}': {e}"))
                })?,
            }
        };
    }

    // model block
    let (name, _) = get("model.name").ok_or_else(|| ConfigError::Missing("model.name".into()))?;
    let mut params = BTreeMap::new();
    for k in ["sigma", "r", "k", "coefficients"] {
        if let Some((v, _)) = get(&format!("model.{k}")) {
            params.insert(k.to_string(), v);
        }
    }
    let model_cfg = ModelConfig { name, params };
    // validate the model eagerly so bad parameters surface here
    build_model(&model_cfg)?;

    // grid block
    let eps = parse_or!("grid.eps", 1e-3, f64);
    let r = match get("grid.r") {
        None => None,
        Some((v, line)) => Some(v.parse::<f64>().map_err(|e| {
            err_at(line, "grid.r", format!("cannot parse '{v}': {e}"))
        })?),
    };
    let n = parse_or!("grid.n", 2000usize, usize);
    if n < 3 {
        let (_, line) = get("grid.n").unwrap_or((String::new(), 0));
        return Err(err_at(line, "grid.n", format!("N must be >= 3, got {n}")));
    }
    let spacing = match get("grid.spacing") {
        None => GridSpacing::Log,
        Some((v, line)) => match v.as_str() {
            "log" => GridSpacing::Log,
            "uniform" => GridSpacing::Uniform,
            other => {
                return Err(err_at(
                    line,
                    "grid.spacing",
                    format!("expected log|uniform, got '{other}'"),
                ))
            }
        },
    };
    if !(eps >= 0.0) || (spacing == GridSpacing::Log && eps <= 0.0) {
        let (_, line) = get("grid.eps").unwrap_or((String::new(), 0));
        return Err(err_at(
            line,
            "grid.eps",
            format!("eps must be positive for log spacing, got {eps}"),
        ));
    }
    if let Some(rv) = r {
        if rv <= eps {
            let (_, line) = get("grid.r").unwrap_or((String::new(), 0));
            return Err(err_at(line, "grid.r", format!("R must exceed eps, got {rv}")));
        }
    }

    // sim block
    let dt = parse_or!("sim.dt", 1e-3, f64);
    let t_end = parse_or!("sim.t", 3.0, f64);
    if !(dt > 0.0 && dt < t_end) {
        let (_, line) = get("sim.dt").unwrap_or((String::new(), 0));
        return Err(err_at(
            line,
            "sim.dt",
            format!("need 0 < dt < T, got dt = {dt}, T = {t_end}"),
        ));
    }
    let paths = parse_or!("sim.paths", 10_000usize, usize);
    if paths == 0 {
        let (_, line) = get("sim.paths").unwrap_or((String::new(), 0));
        return Err(err_at(line, "sim.paths", "paths must be >= 1".into()));
    }
    let seed = parse_or!("sim.seed", 42u64, u64);
    let record_times = match get("sim.record_times") {
        None => vec![1.0, t_end],
        Some((v, line)) => {
            let times = parse_f64_list(&v).map_err(|m| err_at(line, "sim.record_times", m))?;
            if times.windows(2).any(|w| w[0] > w[1]) {
                return Err(err_at(line, "sim.record_times", "must be sorted".into()));
            }
            if times.iter().any(|t| *t < 0.0 || *t > t_end + 1e-12) {
                return Err(err_at(
                    line,
                    "sim.record_times",
                    format!("must lie in [0, T = {t_end}]"),
                ));
            }
            times
        }
    };
    let initial = match get("sim.initial") {
        None => InitialSpec::Point(1.0),
        Some((v, line)) => parse_initial(&v).map_err(|m| err_at(line, "sim.initial", m))?,
    };

    // analysis block
    let psi = match get("analysis.psi") {
        None => PsiChoice::OnePlusX,
        Some((v, line)) => match v.as_str() {
            "one" => PsiChoice::One,
            "one_plus_x" => PsiChoice::OnePlusX,
            other => {
                return Err(err_at(
                    line,
                    "analysis.psi",
                    format!("expected one|one_plus_x, got '{other}'"),
                ))
            }
        },
    };
    let c = parse_or!("analysis.c", 0.5, f64);
    if !(c > 0.0 && c < 1.0) {
        let (_, line) = get("analysis.c").unwrap_or((String::new(), 0));
        return Err(err_at(
            line,
            "analysis.c",
            format!("c must lie in (0, 1), got {c}"),
        ));
    }
    let bins = parse_or!("analysis.bins", 40usize, usize);
    if bins < 2 {
        let (_, line) = get("analysis.bins").unwrap_or((String::new(), 0));
        return Err(err_at(line, "analysis.bins", "need at least 2 bins".into()));
    }
    let fit_window = match get("analysis.fit_window") {
        None => None,
        Some((v, line)) => {
            let w = parse_f64_list(&v).map_err(|m| err_at(line, "analysis.fit_window", m))?;
            if w.len() != 2 || w[0] >= w[1] {
                return Err(err_at(
                    line,
                    "analysis.fit_window",
                    "expected lo,hi with lo < hi".into(),
                ));
            }
            Some((w[0], w[1]))
        }
    };
    let times = match get("analysis.times") {
        None => (1..=20).map(|i| 0.4 * i as f64).collect(),
        Some((v, line)) => parse_f64_list(&v).map_err(|m| err_at(line, "analysis.times", m))?,
    };
    let qe_times = match get("analysis.qe_times") {
        None => {
            let lo: f64 = 1.0;
            let hi: f64 = 50.0;
            (0..12)
                .map(|i| lo * (hi / lo).powf(i as f64 / 11.0))
                .collect()
        }
        Some((v, line)) => parse_f64_list(&v).map_err(|m| err_at(line, "analysis.qe_times", m))?,
    };

    // output block
    let dir = get("output.dir").map(|(v, _)| v).unwrap_or_else(|| "out".into());
    let plot = parse_or!("output.plot", false, bool);

    // canonical text for hashing: sorted resolved entries
    let canonical_text = entries
        .iter()
        .map(|(k, (v, _))| format!("{k} = {v}\n"))
        .collect::<String>();

    Ok(ExperimentConfig {
        model: model_cfg,
        grid: GridConfig { eps, r, n, spacing },
        sim: SimBlock {
            dt,
            t_end,
            paths,
            seed,
            record_times,
            initial,
        },
        analysis: AnalysisBlock {
            psi,
            c,
            bins,
            fit_window,
            times,
            qe_times,
        },
        output: OutputBlock { dir, plot },
        canonical_text,
    })
}

fn parse_initial(raw: &str) -> Result<InitialSpec, String> {
    if raw == "alpha" {
        return Ok(InitialSpec::Alpha);
    }
    if raw == "alpha_upper_half" {
        return Ok(InitialSpec::AlphaUpperHalf);
    }
    if let Some(x) = raw.strip_prefix("point:") {
        let x: f64 = x.trim().parse().map_err(|e| format!("bad point '{x}': {e}"))?;
        if x <= 0.0 {
            return Err(format!("point mass must be positive, got {x}"));
        }
        return Ok(InitialSpec::Point(x));
    }
    if let Some(ab) = raw.strip_prefix("uniform:") {
        let v = parse_f64_list(ab)?;
        if v.len() != 2 || !(v[0] > 0.0 && v[0] < v[1]) {
            return Err(format!("uniform needs 0 < a < b, got '{ab}'"));
        }
        return Ok(InitialSpec::Uniform(v[0], v[1]));
    }
    Err(format!(
        "unknown initial spec '{raw}' (expected point:x, uniform:a,b, alpha, alpha_upper_half)"
    ))
}
