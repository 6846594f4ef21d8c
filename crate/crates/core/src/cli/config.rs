//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [problem]
//! kind = "affine"            # or "semilinear"
//! dim = 1                    # 1 or 2
//! n = 199                    # interior nodes per axis
//! load = "const1"            # preset ("const1", "sinpi") or HWF1 file
//! mean = 1.0                 # constant offset ā
//!
//! [problem.directions]
//! family = "bumps"           # or "files" with paths = [...]
//! count = 16
//! decay = 3.0
//! scale = 0.5
//!
//! [widths]
//! sampler = "uniform"        # "tensor", "halton"
//! m = 500
//! window = [5, 40]
//! ```
//!
//! Study tables (`taylor`, `bounds`, `widths`, `cover`, `semilinear`) are
//! optional; `run` executes those present. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Configuration failure with the 1-based line it refers to, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taylor: Option<TaylorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<WidthsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<CoverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semilinear: Option<SemilinearConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Affine,
    Semilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    pub n: usize,
    #[serde(default = "defaults::load")]
    pub load: String,
    #[serde(default = "defaults::mean")]
    pub mean: f64,
    pub directions: DirectionsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DirectionsConfig {
    Bumps { count: usize, decay: f64, scale: f64 },
    Files { paths: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexStrategy {
    /// All `ν` with `|ν| ≤ max_degree`.
    TotalDegree,
    /// `Π_j (‖ψ_j‖ / max_k ‖ψ_k‖)^{ν_j} ≥ threshold` and `|ν| ≤ max_degree`.
    Anisotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorConfig {
    #[serde(default = "defaults::strategy")]
    pub strategy: IndexStrategy,
    #[serde(default = "defaults::max_degree")]
    pub max_degree: u32,
    #[serde(default = "defaults::threshold")]
    pub threshold: f64,
    #[serde(default = "defaults::max_terms")]
    pub max_terms: usize,
    #[serde(default = "defaults::n_terms")]
    pub n_terms: usize,
    /// Random parameter points for the partial-sum check.
    #[serde(default = "defaults::taylor_samples")]
    pub samples: usize,
    #[serde(default = "defaults::p")]
    pub p: f64,
    #[serde(default)]
    pub save_fields: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonPolicy {
    /// `0.6 ε = r/2` with `r` the ellipticity floor.
    EllipticMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "defaults::epsilon_policy")]
    pub epsilon: EpsilonPolicy,
    #[serde(default = "defaults::max_degree")]
    pub max_degree: u32,
    #[serde(default = "defaults::max_terms")]
    pub max_terms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Uniform,
    Tensor,
    Halton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthsConfig {
    #[serde(default = "defaults::sampler")]
    pub sampler: SamplerKind,
    #[serde(default = "defaults::m")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    /// Decay exponent of the parameter box; defaults to the bump decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default)]
    pub save_snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverConfig {
    #[serde(default = "defaults::cover_epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::j_cap")]
    pub j_cap: usize,
    #[serde(default = "defaults::max_centers")]
    pub max_centers: usize,
    #[serde(default = "defaults::cover_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearConfig {
    #[serde(default = "defaults::grids")]
    pub grids: Vec<usize>,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default = "defaults::coercivity_samples")]
    pub coercivity_samples: usize,
}

mod defaults {
    use super::*;

    pub fn dim() -> usize {
        1
    }
    pub fn load() -> String {
        "const1".into()
    }
    pub fn mean() -> f64 {
        1.0
    }
    pub fn strategy() -> IndexStrategy {
        IndexStrategy::TotalDegree
    }
    pub fn max_degree() -> u32 {
        6
    }
    pub fn threshold() -> f64 {
        1e-6
    }
    pub fn max_terms() -> usize {
        200_000
    }
    pub fn n_terms() -> usize {
        60
    }
    pub fn taylor_samples() -> usize {
        20
    }
    pub fn p() -> f64 {
        0.5
    }
    pub fn epsilon_policy() -> EpsilonPolicy {
        EpsilonPolicy::EllipticMargin
    }
    pub fn sampler() -> SamplerKind {
        SamplerKind::Uniform
    }
    pub fn m() -> usize {
        500
    }
    pub fn delta() -> f64 {
        crate::widths::DEFAULT_DELTA
    }
    pub fn cover_epsilon() -> f64 {
        1.0
    }
    pub fn j_cap() -> usize {
        6
    }
    pub fn max_centers() -> usize {
        2_000_000
    }
    pub fn cover_samples() -> usize {
        1000
    }
    pub fn grids() -> Vec<usize> {
        vec![63, 127, 255]
    }
    pub fn tol() -> f64 {
        1e-10
    }
    pub fn max_iter() -> usize {
        50
    }
    pub fn coercivity_samples() -> usize {
        10
    }
}

macro_rules! impl_default_via_serde {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("all fields defaulted")
            }
        }
    )*};
}

impl_default_via_serde!(TaylorConfig, BoundsConfig, WidthsConfig, CoverConfig, SemilinearConfig);

/// Config text plus the directory relative paths are resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&source, base_dir)
    }

    pub fn from_str(source: &str, base_dir: PathBuf) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(source, s.start)),
            message: e.message().to_string(),
        })?;
        let loaded = Self {
            config,
            source: source.to_string(),
            base_dir,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Error anchored at `key` inside `[section]` (or the top level).
    pub fn error_at(&self, section: Option<&str>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: find_key_line(&self.source, section, key),
            message: message.into(),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        let p = &c.problem;
        let problem = Some("problem");
        if !(1..=2).contains(&p.dim) {
            return Err(self.error_at(problem, "dim", format!("dim must be 1 or 2, got {}", p.dim)));
        }
        if p.n < 2 {
            return Err(self.error_at(problem, "n", format!("n must be ≥ 2, got {}", p.n)));
        }
        if !p.mean.is_finite() {
            return Err(self.error_at(problem, "mean", "mean must be finite"));
        }
        let dirs = Some("problem.directions");
        match &p.directions {
            DirectionsConfig::Bumps { decay, scale, .. } => {
                if !decay.is_finite() || !scale.is_finite() {
                    return Err(self.error_at(dirs, "decay", "decay and scale must be finite"));
                }
            }
            DirectionsConfig::Files { paths } => {
                if paths.is_empty() {
                    return Err(self.error_at(dirs, "paths", "paths must not be empty"));
                }
            }
        }
        if let Some(t) = &c.taylor {
            if !(t.p > 0.0 && t.p < 1.0) {
                return Err(self.error_at(Some("taylor"), "p", format!("p must lie in (0, 1), got {}", t.p)));
            }
            if !(t.threshold >= 0.0) {
                return Err(self.error_at(Some("taylor"), "threshold", "threshold must be ≥ 0"));
            }
        }
        if let Some(w) = &c.widths {
            let sec = Some("widths");
            if w.m < 2 {
                return Err(self.error_at(sec, "m", format!("m must be ≥ 2, got {}", w.m)));
            }
            let (lo, hi) = self.window(w);
            if lo == 0 || hi <= lo {
                return Err(self.error_at(sec, "window", format!("invalid fit window [{lo}, {hi}]")));
            }
            let n_max = w.n_max.unwrap_or(hi);
            if n_max > w.m || n_max < hi {
                return Err(self.error_at(
                    sec,
                    "n_max",
                    format!("n_max = {n_max} must satisfy window end {hi} ≤ n_max ≤ m = {}", w.m),
                ));
            }
            if !(w.delta >= 0.0) {
                return Err(self.error_at(sec, "delta", "delta must be ≥ 0"));
            }
        }
        if let Some(cv) = &c.cover {
            if !(cv.epsilon > 0.0) {
                return Err(self.error_at(Some("cover"), "epsilon", "epsilon must be > 0"));
            }
        }
        if let Some(s) = &c.semilinear {
            let sec = Some("semilinear");
            if s.grids.len() < 2 || s.grids.iter().any(|&n| n < 2) {
                return Err(self.error_at(sec, "grids", "grids needs at least two sizes ≥ 2"));
            }
            if !(s.tol > 0.0) {
                return Err(self.error_at(sec, "tol", "tol must be > 0"));
            }
        }
        Ok(())
    }

    pub fn window(&self, w: &WidthsConfig) -> (usize, usize) {
        match w.window {
            Some([a, b]) => (a, b),
            None => crate::widths::default_window(w.m),
        }
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line of `key = ...` within `[section]`, or of the section header when
/// the key is absent.
fn find_key_line(source: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            if current.as_deref() == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current.as_deref() == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}
