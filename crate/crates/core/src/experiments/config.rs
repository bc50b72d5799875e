//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! replications = 20
//! probes = [[0.5, 0.5], [1.0, 0.25]]
//!
//! [model]
//! preset = "example1"          # or: a0 = 1.0, harmonics = [[1, 1.0]], epsilon = 1.0
//!
//! [noise]
//! sigma = 1.0
//! distribution = "gaussian"    # gaussian | rademacher | student_t (needs nu)
//!
//! [sampler]
//! prefer_fft = true
//!
//! [scaling]
//! preset = "low_noise"         # low_noise | moderate | high | custom
//! d_list = [50, 100, 200]
//! t_rule = { quadratic = 0.25 }  # T = c·d², or { list = [...] }
//! tau = 1.0
//! alpha = 2.0
//! gamma = "sqrt_t"             # sqrt_t | none | <number>
//!
//! [init]
//! kind = "constant"
//! value = 1.0
//!
//! [solver]
//! n = 256
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance::ModelSpec;
use crate::diagnostics::{classify_regime, NoiseRegime, RegimeReport, Thresholds};
use crate::field::{NoiseDistribution, NoiseSpec};
use crate::grid::InitProfile;
use crate::limit::SdeScheme;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub model: ModelSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub scaling: ScalingConfig,
    #[serde(default = "default_init")]
    pub init: InitProfile,
    #[serde(default)]
    pub solver: SolverConfig,
    /// `(s, x)` points where fluctuation samples are taken.
    #[serde(default)]
    pub probes: Vec<[f64; 2]>,
    /// Times of the MSE/PE curves; defaults to 21 equispaced points on `[0, τ]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_times: Option<Vec<f64>>,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_replications() -> u32 {
    1
}

fn default_init() -> InitProfile {
    InitProfile::constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub distribution: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            distribution: NoiseKind::Gaussian,
            nu: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Rademacher,
    StudentT,
}

impl NoiseConfig {
    /// Noise with standard deviation `sigma` and the configured distribution.
    pub fn spec(&self, sigma: f64) -> Result<NoiseSpec> {
        let distribution = match self.distribution {
            NoiseKind::Gaussian => NoiseDistribution::Gaussian,
            NoiseKind::Rademacher => NoiseDistribution::Rademacher,
            NoiseKind::StudentT => NoiseDistribution::StudentT {
                nu: self
                    .nu
                    .ok_or_else(|| Error::Config("noise.nu is required for student_t".into()))?,
            },
        };
        NoiseSpec::new(sigma, distribution)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "yes")]
    pub prefer_fft: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { prefer_fft: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingPreset {
    /// `η = α/(dT)`, `σ` from `noise.sigma` (default 0).
    #[default]
    LowNoise,
    /// `η = α/(dT)`, `σ = β d √T`.
    Moderate,
    /// `σ = d T`, `η = α/(σ√T)`.
    High,
    /// `σ` from `noise.sigma`, `η` from `scaling.eta`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TRule {
    /// `T = c·d²`.
    Quadratic(f64),
    /// One `T` per entry of `d_list`.
    List(Vec<f64>),
}

impl Default for TRule {
    fn default() -> Self {
        TRule::Quadratic(0.25)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaName {
    SqrtT,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaRule {
    Named(GammaName),
    Value(f64),
}

impl Default for GammaRule {
    fn default() -> Self {
        GammaRule::Named(GammaName::None)
    }
}

impl GammaRule {
    pub fn resolve(&self, t_param: f64) -> Option<f64> {
        match *self {
            GammaRule::Named(GammaName::SqrtT) => Some(t_param.sqrt()),
            GammaRule::Named(GammaName::None) => None,
            GammaRule::Value(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default)]
    pub preset: ScalingPreset,
    pub d_list: Vec<usize>,
    #[serde(default)]
    pub t_rule: TRule,
    pub tau: f64,
    pub alpha: f64,
    /// Moderate-noise constant in `σ = β d √T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: GammaRule,
    /// Overrides the preset's step size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_grid")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: SdeScheme,
}

fn default_grid() -> usize {
    crate::limit::DEFAULT_GRID
}

fn default_scheme() -> SdeScheme {
    SdeScheme::ExactOu
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: default_grid(),
            dt: None,
            scheme: default_scheme(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Also write every stored SGD state to `trajectory.csv`.
    #[serde(default)]
    pub trajectories: bool,
}

/// Per-`(d, T)` constants after applying the scaling preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedPair {
    pub index: u32,
    pub d: usize,
    #[serde(rename = "T")]
    pub t_param: f64,
    pub eta: f64,
    pub sigma: f64,
    pub gamma: Option<f64>,
    pub regime: RegimeReport,
}

impl ResolvedPair {
    pub fn dir_name(&self) -> String {
        format!("d{}_T{}", self.d, self.t_param)
    }

    pub fn regime_name(&self) -> NoiseRegime {
        self.regime.regime
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.build()?;
        let s = &self.scaling;
        if s.d_list.is_empty() || s.d_list.contains(&0) {
            return Err(Error::Config("scaling.d_list must be non-empty with d >= 1".into()));
        }
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return Err(Error::Config("scaling.tau must be > 0".into()));
        }
        if !(s.alpha > 0.0 && s.alpha.is_finite()) {
            return Err(Error::Config("scaling.alpha must be > 0".into()));
        }
        match &s.t_rule {
            TRule::Quadratic(c) if !(*c > 0.0) => {
                return Err(Error::Config("t_rule quadratic coefficient must be > 0".into()));
            }
            TRule::List(ts) if ts.len() != s.d_list.len() => {
                return Err(Error::Config(format!(
                    "t_rule list has {} entries for {} dimensions",
                    ts.len(),
                    s.d_list.len()
                )));
            }
            TRule::List(ts) if ts.iter().any(|t| !(*t > 0.0)) => {
                return Err(Error::Config("t_rule list entries must be > 0".into()));
            }
            _ => {}
        }
        if s.preset == ScalingPreset::Custom && s.eta.is_none() {
            return Err(Error::Config("scaling preset `custom` needs scaling.eta".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.solver.n < 2 {
            return Err(Error::Config("solver.n must be >= 2".into()));
        }
        for p in &self.probes {
            if !(0.0..=s.tau).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
                return Err(Error::Config(format!("probe {p:?} outside [0, tau] x [0, 1]")));
            }
        }
        if let Some(ts) = &self.curve_times {
            if ts.iter().any(|t| !(0.0..=s.tau).contains(t)) {
                return Err(Error::Config("curve_times must lie in [0, tau]".into()));
            }
        }
        self.noise.spec(self.noise.sigma.unwrap_or(0.0))?;
        Ok(())
    }

    pub fn curve_times(&self) -> Vec<f64> {
        self.curve_times.clone().unwrap_or_else(|| {
            (0..=20).map(|k| self.scaling.tau * k as f64 / 20.0).collect()
        })
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// `(η, σ, γ)` and regime for every `(d, T)` pair.
    pub fn resolve_pairs(&self) -> Result<Vec<ResolvedPair>> {
        let s = &self.scaling;
        s.d_list
            .iter()
            .enumerate()
            .map(|(idx, &d)| {
                let df = d as f64;
                let t = match &s.t_rule {
                    TRule::Quadratic(c) => c * df * df,
                    TRule::List(ts) => ts[idx],
                };
                let (sigma, eta) = match s.preset {
                    ScalingPreset::LowNoise => (self.noise.sigma.unwrap_or(0.0), s.alpha / (df * t)),
                    ScalingPreset::Moderate => (s.beta.unwrap_or(1.0) * df * t.sqrt(), s.alpha / (df * t)),
                    ScalingPreset::High => {
                        let sigma = df * t;
                        (sigma, s.alpha / (sigma * t.sqrt()))
                    }
                    ScalingPreset::Custom => (self.noise.sigma.unwrap_or(0.0), 0.0),
                };
                let eta = s.eta.unwrap_or(eta);
                let gamma = s.gamma.resolve(t);
                let regime = classify_regime(d, t, eta, sigma, gamma, self.thresholds);
                Ok(ResolvedPair {
                    index: idx as u32,
                    d,
                    t_param: t,
                    eta,
                    sigma,
                    gamma,
                    regime,
                })
            })
            .collect()
    }
}
