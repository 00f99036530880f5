//! JSON run configuration and model construction.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toral_core::linear::{IntMatrix2, LinearError};
use toral_core::models::{
    build_mane_cu, build_mane_sc, build_nonspecial, build_t3_example, choose_k, CuParams, Endomorphism, LinearModel,
    ManeCu, ManeParams, ManeSc, Map3Model, ModelError, NonSpecial, ShearRegion, DEFAULT_TILT,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    ManeSc,
    Nonspecial,
    ManeCu,
    T3,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::ManeSc => "mane_sc",
            ModelKind::Nonspecial => "nonspecial",
            ModelKind::ManeCu => "mane_cu",
            ModelKind::T3 => "t3",
        }
    }

    /// Checks run when the config names none.
    pub fn default_suite(self) -> Vec<Check> {
        use Check::*;
        match self {
            ModelKind::Linear => vec![PhClassify, SpecialTest, Periodic, Rigidity, Semiconj, LambdaAtlas, Density],
            ModelKind::ManeSc => vec![PhClassify, SpecialTest, Periodic, Rigidity, Semiconj, LambdaAtlas],
            ModelKind::Nonspecial => vec![PhClassify, SpecialTest, Periodic, Semiconj],
            ModelKind::ManeCu => vec![PhClassify, SpecialTest, Periodic],
            ModelKind::T3 => vec![Conservativity],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    PhClassify,
    SpecialTest,
    Periodic,
    Rigidity,
    Semiconj,
    LambdaAtlas,
    Conservativity,
    Density,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::PhClassify,
        Check::SpecialTest,
        Check::Periodic,
        Check::Rigidity,
        Check::Semiconj,
        Check::LambdaAtlas,
        Check::Conservativity,
        Check::Density,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Check::PhClassify => "ph-classify",
            Check::SpecialTest => "special-test",
            Check::Periodic => "periodic",
            Check::Rigidity => "rigidity",
            Check::Semiconj => "semiconj",
            Check::LambdaAtlas => "lambda-atlas",
            Check::Conservativity => "conservativity",
            Check::Density => "density",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named tolerances a config may override.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tol {
    /// `sup|H∘F − A∘H|`.
    ConjResidual,
    /// Deck defect below which H descends.
    DeckDefect,
    /// Change of H under doubled depths.
    Uniqueness,
    /// `|λˢ − log μ_s|` on Λ-member orbits.
    Rigidity,
    /// Fraction of atlas members with a non-member image.
    AtlasInvariance,
    /// Spread below which a model counts as special.
    SpreadSpecial,
    /// Spread above which a model counts as not special.
    SpreadNonspecial,
    /// Slack on the preimage-density slope.
    DensitySlope,
    Conservativity,
    /// Newton residual of periodic points.
    PeriodicResidual,
}

impl Tol {
    pub fn default_value(self) -> f64 {
        match self {
            Tol::ConjResidual => 1e-10,
            Tol::DeckDefect => 1e-10,
            Tol::Uniqueness => 1e-11,
            Tol::Rigidity => 1e-9,
            Tol::AtlasInvariance => 0.01,
            Tol::SpreadSpecial => 1e-8,
            Tol::SpreadNonspecial => 1e-3,
            Tol::DensitySlope => 0.1,
            Tol::Conservativity => 1e-7,
            Tol::PeriodicResidual => 1e-10,
        }
    }

    pub fn key(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: Option<f64>,
    /// Omitted: the validator picks the smallest admissible k.
    pub k: Option<f64>,
    pub support_scale: Option<f64>,
    /// Shear strength ε of the g₁ region; defaults to the designed tilt.
    pub shear: Option<f64>,
    /// Stable-direction derivative at the fixed point of the cu model.
    pub center_derivative: Option<f64>,
}

/// Sample sizes; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sizes {
    pub cone_grid: usize,
    pub max_period: u32,
    pub depth_s: usize,
    pub depth_u: usize,
    pub residual_grid: usize,
    pub atlas_grid: usize,
    pub atlas_tol: f64,
    pub special_grid: usize,
    pub special_depth: usize,
    pub density_k: u32,
    pub density_grid: usize,
    pub conservativity_samples: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            cone_grid: 200,
            max_period: 6,
            depth_s: 60,
            depth_u: 30,
            residual_grid: 100,
            atlas_grid: 300,
            atlas_tol: 1e-5,
            special_grid: 10,
            special_depth: 12,
            density_k: 12,
            density_grid: 400,
            conservativity_samples: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    pub model: ModelKind,
    #[serde(default = "default_matrix")]
    pub matrix: [[i64; 2]; 2],
    #[serde(default)]
    pub params: ModelParams,
    /// Report label; defaults to the model kind.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub suite: Vec<Check>,
    #[serde(default)]
    pub tolerances: BTreeMap<Tol, f64>,
    #[serde(default)]
    pub sizes: Sizes,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 for one per core.
    #[serde(default)]
    pub parallelism: usize,
}

fn default_matrix() -> [[i64; 2]; 2] {
    [[3, 1], [1, 1]]
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("check {check} does not apply to model {model}")]
    NotApplicable { check: Check, model: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ConfigError {
    /// The linear rejection behind a model error, if any.
    pub fn linear(&self) -> Option<&LinearError> {
        match self {
            ConfigError::Model(ModelError::Linear(e)) => Some(e),
            _ => None,
        }
    }
}

impl LabConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        LabConfig::from_json(&s)
    }

    pub fn matrix(&self) -> IntMatrix2 {
        let [[a, b], [c, d]] = self.matrix;
        IntMatrix2::new(a, b, c, d)
    }

    pub fn tol(&self, t: Tol) -> f64 {
        self.tolerances.get(&t).copied().unwrap_or(t.default_value())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.model.as_str().to_string())
    }

    /// The configured suite, or the model's default one.
    pub fn checks(&self) -> Vec<Check> {
        if self.suite.is_empty() {
            self.model.default_suite()
        } else {
            self.suite.clone()
        }
    }
}

pub enum Built {
    Linear(LinearModel),
    ManeSc(ManeSc),
    Nonspecial(NonSpecial),
    ManeCu(ManeCu),
    T3(Map3Model),
}

impl Built {
    /// The planar endomorphism, absent for the T³ model.
    pub fn endo(&self) -> Option<&dyn Endomorphism> {
        match self {
            Built::Linear(m) => Some(m),
            Built::ManeSc(m) => Some(m),
            Built::Nonspecial(m) => Some(m),
            Built::ManeCu(m) => Some(m),
            Built::T3(_) => None,
        }
    }
}

fn mane_params(cfg: &LabConfig) -> Result<ManeParams, ModelError> {
    let spec = toral_core::linear::classify(cfg.matrix())?;
    let lambda = cfg.params.lambda.unwrap_or(-2.6);
    let scale = cfg.params.support_scale.unwrap_or(1.0);
    match cfg.params.k {
        Some(k) => Ok(ManeParams { mu1: spec.mu_s, mu2: spec.mu_u, lambda, k, support_scale: scale }),
        None => Ok(choose_k(spec.mu_s, spec.mu_u, lambda, scale)?.params),
    }
}

pub fn build_model(cfg: &LabConfig) -> Result<Built, ModelError> {
    let a = cfg.matrix();
    let built = match cfg.model {
        ModelKind::Linear => Built::Linear(LinearModel::new(a)?),
        ModelKind::ManeSc => Built::ManeSc(build_mane_sc(a, mane_params(cfg)?)?),
        ModelKind::Nonspecial => {
            let base = build_mane_sc(a, mane_params(cfg)?)?;
            let mut region = ShearRegion::at_sink(&base, DEFAULT_TILT);
            if let Some(eps) = cfg.params.shear {
                region = ShearRegion::at_sink(&base, DEFAULT_TILT * eps / region.shear);
            }
            Built::Nonspecial(build_nonspecial(base, region)?)
        }
        ModelKind::ManeCu => {
            let spec = toral_core::linear::classify(a)?;
            let mut p = CuParams::with_center_derivative(spec.mu_s, spec.mu_u, cfg.params.center_derivative.unwrap_or(1.05));
            if let Some(k) = cfg.params.k {
                p.k = k;
            }
            if let Some(s) = cfg.params.support_scale {
                p.support_scale = s;
            }
            Built::ManeCu(build_mane_cu(a, p)?)
        }
        ModelKind::T3 => Built::T3(build_t3_example(a)?),
    };
    Ok(built)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_checks_are_rejected() {
        let e = LabConfig::from_json(r#"{"model": "mane_sc", "suite": ["ph-classify", "bogus"]}"#).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert!(LabConfig::from_json(r#"{"model": "mane_sc", "tolerances": {"nope": 1}}"#).is_err());
    }

    #[test]
    fn defaults() {
        let c = LabConfig::from_json(r#"{"model": "linear"}"#).unwrap();
        assert_eq!(c.matrix(), IntMatrix2::new(3, 1, 1, 1));
        assert_eq!(c.tol(Tol::DeckDefect), 1e-10);
        assert_eq!(c.checks(), ModelKind::Linear.default_suite());
        assert_eq!(Tol::AtlasInvariance.key(), "atlas_invariance");
    }
}
