//! TOML experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{ForwardModel, ModelConfig};
use crate::harness::noise::{NoiseConfig, NoiseSpec};
use crate::regularizer::SolverConfig;
use crate::rkhs::{KernelConfig, KernelModel, SpectrumConfig};
use crate::rules::{theoretical_exponents, DecayConfig, DecayModel, Exponents, RateConfig, RateParams};
use crate::smoothness::{make_truth, SourceCondition, SourceConfig};
use crate::spectral::{CoefficientVector, ScaleConfig, ScaleSpectrum};

/// How `λ*` is chosen for each sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// `Θ^{−1}(1/√m)` on the exact effective dimension.
    Theta,
    /// `m^{−1/(2u+b)}` or `(log m / m)^{1/(2r+1)}`.
    ClosedForm,
}

/// Config section `[plan]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_slope_tol")]
    pub slope_tol: f64,
    #[serde(default = "default_rule")]
    pub lambda_rule: LambdaRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

fn default_sizes() -> Vec<usize> {
    (7..=13).map(|k| 1 << k).collect()
}

fn default_trials() -> usize {
    50
}

fn default_eta() -> f64 {
    0.05
}

fn default_slope_tol() -> f64 {
    0.12
}

fn default_rule() -> LambdaRule {
    LambdaRule::Theta
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            sample_sizes: default_sizes(),
            trials: default_trials(),
            eta: default_eta(),
            seed: 0,
            slope_tol: default_slope_tol(),
            lambda_rule: default_rule(),
            output_path: None,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() || self.sample_sizes[0] < 2 {
            return Err(Error::Config("plan.sample_sizes must be nonempty with every m >= 2".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("plan.sample_sizes must be strictly increasing".into()));
        }
        if self.trials < 2 {
            return Err(Error::Config("plan.trials must be at least 2".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("plan.eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.slope_tol > 0.0) {
            return Err(Error::Config("plan.slope_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub scale: ScaleConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub plan: PlanConfig,
}

impl Config {
    /// Parses and validates; parse errors carry the line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.plan.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Everything a study needs, built once from a [`Config`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: Config,
    pub scale: ScaleSpectrum,
    pub kernel: KernelModel,
    pub source: SourceCondition,
    pub truth: CoefficientVector,
    pub model: ForwardModel,
    pub noise: NoiseSpec,
    pub decay: DecayModel,
    pub params: RateParams,
    pub exponents: Exponents,
}

impl Experiment {
    pub fn from_config(config: Config) -> Result<Self> {
        config.plan.validate()?;
        let scale = config.scale.build()?;
        let kernel = config.kernel.build(scale.dim())?;
        let source = config.source.build(scale.dim())?;
        let p = config.model.p;
        let s = config.model.s;
        source.check_hypotheses(p, s)?;
        let truth = make_truth(&source, &scale, config.plan.seed)?;
        let model = config.model.build(&scale, &kernel, truth.clone())?;
        let noise = config.noise.build()?;
        let spectrum_b = match config.kernel.spectrum {
            SpectrumConfig::Power { power } => Some(power),
            SpectrumConfig::List(_) => None,
        };
        let decay = config.decay.build(spectrum_b)?;
        let params = match config.rate.regime {
            Some(regime) => RateParams::with_regime(p, source.q, source.r, s, regime)?,
            None => RateParams::new(p, source.q, source.r, s)?,
        };
        let exponents = theoretical_exponents(&params, &decay)?;
        Ok(Self { config, scale, kernel, source, truth, model, noise, decay, params, exponents })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::from_toml_str("").unwrap();
        assert_eq!(cfg.plan.sample_sizes, vec![128, 256, 512, 1024, 2048, 4096, 8192]);
        assert_eq!(cfg.scale.dim, 512);
        let again = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn parse_errors_are_line_anchored() {
        let err = Config::from_toml_str("[plan]\ntrials = 10\nseed = \"x\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");

        let err = Config::from_toml_str("[plan]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn plan_validation() {
        assert!(Config::from_toml_str("[plan]\nsample_sizes = [256, 128]\n").is_err());
        assert!(Config::from_toml_str("[plan]\ntrials = 1\n").is_err());
        assert!(Config::from_toml_str("[plan]\neta = 1.5\n").is_err());
    }

    #[test]
    fn experiment_builds() {
        let cfg = Config::from_toml_str(
            "[scale]\ndim = 64\n[model]\np = 1.0\n[source]\nr = 1.0\nq = 2.0\n[plan]\nseed = 3\n",
        )
        .unwrap();
        let exp = Experiment::from_config(cfg).unwrap();
        assert_eq!(exp.params.regime, crate::rules::Regime::Oversmoothing);
        assert!((exp.exponents.m_exponent_reconstruction - 1.0 / 6.0).abs() < 1e-12);
    }
}
