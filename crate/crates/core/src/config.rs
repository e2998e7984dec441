//! Engine-wide configuration, loadable from TOML. Every table and field is
//! optional; omitted values take the defaults below.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::StubRules;
use crate::constraints::{CompilerConfig, HeadOffsets, NodParams};
use crate::diffusion::{
    DiffusionConfig, DiffusionError, GaussianDenoiser, GaussianPrior, GuidanceConfig, NoiseSchedule,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Isotropic Gaussian prior for the reference denoiser, shared by all
/// motion states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub stddev: f64,
    /// Per-channel mean; zeros when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            stddev: 0.1,
            mean: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    /// Largest step an imitating character may keep, meters.
    pub imitation_move_limit_m: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            imitation_move_limit_m: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub diffusion: DiffusionConfig,
    pub guidance: GuidanceConfig,
    pub nod: NodParams,
    pub head_offsets: HeadOffsets,
    pub skeleton: crate::motion::SkeletonConfig,
    pub prior: PriorConfig,
    pub integration: IntegrationConfig,
    pub stub: StubRules,
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.diffusion.validate().map_err(invalid)?;
        self.guidance.validate().map_err(invalid)?;
        self.skeleton.validate().map_err(invalid)?;
        self.stub.validate().map_err(ConfigError::Invalid)?;
        if self.guidance.ddim_steps > self.diffusion.steps {
            return Err(invalid(format!(
                "{} DDIM steps exceed {} diffusion steps",
                self.guidance.ddim_steps, self.diffusion.steps
            )));
        }
        if self.guidance.similarity_cutoff >= self.diffusion.steps {
            return Err(invalid("similarity cutoff must be below the diffusion step count"));
        }
        let n = &self.nod;
        if !(n.amplitude_rad.is_finite() && n.frequency_hz > 0.0 && n.duration_s > 0.0) {
            return Err(invalid("nod frequency and duration must be positive"));
        }
        if !(self.prior.stddev > 0.0) {
            return Err(invalid("prior stddev must be positive"));
        }
        if let Some(m) = &self.prior.mean {
            if m.len() != self.skeleton.width() {
                return Err(invalid(format!(
                    "prior mean has {} channels, skeleton has {}",
                    m.len(),
                    self.skeleton.width()
                )));
            }
        }
        if !(self.integration.imitation_move_limit_m >= 0.0) {
            return Err(invalid("imitation move limit must be non-negative"));
        }
        Ok(())
    }

    /// Compiler settings; the similarity cutoff comes from the guidance
    /// table so both stages agree.
    pub fn compiler(&self) -> CompilerConfig {
        CompilerConfig {
            nod: self.nod,
            head_offsets: self.head_offsets,
            similarity_cutoff: self.guidance.similarity_cutoff,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, DiffusionError> {
        self.diffusion.schedule()
    }

    pub fn reference_denoiser(&self) -> Result<GaussianDenoiser, DiffusionError> {
        let mean = self
            .prior
            .mean
            .clone()
            .unwrap_or_else(|| vec![0.0; self.skeleton.width()]);
        let prior = GaussianPrior::isotropic(mean, self.prior.stddev)?;
        Ok(GaussianDenoiser::uniform(prior, self.schedule()?))
    }
}
