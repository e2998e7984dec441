//! Guided diffusion sampling: noise schedule, denoiser port with a
//! closed-form Gaussian reference, constraint guidance and DDIM stepping
//! with prefix inpainting for autoregressive continuation.

mod denoiser;
mod guidance;
mod sampler;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use denoiser::{
    apply_condition_dropout, cfg_combine, gaussian_denoiser, training_loss, Conditions, Denoiser,
    GaussianDenoiser, GaussianPrior, NullFlags, PriorComponent,
};
pub use guidance::{
    constraint_loss, guide_x0, replacement_active, similarity_replace, AlphaMap, GuidanceConfig,
    LossNorm, ReplacementWindow,
};
pub use sampler::{sample_segment, SampleRequest};
pub use schedule::{
    ddim_step, ddim_step_with_eps, forward_noise, inpaint_prefix, make_schedule, predict_x0,
    NoiseSchedule,
};

use crate::motion::{MotionError, MotionState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("overlap of {overlap} frames exceeds segment length {frames}")]
    InvalidOverlap { overlap: usize, frames: usize },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("no prior for state {0}")]
    MissingPrior(MotionState),
    #[error("invalid guidance config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

/// Schedule and windowing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Segment length `K` in frames.
    pub window: usize,
    /// Frames between consecutive segment starts.
    pub hop: usize,
    pub condition_dropout: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_min: 1e-4,
            beta_max: 2e-2,
            window: 150,
            hop: 75,
            condition_dropout: 0.2,
        }
    }
}

impl DiffusionConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule, DiffusionError> {
        make_schedule(self.steps, self.beta_min, self.beta_max)
    }

    /// Frames shared with the previous segment.
    pub fn overlap(&self) -> usize {
        self.window - self.hop
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.hop == 0 || self.hop > self.window {
            return Err(DiffusionError::InvalidConfig(format!(
                "hop {} must lie in 1..={}",
                self.hop, self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.condition_dropout) {
            return Err(DiffusionError::InvalidConfig(
                "condition dropout must lie in [0, 1]".into(),
            ));
        }
        self.schedule().map(|_| ())
    }
}
