//! The director: dialogue analysis and scene planning before the first
//! round, then a per-round loop that describes the previous motion, asks
//! three predictors for spatial, synchrony and gaze adjustments, merges them
//! into one signal set and hands it to the constraint compiler.
//!
//! All model access goes through [`LlmPort`]. [`RuleStub`] is an offline
//! port driven by a shipped rule table.

mod director;
mod port;
mod prompts;
mod session;
mod stub;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use director::{
    analyze_dialogue, collect_context, integrate_decisions, plan_scene, predict_signals,
    upcoming_words, Integration, RoundSnapshot, SignalProposals,
};
pub use port::{
    network_requests, record_network_request, sha256_hex, strip_fence, LlmPort, PortCallRecord,
    PortError, PortRequest, ScriptedPort, MAX_RETRIES,
};
pub use prompts::{render_prompt, template_text, TemplateId};
pub use session::{round_count, run_dialogue, RunOptions, Transcript};
pub use stub::{RuleStub, SceneRule, StubRules};

use crate::constraints::CompileError;
use crate::diffusion::DiffusionError;
use crate::motion::{CharacterId, MotionError, MotionState, PerCharacter, WorldPose};
use crate::proxemics::{DistanceCategory, PositionalConfiguration, ProxemicsError, RelativeSpatial};
use crate::signals::TranscriptWord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("reply for `{template_id}` still invalid after {attempts} attempts: {reason}")]
    Protocol {
        template_id: String,
        attempts: usize,
        reason: String,
    },
    #[error(transparent)]
    Port(#[from] PortError),
    #[error("scene plan is inconsistent: {0}")]
    PlanInconsistent(String),
    #[error("trigger word `{0}` not found in the upcoming transcript")]
    TriggerWordNotFound(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Proxemics(#[from] ProxemicsError),
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        source: Box<AgentError>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneContext {
    pub scenario: String,
    pub relationship: String,
    pub emotion: String,
    pub character_settings: BTreeMap<CharacterId, String>,
}

impl SceneContext {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("scenario", &self.scenario),
            ("relationship", &self.relationship),
            ("emotion", &self.emotion),
        ] {
            if v.trim().is_empty() {
                return Err(format!("`{name}` is empty"));
            }
        }
        for who in CharacterId::BOTH {
            match self.character_settings.get(&who) {
                Some(s) if !s.trim().is_empty() => {}
                _ => return Err(format!("`character_settings.{who}` is missing or empty")),
            }
        }
        Ok(())
    }

    /// Single-paragraph rendering used inside prompts.
    pub fn render(&self) -> String {
        let mut out = format!(
            "scenario: {}; relationship: {}; emotion: {}",
            self.scenario, self.relationship, self.emotion
        );
        for (who, s) in &self.character_settings {
            out.push_str(&format!("; Character {who}: {s}"));
        }
        out
    }
}

/// Initial layout of both characters. Character I sits at the origin
/// facing +X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxemicSetup {
    pub configuration: PositionalConfiguration,
    pub distance_category: DistanceCategory,
    pub relative: RelativeSpatial,
    pub poses: PerCharacter<WorldPose>,
    pub states: PerCharacter<MotionState>,
}

/// Inputs to the three per-round predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionContext {
    pub scene: SceneContext,
    pub prev_motion_description: String,
    pub upcoming_transcripts: Vec<TranscriptWord>,
    pub round_index: usize,
    /// Planned interval `[start, end)`, seconds.
    pub window: (f64, f64),
    /// Mutual bearings and distance at the end of the previous round.
    pub relative: RelativeSpatial,
}
