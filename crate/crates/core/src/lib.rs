//! Conversational two-character motion synthesis.
//!
//! A director plans where two speakers stand, then drives a guided
//! diffusion sampler one overlapping segment at a time, turning predicted
//! interaction signals (gaze, nods, imitation, repositioning) into
//! per-frame constraints. Synchrony and distance-distribution metrics
//! score the result.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod config;
pub mod constraints;
pub mod diffusion;
pub mod io;
mod matrix_serde;
pub mod metrics;
pub mod motion;
pub mod proxemics;
pub mod signals;
pub mod trace;

pub use agent::{run_dialogue, AgentError, LlmPort, RuleStub, RunOptions, Transcript};
pub use config::EngineConfig;
pub use constraints::{compile_character, ConstraintSet};
pub use io::IoError;
pub use motion::{CharacterId, MotionSegment, PerCharacter, SkeletonConfig, WorldPose};
pub use signals::{InteractionSignalSet, TranscriptWord};
pub use trace::MotionTrace;
