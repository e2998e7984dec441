//! Two-character motion trace: world-space frames per round plus the
//! decision log that produced them. Overlapping frames between rounds are
//! stored once, so stitching the rounds in order yields a gap-free,
//! duplicate-free timeline.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{PortCallRecord, ProxemicSetup, SceneContext};
use crate::constraints::ConstraintGroup;
use crate::motion::{CharacterId, MotionState, SkeletonConfig};
use crate::signals::InteractionSignalSet;

pub const TRACE_FORMAT: &str = "dyadic-motion-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid trace: {0}")]
pub struct TraceError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub skeleton: SkeletonConfig,
    pub fps: f64,
    pub characters: [CharacterId; 2],
    /// Segment length and hop, frames.
    pub window: usize,
    pub hop: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundFrames {
    #[serde(rename = "I", with = "crate::matrix_serde")]
    pub first: Array2<f64>,
    #[serde(rename = "II", with = "crate::matrix_serde")]
    pub second: Array2<f64>,
}

impl RoundFrames {
    pub fn get(&self, who: CharacterId) -> ArrayView2<'_, f64> {
        match who {
            CharacterId::I => self.first.view(),
            CharacterId::II => self.second.view(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRound {
    pub round_index: usize,
    /// Index of this round's first stored frame on the stitched timeline.
    pub start_frame: usize,
    pub frames: RoundFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterRoundSummary {
    pub state: MotionState,
    pub constraint_groups: Vec<ConstraintGroup>,
    pub similarity: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundDecision {
    pub round_index: usize,
    pub segment_start_s: f64,
    /// Planned interval; absent for the opening round, which runs from the
    /// scene plan alone.
    pub window: Option<(f64, f64)>,
    pub port_calls: Vec<PortCallRecord>,
    pub signals: Option<InteractionSignalSet>,
    pub notes: Vec<String>,
    pub characters: crate::motion::PerCharacter<CharacterRoundSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionTrace {
    pub header: TraceHeader,
    pub scene: Option<SceneContext>,
    pub setup: Option<ProxemicSetup>,
    pub rounds: Vec<TraceRound>,
    pub decisions: Vec<RoundDecision>,
}

impl MotionTrace {
    pub fn validate(&self) -> Result<(), TraceError> {
        let h = &self.header;
        let err = |m: String| Err(TraceError(m));
        if h.format != TRACE_FORMAT {
            return err(format!("format `{}` is not `{TRACE_FORMAT}`", h.format));
        }
        if h.fps != h.skeleton.fps {
            return err(format!("header fps {} differs from skeleton fps {}", h.fps, h.skeleton.fps));
        }
        if h.characters != CharacterId::BOTH {
            return err("characters must be [\"I\", \"II\"]".into());
        }
        h.skeleton.validate().map_err(|e| TraceError(e.to_string()))?;
        let width = h.skeleton.width();
        let mut next = 0;
        for (i, r) in self.rounds.iter().enumerate() {
            if r.round_index != i {
                return err(format!("round {i} is labelled {}", r.round_index));
            }
            if r.start_frame != next {
                return err(format!("round {i} starts at frame {}, expected {next}", r.start_frame));
            }
            let (a, b) = (r.frames.first.dim(), r.frames.second.dim());
            if a != b {
                return err(format!("round {i}: characters have shapes {a:?} and {b:?}"));
            }
            if a.1 != width {
                return err(format!("round {i}: frame width {} differs from header width {width}", a.1));
            }
            if r.frames.first.iter().chain(r.frames.second.iter()).any(|v| !v.is_finite()) {
                return err(format!("round {i} contains non-finite frame values"));
            }
            next += a.0;
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.rounds.iter().map(|r| r.frames.first.nrows()).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.total_frames() as f64 / self.header.fps
    }

    /// All frames of one character in time order.
    pub fn stitched(&self, who: CharacterId) -> Array2<f64> {
        let views: Vec<_> = self.rounds.iter().map(|r| r.frames.get(who)).collect();
        if views.is_empty() {
            return Array2::zeros((0, self.header.skeleton.width()));
        }
        concatenate(Axis(0), &views).expect("validated rounds share a width")
    }
}
