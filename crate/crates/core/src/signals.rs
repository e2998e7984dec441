//! Wire types for the per-round interaction signals, plus the transcript
//! word record they reference.
//!
//! The JSON form is a map keyed by character (`"I"`, `"II"`), each holding
//! optional `spatial`, `sync` and `gaze` entries. A sync entry lives under
//! the character that acts on it (the imitator for matching, the nodder for
//! meshing).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::CharacterId;
use crate::proxemics::{ClockDirection, PositionalConfiguration};

pub const MAX_GAZE_S: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptWord {
    pub speaker: CharacterId,
    pub word: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid signal at {path}: {reason}")]
pub struct SignalError {
    pub path: String,
    pub reason: String,
}

impl SignalError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialSignal {
    pub configuration: PositionalConfiguration,
    /// Where this character should perceive the partner after adjusting.
    /// Absent means keep the current orientation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner_clock: Option<ClockDirection>,
    /// `[angle_deg, distance_cm]`, angle clockwise from forward.
    pub movement: [f64; 2],
}

impl SpatialSignal {
    pub fn movement_m(&self) -> f64 {
        self.movement[1] / 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncKind {
    Matching,
    Meshing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSignal {
    pub kind: SyncKind,
    pub initiator: CharacterId,
    pub responder: CharacterId,
    pub trigger_word: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeTarget {
    Partner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeSignal {
    pub target: GazeTarget,
    pub duration_s: f64,
    pub trigger_word: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSignals {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialSignal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync: Option<SyncSignal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze: Option<GazeSignal>,
}

impl CharacterSignals {
    pub fn is_empty(&self) -> bool {
        self.spatial.is_none() && self.sync.is_none() && self.gaze.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSignalSet {
    #[serde(rename = "I", default)]
    pub first: CharacterSignals,
    #[serde(rename = "II", default)]
    pub second: CharacterSignals,
}

impl InteractionSignalSet {
    pub fn get(&self, who: CharacterId) -> &CharacterSignals {
        match who {
            CharacterId::I => &self.first,
            CharacterId::II => &self.second,
        }
    }

    pub fn get_mut(&mut self, who: CharacterId) -> &mut CharacterSignals {
        match who {
            CharacterId::I => &mut self.first,
            CharacterId::II => &mut self.second,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty() && self.second.is_empty()
    }

    /// Parses and validates the JSON wire form.
    pub fn from_json(text: &str) -> Result<Self, SignalError> {
        let set: Self =
            serde_json::from_str(text).map_err(|e| SignalError::new("$", e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        for who in CharacterId::BOTH {
            let s = self.get(who);
            let base = format!("$.{who}");
            if let Some(sp) = &s.spatial {
                validate_spatial(sp, &format!("{base}.spatial"))?;
            }
            if let Some(sync) = &s.sync {
                validate_sync(sync, who, &format!("{base}.sync"))?;
            }
            if let Some(g) = &s.gaze {
                validate_gaze(g, &format!("{base}.gaze"))?;
            }
        }
        Ok(())
    }

    /// Character whose motion another character imitates this round.
    pub fn imitation_initiator(&self) -> Option<CharacterId> {
        CharacterId::BOTH.into_iter().find_map(|who| match &self.get(who).sync {
            Some(s) if s.kind == SyncKind::Matching => Some(s.initiator),
            _ => None,
        })
    }
}

pub fn validate_spatial(sp: &SpatialSignal, path: &str) -> Result<(), SignalError> {
    let [angle, dist] = sp.movement;
    if !angle.is_finite() || !(0.0..360.0).contains(&angle) {
        return Err(SignalError::new(
            format!("{path}.movement[0]"),
            format!("angle {angle} outside [0, 360)"),
        ));
    }
    if !dist.is_finite() || dist < 0.0 {
        return Err(SignalError::new(
            format!("{path}.movement[1]"),
            format!("distance {dist} cm must be non-negative"),
        ));
    }
    if let Some(c) = sp.partner_clock {
        if ClockDirection::new(c.hour, c.minute).is_err() {
            return Err(SignalError::new(
                format!("{path}.partner_clock"),
                format!("invalid clock {}:{:02}", c.hour, c.minute),
            ));
        }
    }
    Ok(())
}

pub fn validate_sync(sync: &SyncSignal, owner: CharacterId, path: &str) -> Result<(), SignalError> {
    if sync.initiator == sync.responder {
        return Err(SignalError::new(path, "initiator and responder must differ"));
    }
    if sync.responder != owner {
        return Err(SignalError::new(
            format!("{path}.responder"),
            format!("sync listed under {owner} must have {owner} as responder"),
        ));
    }
    non_empty_word(&sync.trigger_word, &format!("{path}.trigger_word"))
}

pub fn validate_gaze(g: &GazeSignal, path: &str) -> Result<(), SignalError> {
    if !(g.duration_s > 0.0 && g.duration_s <= MAX_GAZE_S) {
        return Err(SignalError::new(
            format!("{path}.duration_s"),
            format!("duration {} s outside (0, {MAX_GAZE_S}]", g.duration_s),
        ));
    }
    non_empty_word(&g.trigger_word, &format!("{path}.trigger_word"))
}

fn non_empty_word(w: &str, path: &str) -> Result<(), SignalError> {
    if w.trim().is_empty() {
        return Err(SignalError::new(path, "trigger word is empty"));
    }
    Ok(())
}
