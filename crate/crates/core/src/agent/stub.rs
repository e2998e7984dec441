use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::director::{ScenePlanReply, SyncReply};
use super::port::{LlmPort, PortError, PortRequest};
use super::prompts::TemplateId;
use super::SceneContext;
use crate::constraints::normalize_token;
use crate::motion::{CharacterId, MotionState, PerCharacter};
use crate::proxemics::{
    bearing_to_move_angle, canonical_bearings, ClockDirection, DistanceCategory,
    PositionalConfiguration, RelativeSpatial,
};
use crate::signals::{GazeSignal, GazeTarget, SpatialSignal, SyncKind, SyncSignal, TranscriptWord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisDefaults {
    pub scenario: String,
    pub relationship: String,
    pub emotion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRule {
    pub keywords: Vec<String>,
    pub configuration: PositionalConfiguration,
    pub distance: DistanceCategory,
    pub posture: MotionState,
    pub nod: bool,
    pub imitation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeRule {
    pub duration_s: f64,
    pub min_word_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodRule {
    pub affirmations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImitationRule {
    pub min_word_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialRule {
    pub step_cm: f64,
}

/// Rule table for [`RuleStub`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubRules {
    pub analysis: AnalysisDefaults,
    pub scene: Vec<SceneRule>,
    pub default_scene: SceneRule,
    pub gaze: GazeRule,
    pub nod: NodRule,
    pub imitation: ImitationRule,
    pub spatial: SpatialRule,
}

pub const DEFAULT_RULES_TOML: &str = include_str!("../../assets/stub_rules.toml");

impl Default for StubRules {
    fn default() -> Self {
        toml::from_str(DEFAULT_RULES_TOML).expect("shipped stub rules parse")
    }
}

impl StubRules {
    pub fn validate(&self) -> Result<(), String> {
        let g = self.gaze.duration_s;
        if !(g > 0.0 && g <= crate::signals::MAX_GAZE_S) {
            return Err(format!("gaze duration {g} s outside (0, 2.5]"));
        }
        let step = self.spatial.step_cm;
        if !(step.is_finite() && step >= 0.0) {
            return Err(format!("spatial step {step} cm must be non-negative"));
        }
        for rule in self.scene.iter().chain([&self.default_scene]) {
            if rule.posture == MotionState::Walk {
                return Err("scene postures must be stand or sit".into());
            }
        }
        Ok(())
    }

    /// First rule with a keyword in the relationship or scenario text.
    pub fn scene_rule(&self, scene: &SceneContext) -> &SceneRule {
        let text = format!("{} {}", scene.relationship, scene.scenario).to_lowercase();
        self.scene
            .iter()
            .find(|r| r.keywords.iter().any(|k| text.contains(&k.to_lowercase())))
            .unwrap_or(&self.default_scene)
    }
}

/// Offline port answering every template from [`StubRules`]. Replies are
/// always schema-valid; trigger words are taken from the upcoming words.
#[derive(Debug, Clone, Default)]
pub struct RuleStub {
    pub rules: StubRules,
}

impl RuleStub {
    pub fn new(rules: StubRules) -> Self {
        Self { rules }
    }
}

fn var<T: DeserializeOwned>(req: &PortRequest, key: &str) -> Option<T> {
    req.variables
        .get(key)
        .and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("reply serializes")
}

/// `(speaker, listener)`: whoever says more upcoming words speaks; ties go
/// to whoever starts first.
fn roles(words: &[TranscriptWord]) -> Option<(CharacterId, CharacterId)> {
    let first = words
        .iter()
        .min_by(|a, b| a.start.total_cmp(&b.start))?
        .speaker;
    let count = |c| words.iter().filter(|w| w.speaker == c).count();
    let (a, b) = (count(CharacterId::I), count(CharacterId::II));
    let speaker = match a.cmp(&b) {
        std::cmp::Ordering::Greater => CharacterId::I,
        std::cmp::Ordering::Less => CharacterId::II,
        std::cmp::Ordering::Equal => first,
    };
    Some((speaker, speaker.partner()))
}

/// Bearing at which `who` sees its partner.
fn partner_bearing(rel: &RelativeSpatial, who: CharacterId) -> f64 {
    match who {
        CharacterId::I => rel.theta,
        CharacterId::II => rel.phi,
    }
}

fn sees_partner(rel: &RelativeSpatial, who: CharacterId) -> bool {
    partner_bearing(rel, who).abs() < FRAC_PI_2
}

fn time_ordered(words: &[TranscriptWord]) -> Vec<&TranscriptWord> {
    let mut v: Vec<&TranscriptWord> = words.iter().collect();
    v.sort_by(|a, b| a.start.total_cmp(&b.start));
    v
}

/// First word of `speaker` whose normalized form satisfies `pred`.
fn first_word(
    words: &[TranscriptWord],
    speaker: CharacterId,
    pred: impl Fn(&str) -> bool,
) -> Option<String> {
    time_ordered(words)
        .into_iter()
        .filter(|w| w.speaker == speaker)
        .map(|w| normalize_token(&w.word))
        .find(|t| !t.is_empty() && pred(t))
}

impl RuleStub {
    fn analyze(&self, req: &PortRequest) -> SceneContext {
        let words: Vec<TranscriptWord> = var(req, "transcript").unwrap_or_default();
        let hints: BTreeMap<String, String> = var(req, "hints").unwrap_or_default();
        let pick = |key: &str, fallback: &str| {
            hints
                .get(key)
                .filter(|v| !v.trim().is_empty())
                .cloned()
                .unwrap_or_else(|| fallback.to_string())
        };
        let ordered = time_ordered(&words);
        let mut turns = [0usize; 2];
        let mut counts = [0usize; 2];
        let mut prev = None;
        for w in ordered {
            counts[w.speaker.index()] += 1;
            if prev != Some(w.speaker) {
                turns[w.speaker.index()] += 1;
            }
            prev = Some(w.speaker);
        }
        let character_settings = CharacterId::BOTH
            .into_iter()
            .map(|c| {
                let i = c.index();
                let text = match turns[i] {
                    0 => "listens without speaking".to_string(),
                    1 => format!("speaks once, {} words", counts[i]),
                    t => format!("speaks in {t} turns, {} words", counts[i]),
                };
                (c, text)
            })
            .collect();
        let d = &self.rules.analysis;
        SceneContext {
            scenario: pick("scenario", &d.scenario),
            relationship: pick("relationship", &d.relationship),
            emotion: pick("emotion", &d.emotion),
            character_settings,
        }
    }

    fn default_scene(&self) -> SceneContext {
        let d = &self.rules.analysis;
        SceneContext {
            scenario: d.scenario.clone(),
            relationship: d.relationship.clone(),
            emotion: d.emotion.clone(),
            character_settings: BTreeMap::new(),
        }
    }

    fn plan(&self, req: &PortRequest) -> ScenePlanReply {
        let scene: SceneContext = var(req, "scene").unwrap_or_else(|| self.default_scene());
        let rule = self.rules.scene_rule(&scene);
        let (theta, phi) = canonical_bearings(rule.configuration);
        ScenePlanReply {
            configuration: rule.configuration,
            distance_category: rule.distance,
            ii_seen_from_i: ClockDirection::from_angle(theta),
            i_seen_from_ii: ClockDirection::from_angle(phi),
            distance_m: rule.distance.midpoint_m(),
            postures: PerCharacter::new(rule.posture, rule.posture),
        }
    }

    fn spatial(&self, req: &PortRequest) -> PerCharacter<Option<SpatialSignal>> {
        let mut out = PerCharacter::new(None, None);
        let (Some(scene), Some(rel), Some(words)) = (
            var::<SceneContext>(req, "scene"),
            var::<RelativeSpatial>(req, "relative"),
            var::<Vec<TranscriptWord>>(req, "transcript"),
        ) else {
            return out;
        };
        let Some((_, listener)) = roles(&words) else {
            return out;
        };
        let rule = self.rules.scene_rule(&scene);
        let (lo, hi) = rule.distance.range_m();
        let bearing = partner_bearing(&rel, listener);
        let angle = if rel.distance > hi {
            bearing_to_move_angle(bearing)
        } else if rel.distance < lo {
            bearing_to_move_angle(bearing + std::f64::consts::PI)
        } else {
            return out;
        };
        *out.get_mut(listener) = Some(SpatialSignal {
            configuration: rule.configuration,
            partner_clock: None,
            movement: [angle, self.rules.spatial.step_cm],
        });
        out
    }

    fn sync(&self, req: &PortRequest) -> SyncReply {
        let none = SyncReply { sync: None };
        let (Some(scene), Some(rel), Some(words)) = (
            var::<SceneContext>(req, "scene"),
            var::<RelativeSpatial>(req, "relative"),
            var::<Vec<TranscriptWord>>(req, "transcript"),
        ) else {
            return none;
        };
        let Some((speaker, listener)) = roles(&words) else {
            return none;
        };
        let rule = self.rules.scene_rule(&scene);
        let signal = |kind, trigger_word| SyncReply {
            sync: Some(SyncSignal {
                kind,
                initiator: speaker,
                responder: listener,
                trigger_word,
            }),
        };
        if rule.nod {
            let affirm = &self.rules.nod.affirmations;
            if let Some(w) = first_word(&words, speaker, |t| affirm.iter().any(|a| a.eq_ignore_ascii_case(t))) {
                return signal(SyncKind::Meshing, w);
            }
        }
        let mutual = sees_partner(&rel, CharacterId::I) && sees_partner(&rel, CharacterId::II);
        if rule.imitation && mutual {
            let n = self.rules.imitation.min_word_chars;
            if let Some(w) = first_word(&words, speaker, |t| t.chars().count() >= n) {
                return signal(SyncKind::Matching, w);
            }
        }
        none
    }

    fn gaze(&self, req: &PortRequest) -> PerCharacter<Option<GazeSignal>> {
        let mut out = PerCharacter::new(None, None);
        let (Some(rel), Some(words)) = (
            var::<RelativeSpatial>(req, "relative"),
            var::<Vec<TranscriptWord>>(req, "transcript"),
        ) else {
            return out;
        };
        let Some((speaker, listener)) = roles(&words) else {
            return out;
        };
        if !sees_partner(&rel, listener) {
            return out;
        }
        let n = self.rules.gaze.min_word_chars;
        if let Some(w) = first_word(&words, speaker, |t| t.chars().count() >= n) {
            *out.get_mut(listener) = Some(GazeSignal {
                target: GazeTarget::Partner,
                duration_s: self.rules.gaze.duration_s,
                trigger_word: w,
            });
        }
        out
    }
}

impl LlmPort for RuleStub {
    fn complete(&self, request: &PortRequest) -> Result<String, PortError> {
        let id = TemplateId::parse(&request.template_id).ok_or_else(|| {
            PortError::Config(format!("stub has no rules for `{}`", request.template_id))
        })?;
        Ok(match id {
            TemplateId::DialogueAnalyzer => to_json(&self.analyze(request)),
            TemplateId::SceneDesigner => to_json(&self.plan(request)),
            TemplateId::SpatialPredictor => to_json(&self.spatial(request)),
            TemplateId::SyncPredictor => to_json(&self.sync(request)),
            TemplateId::GazePredictor => to_json(&self.gaze(request)),
        })
    }
}
