use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    DialogueAnalyzer,
    SceneDesigner,
    SpatialPredictor,
    SyncPredictor,
    GazePredictor,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::DialogueAnalyzer,
        TemplateId::SceneDesigner,
        TemplateId::SpatialPredictor,
        TemplateId::SyncPredictor,
        TemplateId::GazePredictor,
    ];

    /// Versioned identifier sent with every request.
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::DialogueAnalyzer => "dialogue_analyzer.v1",
            TemplateId::SceneDesigner => "scene_designer.v1",
            TemplateId::SpatialPredictor => "spatial_predictor.v1",
            TemplateId::SyncPredictor => "sync_predictor.v1",
            TemplateId::GazePredictor => "gaze_predictor.v1",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateId> {
        TemplateId::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// JSON schema of a valid reply.
    pub fn schema(self) -> Value {
        let clock = json!({
            "type": "object",
            "required": ["hour", "minute"],
            "additionalProperties": false,
            "properties": {
                "hour": {"type": "integer", "minimum": 1, "maximum": 12},
                "minute": {"type": "integer", "minimum": 0, "maximum": 59}
            }
        });
        let who = json!({"type": "string", "enum": ["I", "II"]});
        let configuration = json!({"type": "string", "enum": ["vis_a_vis", "l_shaped", "side_by_side"]});
        let per_character = |inner: Value| {
            json!({
                "type": "object",
                "required": ["I", "II"],
                "additionalProperties": false,
                "properties": {
                    "I": {"anyOf": [{"type": "null"}, inner.clone()]},
                    "II": {"anyOf": [{"type": "null"}, inner]}
                }
            })
        };
        match self {
            TemplateId::DialogueAnalyzer => json!({
                "type": "object",
                "required": ["scenario", "relationship", "emotion", "character_settings"],
                "additionalProperties": false,
                "properties": {
                    "scenario": {"type": "string", "minLength": 1},
                    "relationship": {"type": "string", "minLength": 1},
                    "emotion": {"type": "string", "minLength": 1},
                    "character_settings": {
                        "type": "object",
                        "required": ["I", "II"],
                        "additionalProperties": false,
                        "properties": {
                            "I": {"type": "string", "minLength": 1},
                            "II": {"type": "string", "minLength": 1}
                        }
                    }
                }
            }),
            TemplateId::SceneDesigner => json!({
                "type": "object",
                "required": ["configuration", "distance_category", "ii_seen_from_i", "i_seen_from_ii", "distance_m", "postures"],
                "additionalProperties": false,
                "properties": {
                    "configuration": configuration,
                    "distance_category": {"type": "string", "enum": ["interpersonal", "social", "public"]},
                    "ii_seen_from_i": clock,
                    "i_seen_from_ii": clock,
                    "distance_m": {"type": "number", "exclusiveMinimum": 0},
                    "postures": {
                        "type": "object",
                        "required": ["I", "II"],
                        "additionalProperties": false,
                        "properties": {
                            "I": {"type": "string", "enum": ["stand", "sit"]},
                            "II": {"type": "string", "enum": ["stand", "sit"]}
                        }
                    }
                }
            }),
            TemplateId::SpatialPredictor => per_character(json!({
                "type": "object",
                "required": ["configuration", "movement"],
                "additionalProperties": false,
                "properties": {
                    "configuration": configuration,
                    "partner_clock": clock,
                    "movement": {
                        "type": "array",
                        "prefixItems": [
                            {"type": "number", "minimum": 0, "exclusiveMaximum": 360},
                            {"type": "number", "minimum": 0}
                        ],
                        "minItems": 2,
                        "maxItems": 2
                    }
                }
            })),
            TemplateId::SyncPredictor => json!({
                "type": "object",
                "required": ["sync"],
                "additionalProperties": false,
                "properties": {
                    "sync": {"anyOf": [{"type": "null"}, {
                        "type": "object",
                        "required": ["kind", "initiator", "responder", "trigger_word"],
                        "additionalProperties": false,
                        "properties": {
                            "kind": {"type": "string", "enum": ["matching", "meshing"]},
                            "initiator": who,
                            "responder": who,
                            "trigger_word": {"type": "string", "minLength": 1}
                        }
                    }]}
                }
            }),
            TemplateId::GazePredictor => per_character(json!({
                "type": "object",
                "required": ["target", "duration_s", "trigger_word"],
                "additionalProperties": false,
                "properties": {
                    "target": {"type": "string", "enum": ["partner"]},
                    "duration_s": {"type": "number", "exclusiveMinimum": 0, "maximum": 2.5},
                    "trigger_word": {"type": "string", "minLength": 1}
                }
            })),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn template_text(id: TemplateId) -> &'static str {
    match id {
        TemplateId::DialogueAnalyzer => include_str!("../../assets/prompts/dialogue_analyzer.v1.txt"),
        TemplateId::SceneDesigner => include_str!("../../assets/prompts/scene_designer.v1.txt"),
        TemplateId::SpatialPredictor => include_str!("../../assets/prompts/spatial_predictor.v1.txt"),
        TemplateId::SyncPredictor => include_str!("../../assets/prompts/sync_predictor.v1.txt"),
        TemplateId::GazePredictor => include_str!("../../assets/prompts/gaze_predictor.v1.txt"),
    }
}

/// Fills `{name}` placeholders; `{schema}` always receives the template's
/// reply schema. Unknown placeholders are left as written.
pub fn render_prompt(id: TemplateId, values: &BTreeMap<&str, String>) -> String {
    let mut out = template_text(id).to_string();
    let schema = serde_json::to_string_pretty(&id.schema()).expect("schema serializes");
    out = out.replace("{schema}", &schema);
    for (key, value) in values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}
