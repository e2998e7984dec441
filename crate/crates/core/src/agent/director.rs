use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::port::{call_validated, strip_fence, LlmPort, PortCallRecord, PortRequest, Rejection};
use super::prompts::{render_prompt, TemplateId};
use super::{AgentError, InteractionContext, ProxemicSetup, SceneContext};
use crate::constraints::resolve_word_timestamp;
use crate::motion::{
    head_orientation, CharacterId, MotionSegment, MotionState, PerCharacter, SkeletonConfig,
    WorldPose,
};
use crate::proxemics::{
    clock_to_angle, compute_global_pose, relative_from_world, validate_configuration,
    ClockDirection, Direction, DistanceCategory, PositionalConfiguration, RelativeSpatial,
};
use crate::signals::{
    validate_gaze, validate_spatial, validate_sync, CharacterSignals, GazeSignal,
    InteractionSignalSet, SpatialSignal, SyncKind, SyncSignal, TranscriptWord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ScenePlanReply {
    pub configuration: PositionalConfiguration,
    pub distance_category: DistanceCategory,
    pub ii_seen_from_i: ClockDirection,
    pub i_seen_from_ii: ClockDirection,
    pub distance_m: f64,
    pub postures: PerCharacter<MotionState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SyncReply {
    pub sync: Option<SyncSignal>,
}

/// The three predictors' validated outputs for one round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalProposals {
    pub spatial: PerCharacter<Option<SpatialSignal>>,
    pub sync: Option<SyncSignal>,
    pub gaze: PerCharacter<Option<GazeSignal>>,
}

/// Result of merging proposals, with one note per applied conflict rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Integration {
    pub signals: InteractionSignalSet,
    pub notes: Vec<String>,
}

fn fmt2(v: f64) -> String {
    // adding zero turns -0.00 into 0.00
    format!("{:.2}", (v * 100.0).round() / 100.0 + 0.0)
}

fn render_transcript(words: &[TranscriptWord]) -> String {
    if words.is_empty() {
        return "(no speech)".into();
    }
    words
        .iter()
        .map(|w| format!("[{}-{}] {}: {}", fmt2(w.start), fmt2(w.end), w.speaker, w.word))
        .collect::<Vec<_>>()
        .join("\n")
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

fn request(id: TemplateId, prompt_values: BTreeMap<&str, String>, variables: BTreeMap<String, Value>) -> PortRequest {
    PortRequest {
        template_id: id.as_str().to_string(),
        prompt: render_prompt(id, &prompt_values),
        variables,
        schema: id.schema(),
    }
}

fn parse<T: serde::de::DeserializeOwned>(reply: &str) -> Result<T, Rejection> {
    serde_json::from_str(strip_fence(reply)).map_err(|e| Rejection::Invalid(format!("schema violation: {e}")))
}

fn protocol(id: TemplateId) -> impl FnOnce(String, usize) -> AgentError {
    move |reason, attempts| AgentError::Protocol {
        template_id: id.as_str().to_string(),
        attempts,
        reason,
    }
}

/// Scene context from the whole transcript. `hints` are optional
/// user-supplied scene facts passed through to the port.
pub fn analyze_dialogue(
    words: &[TranscriptWord],
    hints: &BTreeMap<String, String>,
    port: &dyn LlmPort,
    log: &mut Vec<PortCallRecord>,
) -> Result<SceneContext, AgentError> {
    if words.is_empty() {
        return Err(AgentError::Precondition("transcript is empty".into()));
    }
    let id = TemplateId::DialogueAnalyzer;
    let hint_text = if hints.is_empty() {
        "(none)".to_string()
    } else {
        hints.iter().map(|(k, v)| format!("{k}: {v}")).collect::<Vec<_>>().join("\n")
    };
    let prompt = BTreeMap::from([("transcript", render_transcript(words)), ("hints", hint_text)]);
    let vars = BTreeMap::from([
        ("transcript".to_string(), to_value(&words)),
        ("hints".to_string(), to_value(hints)),
    ]);
    call_validated(
        port,
        request(id, prompt, vars),
        log,
        |reply| {
            let scene: SceneContext = parse(reply)?;
            scene.validate().map_err(Rejection::Invalid)?;
            Ok(scene)
        },
        protocol(id),
    )
}

/// Initial layout with Character I at the origin facing +X.
pub fn plan_scene(
    scene: &SceneContext,
    port: &dyn LlmPort,
    log: &mut Vec<PortCallRecord>,
) -> Result<ProxemicSetup, AgentError> {
    scene.validate().map_err(AgentError::Precondition)?;
    let id = TemplateId::SceneDesigner;
    let prompt = BTreeMap::from([("scene", scene.render())]);
    let vars = BTreeMap::from([("scene".to_string(), to_value(scene))]);
    call_validated(
        port,
        request(id, prompt, vars),
        log,
        |reply| {
            let plan: ScenePlanReply = parse(reply)?;
            for (name, c) in [("ii_seen_from_i", plan.ii_seen_from_i), ("i_seen_from_ii", plan.i_seen_from_ii)] {
                ClockDirection::new(c.hour, c.minute)
                    .map_err(|e| Rejection::Invalid(format!("`{name}`: {e}")))?;
            }
            if !(plan.distance_m.is_finite() && plan.distance_m > 0.0) {
                return Err(Rejection::Invalid(format!("`distance_m` {} must be positive", plan.distance_m)));
            }
            if [plan.postures.first, plan.postures.second].contains(&MotionState::Walk) {
                return Err(Rejection::Invalid("postures must be stand or sit".into()));
            }
            let rel = RelativeSpatial::new(
                clock_to_angle(plan.ii_seen_from_i),
                clock_to_angle(plan.i_seen_from_ii),
                plan.distance_m,
            );
            if !validate_configuration(plan.configuration, &rel) {
                return Err(Rejection::Semantic(AgentError::PlanInconsistent(format!(
                    "bearings {} and {} do not form {}",
                    plan.ii_seen_from_i, plan.i_seen_from_ii, plan.configuration
                ))));
            }
            if !plan.distance_category.contains(plan.distance_m) {
                let (lo, hi) = plan.distance_category.range_m();
                return Err(Rejection::Semantic(AgentError::PlanInconsistent(format!(
                    "distance {} m outside the {:?} range [{lo}, {hi}]",
                    plan.distance_m, plan.distance_category
                ))));
            }
            let origin = WorldPose::origin();
            Ok(ProxemicSetup {
                configuration: plan.configuration,
                distance_category: plan.distance_category,
                relative: rel,
                poses: PerCharacter::new(origin, compute_global_pose(&origin, &rel)),
                states: plan.postures,
            })
        },
        protocol(id),
    )
}

/// Words starting inside `[start, end)`.
pub fn upcoming_words(words: &[TranscriptWord], window: (f64, f64)) -> Vec<TranscriptWord> {
    words
        .iter()
        .filter(|w| w.start >= window.0 - 1e-9 && w.start < window.1)
        .cloned()
        .collect()
}

fn posture_verb(s: MotionState) -> &'static str {
    match s {
        MotionState::Stand => "stands",
        MotionState::Walk => "walks",
        MotionState::Sit => "sits",
    }
}

/// Where the previous round left both characters.
#[derive(Debug, Clone, Copy)]
pub struct RoundSnapshot<'a> {
    /// Previous segments in world coordinates.
    pub segments: PerCharacter<&'a MotionSegment>,
    /// Root poses at the last previous frame.
    pub poses: PerCharacter<WorldPose>,
    pub states: PerCharacter<MotionState>,
}

/// Templated description of the previous round's end state plus the words
/// of the planned window.
pub fn collect_context(
    scene: &SceneContext,
    snapshot: &RoundSnapshot<'_>,
    words: &[TranscriptWord],
    round_index: usize,
    window: (f64, f64),
    skeleton: &SkeletonConfig,
) -> Result<InteractionContext, AgentError> {
    let rel = relative_from_world(&snapshot.poses.first, &snapshot.poses.second)?;
    let mut parts = Vec::new();
    for who in CharacterId::BOTH {
        let pose = snapshot.poses.get(who);
        let seg = snapshot.segments.get(who);
        let last = seg.len().checked_sub(1).ok_or_else(|| {
            AgentError::Precondition(format!("previous segment of {who} is empty"))
        })?;
        let (yaw, pitch) = head_orientation(&seg.frame(last), skeleton)?;
        parts.push(format!(
            "Character {who} {} at ({}, {}) facing {} degrees, head turned {} rad and pitched {} rad.",
            posture_verb(*snapshot.states.get(who)),
            fmt2(pose.position[0]),
            fmt2(pose.position[1]),
            fmt2(pose.heading.to_degrees()),
            fmt2(yaw),
            fmt2(pitch),
        ));
    }
    parts.push(format!("They are {} m apart.", fmt2(rel.distance)));
    parts.push(format!(
        "Character II is at Character I's {} ({}); Character I is at Character II's {} ({}).",
        ClockDirection::from_angle(rel.theta),
        Direction::of(rel.theta).as_str(),
        ClockDirection::from_angle(rel.phi),
        Direction::of(rel.phi).as_str(),
    ));
    Ok(InteractionContext {
        scene: scene.clone(),
        prev_motion_description: parts.join(" "),
        upcoming_transcripts: upcoming_words(words, window),
        round_index,
        window,
        relative: rel,
    })
}

fn check_trigger(word: &str, ctx: &InteractionContext) -> Result<(), Rejection> {
    resolve_word_timestamp(word, &ctx.upcoming_transcripts, ctx.window)
        .map(|_| ())
        .map_err(|_| Rejection::Semantic(AgentError::TriggerWordNotFound(word.to_string())))
}

fn predictor_request(id: TemplateId, ctx: &InteractionContext) -> PortRequest {
    let prompt = BTreeMap::from([
        ("scene", ctx.scene.render()),
        ("description", ctx.prev_motion_description.clone()),
        ("transcript", render_transcript(&ctx.upcoming_transcripts)),
        ("round_seconds", fmt2(ctx.window.1 - ctx.window.0)),
    ]);
    let vars = BTreeMap::from([
        ("scene".to_string(), to_value(&ctx.scene)),
        ("description".to_string(), Value::String(ctx.prev_motion_description.clone())),
        ("transcript".to_string(), to_value(&ctx.upcoming_transcripts)),
        ("relative".to_string(), to_value(&ctx.relative)),
        ("window".to_string(), to_value(&ctx.window)),
        ("round_index".to_string(), to_value(&ctx.round_index)),
    ]);
    request(id, prompt, vars)
}

/// Runs the spatial, synchrony and gaze predictors. Every reply is schema
/// checked and every trigger word must occur in the upcoming words.
pub fn predict_signals(
    ctx: &InteractionContext,
    port: &dyn LlmPort,
    log: &mut Vec<PortCallRecord>,
) -> Result<SignalProposals, AgentError> {
    let invalid = |e: crate::signals::SignalError| Rejection::Invalid(e.to_string());

    let id = TemplateId::SpatialPredictor;
    let spatial = call_validated(
        port,
        predictor_request(id, ctx),
        log,
        |reply| {
            let r: PerCharacter<Option<SpatialSignal>> = parse(reply)?;
            for who in CharacterId::BOTH {
                if let Some(sp) = r.get(who) {
                    validate_spatial(sp, &format!("$.{who}")).map_err(invalid)?;
                }
            }
            Ok(r)
        },
        protocol(id),
    )?;

    let id = TemplateId::SyncPredictor;
    let sync = call_validated(
        port,
        predictor_request(id, ctx),
        log,
        |reply| {
            let r: SyncReply = parse(reply)?;
            if let Some(s) = &r.sync {
                validate_sync(s, s.responder, "$.sync").map_err(invalid)?;
                check_trigger(&s.trigger_word, ctx)?;
            }
            Ok(r.sync)
        },
        protocol(id),
    )?;

    let id = TemplateId::GazePredictor;
    let gaze = call_validated(
        port,
        predictor_request(id, ctx),
        log,
        |reply| {
            let r: PerCharacter<Option<GazeSignal>> = parse(reply)?;
            for who in CharacterId::BOTH {
                if let Some(g) = r.get(who) {
                    validate_gaze(g, &format!("$.{who}")).map_err(invalid)?;
                    check_trigger(&g.trigger_word, ctx)?;
                }
            }
            Ok(r)
        },
        protocol(id),
    )?;

    Ok(SignalProposals { spatial, sync, gaze })
}

/// Merges proposals into one signal set.
///
/// Gaze and nodding coexist. An imitating character keeps at most
/// `imitation_move_limit_m` of movement; a larger step is cancelled while
/// any requested facing is kept. A body turn together with a gaze is kept
/// as is and noted.
pub fn integrate_decisions(proposals: SignalProposals, imitation_move_limit_m: f64) -> Integration {
    let mut notes = Vec::new();
    let SignalProposals { spatial, sync, gaze } = proposals;
    let mut chars = PerCharacter::from_fn(|who| CharacterSignals {
        spatial: spatial.get(who).clone(),
        sync: None,
        gaze: gaze.get(who).clone(),
    });
    if let Some(s) = sync {
        let responder = s.responder;
        let imitating = s.kind == SyncKind::Matching;
        chars.get_mut(responder).sync = Some(s);
        let me = chars.get_mut(responder);
        if imitating {
            if let Some(sp) = &mut me.spatial {
                let moved = sp.movement_m();
                if moved > imitation_move_limit_m {
                    notes.push(format!(
                        "Character {responder}: dropped a {} m move while imitating",
                        fmt2(moved)
                    ));
                    sp.movement = [0.0, 0.0];
                    if sp.partner_clock.is_none() {
                        me.spatial = None;
                    }
                }
            }
        }
    }
    for who in CharacterId::BOTH {
        let c = chars.get(who);
        if let (Some(sp), Some(_)) = (&c.spatial, &c.gaze) {
            if sp.partner_clock.is_some() {
                notes.push(format!(
                    "Character {who}: body turn and gaze in the same round; both kept"
                ));
            }
        }
    }
    Integration {
        signals: InteractionSignalSet {
            first: chars.first,
            second: chars.second,
        },
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::port::ScriptedPort;
    use crate::agent::stub::RuleStub;
    use crate::signals::GazeTarget;
    use ndarray::Array2;

    fn word(s: CharacterId, w: &str, start: f64) -> TranscriptWord {
        TranscriptWord {
            speaker: s,
            word: w.into(),
            start,
            end: start + 0.3,
        }
    }

    fn two_turns() -> Vec<TranscriptWord> {
        use CharacterId::*;
        vec![
            word(I, "Hello", 0.0),
            word(I, "there", 0.4),
            word(II, "Hi", 1.0),
            word(II, "friend", 1.4),
        ]
    }

    fn scene(rel: &str) -> SceneContext {
        SceneContext {
            scenario: "a chat".into(),
            relationship: rel.into(),
            emotion: "calm".into(),
            character_settings: BTreeMap::from([
                (CharacterId::I, "talks".to_string()),
                (CharacterId::II, "listens".to_string()),
            ]),
        }
    }

    #[test]
    fn stub_analysis_golden() {
        let mut log = Vec::new();
        let got = analyze_dialogue(&two_turns(), &BTreeMap::new(), &RuleStub::default(), &mut log).unwrap();
        let want = SceneContext {
            scenario: "a two-person conversation".into(),
            relationship: "acquaintances".into(),
            emotion: "neutral".into(),
            character_settings: BTreeMap::from([
                (CharacterId::I, "speaks once, 2 words".to_string()),
                (CharacterId::II, "speaks once, 2 words".to_string()),
            ]),
        };
        assert_eq!(got, want);
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn hints_override_defaults() {
        let hints = BTreeMap::from([("relationship".to_string(), "job interview".to_string())]);
        let got = analyze_dialogue(&two_turns(), &hints, &RuleStub::default(), &mut Vec::new()).unwrap();
        assert_eq!(got.relationship, "job interview");
    }

    #[test]
    fn empty_transcript_rejected() {
        let err = analyze_dialogue(&[], &BTreeMap::new(), &RuleStub::default(), &mut Vec::new());
        assert!(matches!(err, Err(AgentError::Precondition(_))));
    }

    #[test]
    fn missing_relationship_is_protocol_error() {
        let bad = r#"{"scenario":"s","emotion":"e","character_settings":{"I":"a","II":"b"}}"#;
        let port = ScriptedPort::new([bad, bad, bad]);
        let err = analyze_dialogue(&two_turns(), &BTreeMap::new(), &port, &mut Vec::new()).unwrap_err();
        match err {
            AgentError::Protocol { attempts, reason, .. } => {
                assert_eq!(attempts, 3);
                assert!(reason.contains("relationship"), "{reason}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn stub_plans() {
        let stub = RuleStub::default();
        let friends = plan_scene(&scene("friends, casual"), &stub, &mut Vec::new()).unwrap();
        assert_eq!(friends.configuration, PositionalConfiguration::SideBySide);
        assert!((friends.relative.distance - 0.95).abs() < 1e-12);
        assert_eq!(friends.poses.first, WorldPose::origin());
        assert_eq!(friends.states.first, MotionState::Stand);
        let rel = relative_from_world(&friends.poses.first, &friends.poses.second).unwrap();
        assert!(validate_configuration(friends.configuration, &rel));
        assert!(friends.distance_category.contains(rel.distance));

        let interview = plan_scene(&scene("job interview"), &stub, &mut Vec::new()).unwrap();
        assert_eq!(interview.configuration, PositionalConfiguration::VisAVis);
        assert_eq!(interview.distance_category, DistanceCategory::Social);
        assert!(matches!(interview.states.first, MotionState::Stand | MotionState::Sit));
    }

    #[test]
    fn inconsistent_plan_rejected() {
        let bad = r#"{"configuration":"vis_a_vis","distance_category":"social",
            "ii_seen_from_i":{"hour":3,"minute":0},"i_seen_from_ii":{"hour":12,"minute":0},
            "distance_m":1.0,"postures":{"I":"stand","II":"stand"}}"#;
        let port = ScriptedPort::new([bad, bad, bad]);
        let err = plan_scene(&scene("x"), &port, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, AgentError::PlanInconsistent(_)));
        let far = bad.replace(r#""hour":3"#, r#""hour":12"#).replace("1.0", "1.5");
        let port = ScriptedPort::new([far.as_str(), far.as_str(), far.as_str()]);
        let err = plan_scene(&scene("x"), &port, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, AgentError::PlanInconsistent(_)));
    }

    fn still_segment(who: CharacterId, skel: &SkeletonConfig) -> MotionSegment {
        MotionSegment::new(Array2::zeros((10, skel.width())), who, 0).unwrap()
    }

    fn facing_context() -> (SkeletonConfig, MotionSegment, MotionSegment) {
        let skel = SkeletonConfig::reference();
        let a = still_segment(CharacterId::I, &skel);
        let b = still_segment(CharacterId::II, &skel);
        (skel, a, b)
    }

    #[test]
    fn context_description_golden() {
        let (skel, a, b) = facing_context();
        let snap = RoundSnapshot {
            segments: PerCharacter::new(&a, &b),
            poses: PerCharacter::new(WorldPose::origin(), WorldPose::new(1.0, 0.0, std::f64::consts::PI)),
            states: PerCharacter::new(MotionState::Stand, MotionState::Stand),
        };
        let words = two_turns();
        let ctx = collect_context(&scene("x"), &snap, &words, 3, (0.0, 1.2), &skel).unwrap();
        let d = &ctx.prev_motion_description;
        assert!(d.contains("1.00") && d.contains("front"), "{d}");
        assert!(d.contains("Character I") && d.contains("Character II"));
        assert_eq!(
            d,
            "Character I stands at (0.00, 0.00) facing 0.00 degrees, head turned 0.00 rad and pitched 0.00 rad. \
             Character II stands at (1.00, 0.00) facing 180.00 degrees, head turned 0.00 rad and pitched 0.00 rad. \
             They are 1.00 m apart. \
             Character II is at Character I's 12:00 (front); Character I is at Character II's 12:00 (front)."
        );
        assert_eq!(ctx.round_index, 3);
        assert_eq!(ctx.upcoming_transcripts.len(), 3);
        let again = collect_context(&scene("x"), &snap, &words, 3, (0.0, 1.2), &skel).unwrap();
        assert_eq!(again, ctx);
    }

    fn ctx_with(words: Vec<TranscriptWord>, theta: f64, phi: f64) -> InteractionContext {
        InteractionContext {
            scene: scene("job interview"),
            prev_motion_description: "d".into(),
            upcoming_transcripts: words,
            round_index: 1,
            window: (0.0, 2.5),
            relative: RelativeSpatial::new(theta, phi, 1.0),
        }
    }

    #[test]
    fn stub_listener_gazes_at_speaker() {
        use CharacterId::*;
        let words = vec![word(I, "so", 0.1), word(I, "honestly", 0.5), word(II, "mm", 1.0)];
        let ctx = ctx_with(words, 0.0, 0.0);
        let p = predict_signals(&ctx, &RuleStub::default(), &mut Vec::new()).unwrap();
        let g = p.gaze.second.as_ref().expect("listener gazes");
        assert_eq!(g.trigger_word, "honestly");
        assert!((1.0..=1.8).contains(&g.duration_s));
        assert_eq!(g.target, GazeTarget::Partner);
        assert!(p.gaze.first.is_none());
        // partner behind the listener: no head turn
        let behind = ctx_with(ctx.upcoming_transcripts.clone(), 0.0, std::f64::consts::PI);
        let p = predict_signals(&behind, &RuleStub::default(), &mut Vec::new()).unwrap();
        assert!(p.gaze.second.is_none());
    }

    #[test]
    fn stub_nods_on_affirmation() {
        use CharacterId::*;
        let words = vec![word(II, "Yes,", 0.2), word(II, "exactly", 0.6)];
        let ctx = ctx_with(words, 0.0, 0.0);
        let p = predict_signals(&ctx, &RuleStub::default(), &mut Vec::new()).unwrap();
        let s = p.sync.unwrap();
        assert_eq!((s.kind, s.initiator, s.responder), (SyncKind::Meshing, II, I));
        assert_eq!(s.trigger_word, "yes");
    }

    #[test]
    fn live_replies_are_checked() {
        use CharacterId::*;
        let ctx = ctx_with(vec![word(I, "hello", 0.1)], 0.0, 0.0);
        let ok_spatial = r#"{"I":null,"II":null}"#;
        let ok_sync = r#"{"sync":null}"#;
        let long_gaze = r#"{"I":null,"II":{"target":"partner","duration_s":3.0,"trigger_word":"hello"}}"#;
        let port = ScriptedPort::new([ok_spatial, ok_sync, long_gaze, long_gaze, long_gaze]);
        let err = predict_signals(&ctx, &port, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, AgentError::Protocol { .. }), "{err:?}");

        let same = r#"{"sync":{"kind":"meshing","initiator":"I","responder":"I","trigger_word":"hello"}}"#;
        let port = ScriptedPort::new([ok_spatial, same, same, same]);
        let err = predict_signals(&ctx, &port, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, AgentError::Protocol { .. }));

        let absent = r#"{"I":null,"II":{"target":"partner","duration_s":1.0,"trigger_word":"goodbye"}}"#;
        let port = ScriptedPort::new([ok_spatial, ok_sync, absent, absent, absent]);
        let err = predict_signals(&ctx, &port, &mut Vec::new()).unwrap_err();
        assert_eq!(err, AgentError::TriggerWordNotFound("goodbye".into()));
    }

    fn gaze_prop() -> GazeSignal {
        GazeSignal {
            target: GazeTarget::Partner,
            duration_s: 1.0,
            trigger_word: "x".into(),
        }
    }

    #[test]
    fn integration_rules() {
        use CharacterId::*;
        let only_gaze = SignalProposals {
            gaze: PerCharacter::new(None, Some(gaze_prop())),
            ..Default::default()
        };
        let out = integrate_decisions(only_gaze, 0.2);
        assert_eq!(out.signals.second.gaze, Some(gaze_prop()));
        assert!(out.signals.first.is_empty() && out.notes.is_empty());

        assert!(integrate_decisions(SignalProposals::default(), 0.2).signals.is_empty());

        let clock = ClockDirection::new(11, 0).unwrap();
        let imitate_and_move = SignalProposals {
            spatial: PerCharacter::new(
                None,
                Some(SpatialSignal {
                    configuration: PositionalConfiguration::VisAVis,
                    partner_clock: Some(clock),
                    movement: [30.0, 40.0],
                }),
            ),
            sync: Some(SyncSignal {
                kind: SyncKind::Matching,
                initiator: I,
                responder: II,
                trigger_word: "x".into(),
            }),
            gaze: PerCharacter::new(None, Some(gaze_prop())),
        };
        let out = integrate_decisions(imitate_and_move, 0.2);
        let sp = out.signals.second.spatial.as_ref().unwrap();
        assert_eq!(sp.movement, [0.0, 0.0]);
        assert_eq!(sp.partner_clock, Some(clock));
        assert!(out.signals.second.sync.is_some() && out.signals.second.gaze.is_some());
        assert_eq!(out.notes.len(), 2);
        out.signals.validate().unwrap();
    }
}
