use std::collections::BTreeMap;

use ndarray::s;
use serde::{Deserialize, Serialize};

use super::director::{
    analyze_dialogue, collect_context, integrate_decisions, plan_scene, predict_signals,
    RoundSnapshot,
};
use super::port::LlmPort;
use super::AgentError;
use crate::config::EngineConfig;
use crate::constraints::{
    compile_character, sampling_order, CharacterRoundState, CompileContext, ConstraintSet, RoundTiming,
};
use crate::diffusion::{sample_segment, Conditions, Denoiser, SampleRequest};
use crate::motion::{
    rebase, to_world, world_pose_at, wrap_angle, CharacterId, MotionSegment, PerCharacter, WorldPose,
};
use crate::signals::{InteractionSignalSet, TranscriptWord};
use crate::trace::{
    CharacterRoundSummary, MotionTrace, RoundDecision, RoundFrames, TraceHeader, TraceRound,
    TRACE_FORMAT, TRACE_VERSION,
};

/// Word-level transcript plus optional free-form scene hints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub words: Vec<TranscriptWord>,
    pub hints: BTreeMap<String, String>,
}

impl Transcript {
    pub fn duration_s(&self) -> f64 {
        self.words.iter().map(|w| w.end).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Overrides the round count derived from the transcript length.
    pub rounds: Option<usize>,
}

/// Rounds needed to cover `duration_s`: one full window, then one round
/// per hop for the remainder.
pub fn round_count(duration_s: f64, fps: f64, window: usize, hop: usize) -> usize {
    let frames = (duration_s * fps - 1e-9).ceil().max(0.0) as usize;
    if frames <= window {
        1
    } else {
        (frames - window).div_ceil(hop) + 1
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent sampler seed per round and character.
fn segment_seed(seed: u64, round: usize, who: CharacterId) -> u64 {
    splitmix64(seed ^ splitmix64((round as u64) << 1 | who.index() as u64))
}

/// Per-frame speaking indicator for one character.
fn speech_activity(words: &[TranscriptWord], who: CharacterId, timing: &RoundTiming) -> Vec<f64> {
    (0..timing.frames)
        .map(|f| {
            let t = timing.frame_time(f);
            let speaking = words.iter().any(|w| w.speaker == who && w.start <= t && t < w.end);
            if speaking {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

struct Prev {
    local: PerCharacter<MotionSegment>,
    anchors: PerCharacter<WorldPose>,
}

/// Runs the full round loop and returns the stitched trace.
///
/// Round 0 samples both characters from the scene plan alone. Each later
/// round continues from the previous segment's hop frame: the overlap is
/// inpainted, the director plans the new frames, and the compiled
/// constraints guide sampling. Errors carry the round index.
pub fn run_dialogue(
    transcript: &Transcript,
    config: &EngineConfig,
    port: &dyn LlmPort,
    denoiser: &dyn Denoiser,
    options: &RunOptions,
) -> Result<MotionTrace, AgentError> {
    config
        .validate()
        .map_err(|e| AgentError::Precondition(e.to_string()))?;
    let duration = transcript.duration_s();
    if transcript.words.is_empty() || duration <= 0.0 {
        return Err(AgentError::Precondition("transcript has zero length".into()));
    }
    let skel = &config.skeleton;
    let fps = skel.fps;
    let window = config.diffusion.window;
    let hop = config.diffusion.hop;
    let overlap = window - hop;
    let rounds = match options.rounds {
        Some(0) => return Err(AgentError::Precondition("round count must be at least 1".into())),
        Some(n) => n,
        None => round_count(duration, fps, window, hop),
    };
    let schedule = config.schedule()?;
    let compiler = config.compiler();
    let words = &transcript.words;

    let mut opening_calls = Vec::new();
    let scene = analyze_dialogue(words, &transcript.hints, port, &mut opening_calls)?;
    let setup = plan_scene(&scene, port, &mut opening_calls)?;
    let postures = setup.states;

    let mut trace_rounds = Vec::with_capacity(rounds);
    let mut decisions = Vec::with_capacity(rounds);
    let mut prev: Option<Prev> = None;
    let mut next_start = 0;
    // Unwrapped world heading of each character's current anchor, so the
    // heading channel stays continuous across rounds instead of jumping by 2pi.
    let mut unwrapped: PerCharacter<Option<(WorldPose, f64)>> = PerCharacter::new(None, None);
    let heading = skel.heading_channel()?;

    for r in 0..rounds {
        let body = || -> Result<(Prev, RoundDecision), AgentError> {
            let segment_start_s = (r * hop) as f64 / fps;
            let mut port_calls = Vec::new();
            let mut notes = Vec::new();
            let mut window_s = None;
            let mut signals: Option<InteractionSignalSet> = None;
            let timing;
            let anchors;
            let mut tails: PerCharacter<Option<ndarray::Array2<f64>>> = PerCharacter::new(None, None);
            let mut states = None;

            match &prev {
                None => {
                    port_calls.append(&mut opening_calls.clone());
                    anchors = setup.poses;
                    timing = RoundTiming {
                        segment_start_s,
                        window_start_s: segment_start_s,
                        window_end_s: segment_start_s + window as f64 / fps,
                        frames: window,
                        fps,
                    };
                }
                Some(p) => {
                    let h = skel.heading_channel()?;
                    let mut round_states = Vec::new();
                    let mut new_anchors = Vec::new();
                    for who in CharacterId::BOTH {
                        let seg = p.local.get(who);
                        let old = p.anchors.get(who);
                        let anchor = world_pose_at(seg, hop, old, skel)?;
                        let rebased = rebase(seg, old, &anchor, skel)?;
                        let last = rebased.frame(window - 1);
                        *tails.get_mut(who) = Some(rebased.frames().slice(s![hop.., ..]).to_owned());
                        round_states.push(CharacterRoundState {
                            pose: world_pose_at(seg, window - 1, old, skel)?,
                            anchor,
                            heading_channel: last.values()[h],
                            posture: *postures.get(who),
                            tail: last.values().to_vec(),
                        });
                        new_anchors.push(anchor);
                    }
                    anchors = PerCharacter::new(new_anchors[0], new_anchors[1]);
                    let world_prev = PerCharacter::new(
                        to_world(&p.local.first, &p.anchors.first, skel)?,
                        to_world(&p.local.second, &p.anchors.second, skel)?,
                    );
                    let planned = (
                        segment_start_s + overlap as f64 / fps,
                        segment_start_s + window as f64 / fps,
                    );
                    timing = RoundTiming {
                        segment_start_s,
                        window_start_s: planned.0,
                        window_end_s: planned.1,
                        frames: window,
                        fps,
                    };
                    let snapshot = RoundSnapshot {
                        segments: world_prev.as_ref(),
                        poses: PerCharacter::new(round_states[0].pose, round_states[1].pose),
                        states: postures,
                    };
                    let ctx = collect_context(&scene, &snapshot, words, r, planned, skel)?;
                    let proposals = predict_signals(&ctx, port, &mut port_calls)?;
                    let merged =
                        integrate_decisions(proposals, config.integration.imitation_move_limit_m);
                    notes = merged.notes;
                    signals = Some(merged.signals);
                    window_s = Some(planned);
                    let second = round_states.pop().expect("two states");
                    let first = round_states.pop().expect("two states");
                    states = Some([first, second]);
                }
            }

            let empty = InteractionSignalSet::default();
            let round_signals = signals.as_ref().unwrap_or(&empty);
            let order = sampling_order(round_signals);
            let mut sampled: PerCharacter<Option<MotionSegment>> = PerCharacter::new(None, None);
            let mut summaries: PerCharacter<Option<CharacterRoundSummary>> = PerCharacter::new(None, None);
            for who in order {
                let constraints = match &states {
                    None => ConstraintSet::default(),
                    Some(states) => {
                        let cctx = CompileContext {
                            states: states.clone(),
                            words,
                            timing,
                            skeleton: skel,
                            config: &compiler,
                        };
                        let partner = who.partner();
                        let initiator = match round_signals.get(who).sync {
                            Some(ref s) if s.initiator == partner => sampled.get(partner).as_ref(),
                            _ => None,
                        };
                        compile_character(round_signals, who, &cctx, initiator)?
                    }
                };
                let state = constraints.next_state.unwrap_or(*postures.get(who));
                let conditions = Conditions {
                    self_speech: Some(speech_activity(words, who, &timing)),
                    partner_speech: Some(speech_activity(words, who.partner(), &timing)),
                    ..Conditions::new(state)
                };
                let seed = segment_seed(options.seed, r, who);
                let tail = tails.get(who).as_ref();
                let request = SampleRequest {
                    conditions: &conditions,
                    constraints: &constraints,
                    prev_tail: tail.map(|t| t.view()),
                    frames: window,
                    width: skel.width(),
                    seed,
                };
                let x = sample_segment(denoiser, &request, &config.guidance, &schedule)?;
                *sampled.get_mut(who) = Some(MotionSegment::new(x, who, r)?);
                *summaries.get_mut(who) = Some(CharacterRoundSummary {
                    state,
                    constraint_groups: constraints.trajectory.iter().map(|c| c.group).collect(),
                    similarity: constraints.similarity.is_some(),
                    seed,
                });
            }
            let local = sampled.map(|s| s.expect("both characters sampled"));
            let decision = RoundDecision {
                round_index: r,
                segment_start_s,
                window: window_s,
                port_calls,
                signals,
                notes,
                characters: summaries.map(|s| s.expect("both characters summarized")),
            };
            Ok((Prev { local, anchors }, decision))
        };
        let (current, decision) = body().map_err(|e| AgentError::Round {
            round: r,
            source: Box::new(e),
        })?;
        let keep = if r + 1 == rounds { window } else { hop };
        for who in CharacterId::BOTH {
            let anchor = *current.anchors.get(who);
            let offset = match *unwrapped.get(who) {
                None => anchor.heading,
                Some((prev_anchor, prev_offset)) => prev_offset + wrap_angle(anchor.heading - prev_anchor.heading),
            };
            *unwrapped.get_mut(who) = Some((anchor, offset));
        }
        let world = |who: CharacterId| -> Result<ndarray::Array2<f64>, AgentError> {
            let (anchor, offset) = unwrapped.get(who).expect("offset set above");
            let w = to_world(current.local.get(who), &anchor, skel)?;
            let mut frames = w.frames().slice(s![..keep, ..]).to_owned();
            frames.column_mut(heading).mapv_inplace(|x| x + offset);
            Ok(frames)
        };
        trace_rounds.push(TraceRound {
            round_index: r,
            start_frame: next_start,
            frames: RoundFrames {
                first: world(CharacterId::I)?,
                second: world(CharacterId::II)?,
            },
        });
        next_start += keep;
        decisions.push(decision);
        prev = Some(current);
    }

    let trace = MotionTrace {
        header: TraceHeader {
            format: TRACE_FORMAT.to_string(),
            version: TRACE_VERSION,
            skeleton: skel.clone(),
            fps,
            characters: CharacterId::BOTH,
            window,
            hop,
            seed: options.seed,
        },
        scene: Some(scene),
        setup: Some(setup),
        rounds: trace_rounds,
        decisions,
    };
    debug_assert!(trace.validate().is_ok());
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::RuleStub;

    #[test]
    fn round_counts() {
        assert_eq!(round_count(10.0, 30.0, 150, 75), 3);
        assert_eq!(round_count(5.0, 30.0, 150, 75), 1);
        assert_eq!(round_count(5.1, 30.0, 150, 75), 2);
        assert_eq!(round_count(12.5, 30.0, 150, 75), 4);
        assert_eq!(round_count(0.5, 30.0, 150, 75), 1);
    }

    #[test]
    fn seeds_differ_per_segment() {
        let a = segment_seed(7, 0, CharacterId::I);
        assert_ne!(a, segment_seed(7, 0, CharacterId::II));
        assert_ne!(a, segment_seed(7, 1, CharacterId::I));
        assert_ne!(a, segment_seed(8, 0, CharacterId::I));
    }

    fn short_transcript() -> Transcript {
        let w = |s, word: &str, start: f64| TranscriptWord {
            speaker: s,
            word: word.into(),
            start,
            end: start + 0.4,
        };
        use CharacterId::*;
        Transcript {
            words: vec![
                w(I, "Tell", 0.2),
                w(I, "me", 0.7),
                w(I, "about", 1.2),
                w(I, "yourself", 1.7),
                w(II, "Certainly", 5.2),
                w(II, "yes", 5.9),
                w(I, "wonderful", 6.4),
            ],
            hints: BTreeMap::from([("relationship".into(), "job interview".into())]),
        }
    }

    fn small_config() -> EngineConfig {
        let mut c = EngineConfig::default();
        c.guidance.ddim_steps = 20;
        c
    }

    #[test]
    fn stub_run_is_deterministic_and_contiguous() {
        let cfg = small_config();
        let den = cfg.reference_denoiser().unwrap();
        let t = short_transcript();
        let opts = RunOptions { seed: 3, rounds: None };
        let a = run_dialogue(&t, &cfg, &RuleStub::default(), &den, &opts).unwrap();
        let b = run_dialogue(&t, &cfg, &RuleStub::default(), &den, &opts).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.rounds.len(), 2);
        assert_eq!(a.decisions.len(), 2);
        assert_eq!(a.total_frames(), 75 + 150);
        assert!(a.decisions[0].window.is_none());
        assert_eq!(a.decisions[1].window, Some((5.0, 7.5)));
        // the director ran every predictor in round 1
        assert_eq!(a.decisions[1].port_calls.len(), 3);
        assert!(a.rounds.iter().all(|r| r.frames.first.iter().all(|v| v.is_finite())));
        let c = run_dialogue(&t, &cfg, &RuleStub::default(), &den, &RunOptions { seed: 4, rounds: None }).unwrap();
        assert_ne!(a.rounds, c.rounds);
    }

    #[test]
    fn rejects_empty_and_reports_round() {
        let cfg = small_config();
        let den = cfg.reference_denoiser().unwrap();
        let err = run_dialogue(&Transcript::default(), &cfg, &RuleStub::default(), &den, &RunOptions::default());
        assert!(matches!(err, Err(AgentError::Precondition(_))));

        // replies run out after the opening calls, so round 1 fails
        let port = crate::agent::ScriptedPort::new([
            r#"{"scenario":"s","relationship":"r","emotion":"e","character_settings":{"I":"a","II":"b"}}"#,
            r#"{"configuration":"vis_a_vis","distance_category":"social","ii_seen_from_i":{"hour":12,"minute":0},
                "i_seen_from_ii":{"hour":12,"minute":0},"distance_m":1.0,"postures":{"I":"stand","II":"stand"}}"#,
        ]);
        let err = run_dialogue(&short_transcript(), &cfg, &port, &den, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, AgentError::Round { round: 1, .. }), "{err:?}");
    }
}
