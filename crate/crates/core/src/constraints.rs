//! Compiles interaction signals into sampler constraints for one round.
//!
//! Constraints are expressed in segment coordinates: row `f` of every target
//! matrix is frame `f` of the `K`-frame segment being generated, and root
//! targets live in that segment's local frame (its anchor pose).

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{
    wrap_angle, yaw_pitch_to_exp_map, CharacterId, MotionError, MotionSegment, MotionState,
    SkeletonConfig, WorldPose,
};
use crate::proxemics::{clock_to_angle, displacement_to_world, ProxemicsError};
use crate::signals::{InteractionSignalSet, SyncKind, TranscriptWord};

/// Headings closer than half a clock minute count as unchanged.
const HEADING_RESOLUTION: f64 = PI / 720.0;
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("trigger word `{0}` not found in the round window")]
    TriggerWordNotFound(String),
    #[error("own and partner heads coincide")]
    DegeneratePositions,
    #[error("imitation requested but the initiator's motion is missing")]
    MissingSource,
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
}

impl From<ProxemicsError> for ConstraintError {
    fn from(e: ProxemicsError) -> Self {
        match e {
            ProxemicsError::DegeneratePositions => ConstraintError::DegeneratePositions,
            other => ConstraintError::InvalidConstraint(other.to_string()),
        }
    }
}

/// A failure tagged with the character and signal it came from.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{character} {signal} signal: {source}")]
pub struct CompileError {
    pub character: CharacterId,
    pub signal: &'static str,
    pub source: ConstraintError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintGroup {
    RootPosition,
    RootRotation,
    HeadRotation,
}

impl ConstraintGroup {
    pub const ALL: [ConstraintGroup; 3] = [
        ConstraintGroup::RootPosition,
        ConstraintGroup::RootRotation,
        ConstraintGroup::HeadRotation,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConstraint {
    pub group: ConstraintGroup,
    pub selector: Vec<usize>,
    #[serde(with = "crate::matrix_serde")]
    pub targets: Array2<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub mask: Array2<f64>,
}

impl TrajectoryConstraint {
    /// Checks shapes against a `frames x width` segment and that the mask
    /// is binary.
    pub fn validate(&self, frames: usize, width: usize) -> Result<(), ConstraintError> {
        let shape = (frames, self.selector.len());
        if self.targets.dim() != shape || self.mask.dim() != shape {
            return Err(ConstraintError::InvalidConstraint(format!(
                "{:?} constraint shapes {:?}/{:?} do not match {:?}",
                self.group,
                self.targets.dim(),
                self.mask.dim(),
                shape
            )));
        }
        if let Some(&c) = self.selector.iter().find(|&&c| c >= width) {
            return Err(MotionError::InvalidSelector { index: c, width }.into());
        }
        if self.mask.iter().any(|&w| w != 0.0 && w != 1.0) {
            return Err(ConstraintError::InvalidConstraint(
                "mask entries must be 0 or 1".into(),
            ));
        }
        if self.targets.iter().any(|v| !v.is_finite()) {
            return Err(ConstraintError::InvalidConstraint(
                "non-finite target".into(),
            ));
        }
        Ok(())
    }

    pub fn active_frames(&self) -> Vec<usize> {
        self.mask
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(_, r)| r.iter().any(|&w| w != 0.0))
            .map(|(f, _)| f)
            .collect()
    }
}

/// Replaces the clean-sample estimate with `target` on `channels` for
/// frames `start_frame..` during the early reverse steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConstraint {
    #[serde(with = "crate::matrix_serde")]
    pub target: Array2<f64>,
    pub channels: Vec<usize>,
    pub start_frame: usize,
    pub cutoff: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub trajectory: Vec<TrajectoryConstraint>,
    pub similarity: Option<SimilarityConstraint>,
    pub next_state: Option<MotionState>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty() && self.similarity.is_none() && self.next_state.is_none()
    }

    pub fn group(&self, g: ConstraintGroup) -> Option<&TrajectoryConstraint> {
        self.trajectory.iter().find(|c| c.group == g)
    }

    pub fn validate(&self, frames: usize, width: usize) -> Result<(), ConstraintError> {
        for (i, c) in self.trajectory.iter().enumerate() {
            c.validate(frames, width)?;
            if self.trajectory[..i].iter().any(|o| o.group == c.group) {
                return Err(ConstraintError::InvalidConstraint(format!(
                    "more than one {:?} constraint",
                    c.group
                )));
            }
        }
        let has_root = self.group(ConstraintGroup::RootPosition).is_some();
        if has_root != (self.next_state == Some(MotionState::Walk)) {
            return Err(ConstraintError::InvalidConstraint(
                "next_state must be walk exactly when a root_position constraint exists".into(),
            ));
        }
        if let Some(s) = &self.similarity {
            if s.target.dim() != (frames, width) {
                return Err(ConstraintError::InvalidConstraint(format!(
                    "similarity target shape {:?} does not match ({frames}, {width})",
                    s.target.dim()
                )));
            }
            if let Some(&c) = s.channels.iter().find(|&&c| c >= width) {
                return Err(MotionError::InvalidSelector { index: c, width }.into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodParams {
    pub amplitude_rad: f64,
    pub frequency_hz: f64,
    pub duration_s: f64,
}

impl Default for NodParams {
    fn default() -> Self {
        Self {
            amplitude_rad: 0.26,
            frequency_hz: 2.0,
            duration_s: 1.0,
        }
    }
}

/// Head position relative to the root, meters, by posture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadOffsets {
    pub standing: [f64; 3],
    pub seated: [f64; 3],
}

impl Default for HeadOffsets {
    fn default() -> Self {
        Self {
            standing: [0.0, 0.0, 1.6],
            seated: [0.0, 0.0, 1.2],
        }
    }
}

impl HeadOffsets {
    pub fn for_state(&self, state: MotionState) -> [f64; 3] {
        match state {
            MotionState::Sit => self.seated,
            MotionState::Stand | MotionState::Walk => self.standing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompilerConfig {
    pub nod: NodParams,
    pub head_offsets: HeadOffsets,
    pub similarity_cutoff: usize,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        Self {
            nod: NodParams::default(),
            head_offsets: HeadOffsets::default(),
            similarity_cutoff: 200,
        }
    }
}

/// Time layout of one round's segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTiming {
    /// Time of segment frame 0, seconds.
    pub segment_start_s: f64,
    /// Planned interval `[start, end)`, seconds.
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub frames: usize,
    pub fps: f64,
}

impl RoundTiming {
    pub fn frame_time(&self, f: usize) -> f64 {
        self.segment_start_s + f as f64 / self.fps
    }

    /// Nearest frame index for a time, clamped to `[0, frames]`.
    pub fn frame_at(&self, t: f64) -> usize {
        let f = ((t - self.segment_start_s) * self.fps).round();
        f.clamp(0.0, self.frames as f64) as usize
    }

    /// Segment frames inside the planned window.
    pub fn window_frames(&self) -> std::ops::Range<usize> {
        self.frame_at(self.window_start_s)..self.frame_at(self.window_end_s)
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.window_start_s - TIME_EPS && t < self.window_end_s
    }

    /// Window frames whose time lies in `[from, to]`.
    fn frames_between(&self, from: f64, to: f64) -> Vec<usize> {
        self.window_frames()
            .filter(|&f| {
                let t = self.frame_time(f);
                t >= from - TIME_EPS && t <= to + TIME_EPS
            })
            .collect()
    }
}

pub(crate) fn normalize_token(s: &str) -> String {
    s.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Start time of the first case-insensitive occurrence of `phrase` (one or
/// more words) whose first word starts inside the window.
pub fn resolve_word_timestamp(
    phrase: &str,
    words: &[TranscriptWord],
    window: (f64, f64),
) -> Result<f64, ConstraintError> {
    let wanted: Vec<String> = phrase.split_whitespace().map(normalize_token).collect();
    let not_found = || ConstraintError::TriggerWordNotFound(phrase.to_string());
    if wanted.is_empty() || wanted.iter().all(String::is_empty) {
        return Err(not_found());
    }
    let mut ordered: Vec<&TranscriptWord> = words.iter().collect();
    ordered.sort_by(|a, b| a.start.total_cmp(&b.start));
    let hit = ordered.windows(wanted.len()).find(|run| {
        let t = run[0].start;
        t >= window.0 - TIME_EPS
            && t < window.1
            && run.iter().zip(&wanted).all(|(w, p)| normalize_token(&w.word) == *p)
    });
    hit.map(|run| run[0].start).ok_or_else(not_found)
}

/// Nod pitch offset `dt` seconds after onset; zero outside the nod.
pub fn nod_pitch(params: &NodParams, dt: f64) -> f64 {
    if dt < -TIME_EPS || dt > params.duration_s + TIME_EPS {
        return 0.0;
    }
    params.amplitude_rad * (2.0 * PI * params.frequency_hz * dt).sin()
}

fn head_channels(skeleton: &SkeletonConfig) -> Result<Vec<usize>, ConstraintError> {
    Ok(skeleton.head_rotation_channels()?.to_vec())
}

/// Pitch-only head constraint for a nod starting at `onset`, truncated at
/// the window end.
pub fn nod_trajectory(
    onset: f64,
    params: &NodParams,
    timing: &RoundTiming,
    skeleton: &SkeletonConfig,
) -> Result<TrajectoryConstraint, ConstraintError> {
    if !timing.contains_time(onset) {
        return Err(ConstraintError::InvalidConstraint(format!(
            "nod onset {onset} s outside the round window"
        )));
    }
    let selector = head_channels(skeleton)?;
    let mut targets = Array2::zeros((timing.frames, 3));
    let mut mask = Array2::zeros((timing.frames, 3));
    for f in timing.frames_between(onset, onset + params.duration_s) {
        targets[[f, 1]] = nod_pitch(params, timing.frame_time(f) - onset);
        mask[[f, 1]] = 1.0;
    }
    Ok(TrajectoryConstraint {
        group: ConstraintGroup::HeadRotation,
        selector,
        targets,
        mask,
    })
}

/// Head yaw (relative to own facing) and pitch needed to face the
/// partner's head. Positive pitch looks down.
pub fn gaze_angles(
    own: &WorldPose,
    own_head: [f64; 3],
    partner: &WorldPose,
    partner_head: [f64; 3],
) -> Result<(f64, f64), ConstraintError> {
    let a = own.local_to_world([own_head[0], own_head[1]]);
    let b = partner.local_to_world([partner_head[0], partner_head[1]]);
    let (dx, dy, dz) = (b[0] - a[0], b[1] - a[1], partner_head[2] - own_head[2]);
    let horizontal = dx.hypot(dy);
    if horizontal < 1e-12 {
        return Err(ConstraintError::DegeneratePositions);
    }
    let yaw = wrap_angle(dy.atan2(dx) - own.heading);
    let pitch = -dz.atan2(horizontal);
    Ok((yaw, pitch))
}

#[allow(clippy::too_many_arguments)]
pub fn gaze_trajectory(
    own: &WorldPose,
    own_state: MotionState,
    partner: &WorldPose,
    partner_state: MotionState,
    onset: f64,
    duration: f64,
    timing: &RoundTiming,
    skeleton: &SkeletonConfig,
    offsets: &HeadOffsets,
) -> Result<TrajectoryConstraint, ConstraintError> {
    if !(duration > 0.0) {
        return Err(ConstraintError::InvalidConstraint(format!(
            "gaze duration {duration} must be positive"
        )));
    }
    let (yaw, pitch) = gaze_angles(
        own,
        offsets.for_state(own_state),
        partner,
        offsets.for_state(partner_state),
    )?;
    let selector = head_channels(skeleton)?;
    let target = yaw_pitch_to_exp_map(yaw, pitch);
    let mut targets = Array2::zeros((timing.frames, 3));
    let mut mask = Array2::zeros((timing.frames, 3));
    for f in timing.frames_between(onset, onset + duration) {
        for c in 0..3 {
            targets[[f, c]] = target[c];
            mask[[f, c]] = 1.0;
        }
    }
    Ok(TrajectoryConstraint {
        group: ConstraintGroup::HeadRotation,
        selector,
        targets,
        mask,
    })
}

/// Gaze and nod on one head constraint. Overlapping frames add the nod to
/// the gaze pitch; nod-only frames constrain pitch alone.
fn merge_gaze_and_nod(
    gaze: (f64, f64),
    gaze_frames: &[usize],
    nod: &TrajectoryConstraint,
    timing: &RoundTiming,
    selector: Vec<usize>,
) -> TrajectoryConstraint {
    let mut targets = nod.targets.clone();
    let mut mask = nod.mask.clone();
    for &f in gaze_frames {
        let extra = if nod.mask[[f, 1]] != 0.0 { nod.targets[[f, 1]] } else { 0.0 };
        let v = yaw_pitch_to_exp_map(gaze.0, gaze.1 + extra);
        for c in 0..3 {
            targets[[f, c]] = v[c];
            mask[[f, c]] = 1.0;
        }
    }
    debug_assert_eq!(targets.nrows(), timing.frames);
    TrajectoryConstraint {
        group: ConstraintGroup::HeadRotation,
        selector,
        targets,
        mask,
    }
}

/// Planned root path over `frames` samples, linear from `current`.
#[derive(Debug, Clone, PartialEq)]
pub struct RootPath {
    pub positions: Vec<[f64; 2]>,
    /// Unwrapped headings: consecutive samples never jump by `2 pi`.
    pub headings: Vec<f64>,
}

/// Linear interpolation from `current` to `current + delta`, heading
/// turned along the shorter arc.
pub fn root_targets(
    current: &WorldPose,
    delta: [f64; 2],
    delta_heading: f64,
    frames: usize,
) -> Result<RootPath, ConstraintError> {
    if frames < 2 {
        return Err(ConstraintError::InvalidConstraint(format!(
            "root path needs at least 2 frames, got {frames}"
        )));
    }
    let turn = wrap_angle(delta_heading);
    let last = (frames - 1) as f64;
    let (positions, headings) = (0..frames)
        .map(|k| {
            let s = k as f64 / last;
            (
                [
                    current.position[0] + s * delta[0],
                    current.position[1] + s * delta[1],
                ],
                current.heading + s * turn,
            )
        })
        .unzip();
    Ok(RootPath {
        positions,
        headings,
    })
}

/// Builds the similarity target for a responder imitating `initiator`.
///
/// Upper-body channels are the initiator's, delayed so that what the
/// initiator does at the window start happens at `onset`. Every other
/// channel holds the responder's `tail` frame.
pub fn imitation_constraint(
    initiator: Option<&MotionSegment>,
    tail: &[f64],
    onset: f64,
    timing: &RoundTiming,
    skeleton: &SkeletonConfig,
    cutoff: usize,
) -> Result<SimilarityConstraint, ConstraintError> {
    let source = initiator.ok_or(ConstraintError::MissingSource)?;
    let width = skeleton.width();
    if source.len() != timing.frames || source.width() != width || tail.len() != width {
        return Err(ConstraintError::MissingSource);
    }
    let channels = skeleton.group(crate::motion::UPPER_BODY)?.to_vec();
    let start = timing.window_frames().start;
    let onset_frame = timing.frame_at(onset).max(start).min(timing.frames);
    let shift = onset_frame - start;
    let frames = source.frames();
    let mut target = Array2::zeros((timing.frames, width));
    for (f, mut row) in target.rows_mut().into_iter().enumerate() {
        row.assign(&ndarray::ArrayView1::from(tail));
        if f >= onset_frame {
            for &c in &channels {
                row[c] = frames[[f - shift, c]];
            }
        }
    }
    Ok(SimilarityConstraint {
        target,
        channels,
        start_frame: onset_frame,
        cutoff,
    })
}

/// Per-character inputs to [`compile`].
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterRoundState {
    /// World pose at the window start.
    pub pose: WorldPose,
    /// Local frame of the segment being generated.
    pub anchor: WorldPose,
    /// Heading channel value at the window start, in segment coordinates.
    pub heading_channel: f64,
    pub posture: MotionState,
    /// Last frame of the previous segment, rebased to `anchor`.
    pub tail: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CompileContext<'a> {
    pub states: [CharacterRoundState; 2],
    pub words: &'a [TranscriptWord],
    pub timing: RoundTiming,
    pub skeleton: &'a SkeletonConfig,
    pub config: &'a CompilerConfig,
}

fn tag(character: CharacterId, signal: &'static str) -> impl Fn(ConstraintError) -> CompileError {
    move |source| CompileError {
        character,
        signal,
        source,
    }
}

/// Characters in sampling order: an imitation initiator goes first so its
/// motion exists before the responder's target is built.
pub fn sampling_order(signals: &InteractionSignalSet) -> [CharacterId; 2] {
    match signals.imitation_initiator() {
        Some(CharacterId::II) => [CharacterId::II, CharacterId::I],
        _ => [CharacterId::I, CharacterId::II],
    }
}

/// Compiles one character's signals. `initiator_segment` is the current
/// round's motion of the imitated partner, when there is one.
pub fn compile_character(
    signals: &InteractionSignalSet,
    who: CharacterId,
    ctx: &CompileContext<'_>,
    initiator_segment: Option<&MotionSegment>,
) -> Result<ConstraintSet, CompileError> {
    let mine = signals.get(who);
    let me = &ctx.states[who.index()];
    let partner = &ctx.states[who.partner().index()];
    let timing = &ctx.timing;
    let window = (timing.window_start_s, timing.window_end_s);
    let skel = ctx.skeleton;
    let mut set = ConstraintSet::default();

    if let Some(sp) = &mine.spatial {
        let t = tag(who, "spatial");
        let delta = displacement_to_world(me.pose.heading, sp.movement[0], sp.movement_m())
            .map_err(|e| t(e.into()))?;
        let turn = match sp.partner_clock {
            Some(clock) => {
                let moved = [me.pose.position[0] + delta[0], me.pose.position[1] + delta[1]];
                let dx = partner.pose.position[0] - moved[0];
                let dy = partner.pose.position[1] - moved[1];
                if dx.hypot(dy) < 1e-12 {
                    return Err(t(ConstraintError::DegeneratePositions));
                }
                let heading = dy.atan2(dx) - clock_to_angle(clock);
                let turn = wrap_angle(heading - me.pose.heading);
                if turn.abs() <= HEADING_RESOLUTION {
                    0.0
                } else {
                    turn
                }
            }
            None => 0.0,
        };
        let frames = timing.window_frames();
        let n = frames.len();
        let path = root_targets(&me.pose, delta, turn, n).map_err(&t)?;
        if sp.movement_m() > 0.0 {
            let p = skel.root_position_channels().map_err(|e| t(e.into()))?;
            let mut targets = Array2::zeros((timing.frames, 2));
            let mut mask = Array2::zeros((timing.frames, 2));
            for (k, f) in frames.clone().enumerate() {
                let local = me.anchor.world_to_local(path.positions[k]);
                targets[[f, 0]] = local[0];
                targets[[f, 1]] = local[1];
                mask[[f, 0]] = 1.0;
                mask[[f, 1]] = 1.0;
            }
            set.trajectory.push(TrajectoryConstraint {
                group: ConstraintGroup::RootPosition,
                selector: vec![p[0], p[1]],
                targets,
                mask,
            });
            set.next_state = Some(MotionState::Walk);
        }
        if turn != 0.0 {
            let h = skel.heading_channel().map_err(|e| t(e.into()))?;
            let mut targets = Array2::zeros((timing.frames, 1));
            let mut mask = Array2::zeros((timing.frames, 1));
            for (k, f) in frames.enumerate() {
                targets[[f, 0]] = me.heading_channel + (path.headings[k] - me.pose.heading);
                mask[[f, 0]] = 1.0;
            }
            set.trajectory.push(TrajectoryConstraint {
                group: ConstraintGroup::RootRotation,
                selector: vec![h],
                targets,
                mask,
            });
        }
    }

    let nod = match &mine.sync {
        Some(sync) if sync.kind == SyncKind::Meshing => {
            let t = tag(who, "sync");
            let onset = resolve_word_timestamp(&sync.trigger_word, ctx.words, window).map_err(&t)?;
            Some(nod_trajectory(onset, &ctx.config.nod, timing, skel).map_err(&t)?)
        }
        _ => None,
    };

    let head = match (&mine.gaze, nod) {
        (Some(g), nod) => {
            let t = tag(who, "gaze");
            let onset = resolve_word_timestamp(&g.trigger_word, ctx.words, window).map_err(&t)?;
            let gaze = gaze_trajectory(
                &me.pose,
                me.posture,
                &partner.pose,
                partner.posture,
                onset,
                g.duration_s,
                timing,
                skel,
                &ctx.config.head_offsets,
            )
            .map_err(&t)?;
            match nod {
                None => Some(gaze),
                Some(nod) => {
                    let offsets = &ctx.config.head_offsets;
                    let angles = gaze_angles(
                        &me.pose,
                        offsets.for_state(me.posture),
                        &partner.pose,
                        offsets.for_state(partner.posture),
                    )
                    .map_err(&t)?;
                    let frames = gaze.active_frames();
                    Some(merge_gaze_and_nod(angles, &frames, &nod, timing, gaze.selector))
                }
            }
        }
        (None, nod) => nod,
    };
    if let Some(h) = head {
        set.trajectory.push(h);
    }

    if let Some(sync) = &mine.sync {
        if sync.kind == SyncKind::Matching {
            let t = tag(who, "sync");
            let onset = resolve_word_timestamp(&sync.trigger_word, ctx.words, window).map_err(&t)?;
            let sim = imitation_constraint(
                initiator_segment,
                &me.tail,
                onset,
                timing,
                skel,
                ctx.config.similarity_cutoff,
            )
            .map_err(&t)?;
            set.similarity = Some(sim);
        }
    }

    set.trajectory.sort_by_key(|c| c.group);
    Ok(set)
}

/// Compiles both characters in sampling order. The responder of an
/// imitation needs the initiator's segment, so callers that sample between
/// the two steps should use [`compile_character`] directly.
pub fn compile(
    signals: &InteractionSignalSet,
    ctx: &CompileContext<'_>,
    initiator_segment: Option<&MotionSegment>,
) -> Result<[ConstraintSet; 2], CompileError> {
    let a = compile_character(signals, CharacterId::I, ctx, initiator_segment)?;
    let b = compile_character(signals, CharacterId::II, ctx, initiator_segment)?;
    Ok([a, b])
}

/// Masked residual view used by the loss and by tests.
pub fn masked_residual(
    c: &TrajectoryConstraint,
    frames: ArrayView2<'_, f64>,
) -> Result<Array2<f64>, ConstraintError> {
    let picked = crate::motion::extract(frames, &c.selector)?;
    Ok((&picked - &c.targets) * &c.mask)
}
