//! Pose and segment representation shared by every other module.
//!
//! A frame is a flat vector of `J * Q + G` channels: `J` joints encoded as
//! exponential-map rotation vectors (`Q = 3`), followed by the root block
//! (`G = 6`: absolute position, then per-frame velocity). Joint 0 is the root
//! joint, so its three rotation channels double as the root orientation.
//!
//! World convention: right-handed, `+Z` vertical, `+X` forward at heading 0,
//! headings counterclockwise-positive. Planar (proxemic) math only uses the
//! horizontal `x, y` projection.
//!
//! Head orientation is decomposed as `R = Rz(yaw) * Ry(pitch) * Rx(roll)`
//! (yaw first, then pitch); roll is discarded. Positive pitch tilts the
//! forward axis downward.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Rotation3, Vector3};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROOT_POSITION: &str = "root_position";
pub const ROOT_VELOCITY: &str = "root_velocity";
pub const ROOT_ROTATION: &str = "root_rotation";
pub const HEAD_ROTATION: &str = "head_rotation";
pub const UPPER_BODY: &str = "upper_body";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("channel index {index} out of range for frame width {width}")]
    InvalidSelector { index: usize, width: usize },
    #[error("segment has {frames} frames, at least {required} required")]
    TooShort { frames: usize, required: usize },
    #[error("skeleton has no channel group named `{0}`")]
    MissingGroup(String),
    #[error("frame width {found} does not match skeleton width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("motion data contains non-finite values")]
    NonFinite,
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    // rem_euclid maps -pi to +pi already; guard the float edge at exactly -pi.
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CharacterId {
    I,
    II,
}

impl CharacterId {
    pub const BOTH: [CharacterId; 2] = [CharacterId::I, CharacterId::II];

    pub fn partner(self) -> CharacterId {
        match self {
            CharacterId::I => CharacterId::II,
            CharacterId::II => CharacterId::I,
        }
    }

    pub fn index(self) -> usize {
        match self {
            CharacterId::I => 0,
            CharacterId::II => 1,
        }
    }
}

impl fmt::Display for CharacterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CharacterId::I => f.write_str("I"),
            CharacterId::II => f.write_str("II"),
        }
    }
}

/// One value per character, written as `{"I": .., "II": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerCharacter<T> {
    #[serde(rename = "I")]
    pub first: T,
    #[serde(rename = "II")]
    pub second: T,
}

impl<T> PerCharacter<T> {
    pub fn new(first: T, second: T) -> Self {
        Self { first, second }
    }

    pub fn from_fn(mut f: impl FnMut(CharacterId) -> T) -> Self {
        Self {
            first: f(CharacterId::I),
            second: f(CharacterId::II),
        }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(CharacterId) -> Result<T, E>) -> Result<Self, E> {
        Ok(Self {
            first: f(CharacterId::I)?,
            second: f(CharacterId::II)?,
        })
    }

    pub fn get(&self, who: CharacterId) -> &T {
        match who {
            CharacterId::I => &self.first,
            CharacterId::II => &self.second,
        }
    }

    pub fn get_mut(&mut self, who: CharacterId) -> &mut T {
        match who {
            CharacterId::I => &mut self.first,
            CharacterId::II => &mut self.second,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> PerCharacter<U> {
        PerCharacter {
            first: f(self.first),
            second: f(self.second),
        }
    }

    pub fn as_ref(&self) -> PerCharacter<&T> {
        PerCharacter {
            first: &self.first,
            second: &self.second,
        }
    }

    pub fn into_array(self) -> [T; 2] {
        [self.first, self.second]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionState {
    Stand,
    Walk,
    Sit,
}

impl fmt::Display for MotionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionState::Stand => "stand",
            MotionState::Walk => "walk",
            MotionState::Sit => "sit",
        })
    }
}

/// Horizontal position (meters) and heading (radians, wrapped to `(-pi, pi]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPose {
    pub position: [f64; 2],
    pub heading: f64,
}

impl WorldPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: [x, y],
            heading: wrap_angle(heading),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Unit forward vector in the world plane.
    pub fn forward(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    /// Maps a point given in this pose's local frame to world coordinates.
    pub fn local_to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [
            self.position[0] + c * p[0] - s * p[1],
            self.position[1] + s * p[0] + c * p[1],
        ]
    }

    /// Inverse of [`WorldPose::local_to_world`].
    pub fn world_to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        let dx = p[0] - self.position[0];
        let dy = p[1] - self.position[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonConfig {
    pub joint_names: Vec<String>,
    /// Parent index per joint; `None` only for the root (joint 0). Written
    /// as `-1` in files, since TOML has no null.
    #[serde(with = "parent_indices")]
    pub parents: Vec<Option<usize>>,
    /// Rest offsets from the parent joint, meters. Used for BVH export.
    pub offsets: Vec<[f64; 3]>,
    pub joint_dim: usize,
    pub root_dim: usize,
    pub fps: f64,
    pub groups: BTreeMap<String, Vec<usize>>,
}

mod parent_indices {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(parents: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(parents.iter().map(|p| p.map_or(-1, |i| i as i64)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        Vec::<i64>::deserialize(d)?
            .into_iter()
            .map(|p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(D::Error::custom(format!("invalid parent index {p}"))),
            })
            .collect()
    }
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl SkeletonConfig {
    /// Eight-joint upper-body rig used by the reference pipeline and tests.
    pub fn reference() -> Self {
        let joints: [(&str, Option<usize>, [f64; 3]); 8] = [
            ("hips", None, [0.0, 0.0, 0.0]),
            ("spine", Some(0), [0.0, 0.0, 0.25]),
            ("neck", Some(1), [0.0, 0.0, 0.35]),
            ("head", Some(2), [0.0, 0.0, 0.12]),
            ("l_shoulder", Some(1), [0.0, 0.18, 0.30]),
            ("l_elbow", Some(4), [0.0, 0.28, 0.0]),
            ("r_shoulder", Some(1), [0.0, -0.18, 0.30]),
            ("r_elbow", Some(6), [0.0, -0.28, 0.0]),
        ];
        let joint_count = joints.len();
        let q = 3;
        let root_base = joint_count * q;
        let mut groups = BTreeMap::new();
        groups.insert(ROOT_ROTATION.to_string(), vec![0, 1, 2]);
        groups.insert(HEAD_ROTATION.to_string(), vec![9, 10, 11]);
        groups.insert(UPPER_BODY.to_string(), (q..root_base).collect());
        groups.insert(
            ROOT_POSITION.to_string(),
            (root_base..root_base + 3).collect(),
        );
        groups.insert(
            ROOT_VELOCITY.to_string(),
            (root_base + 3..root_base + 6).collect(),
        );
        Self {
            joint_names: joints.iter().map(|j| j.0.to_string()).collect(),
            parents: joints.iter().map(|j| j.1).collect(),
            offsets: joints.iter().map(|j| j.2).collect(),
            joint_dim: q,
            root_dim: 6,
            fps: 30.0,
            groups,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn width(&self) -> usize {
        self.joint_count() * self.joint_dim + self.root_dim
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        let width = self.width();
        if self.joint_count() == 0 {
            return Err(MotionError::InvalidSkeleton("no joints".into()));
        }
        if self.joint_dim != 3 || self.root_dim != 6 {
            return Err(MotionError::InvalidSkeleton(format!(
                "expected joint_dim 3 and root_dim 6, got {} and {}",
                self.joint_dim, self.root_dim
            )));
        }
        if !(self.fps > 0.0) {
            return Err(MotionError::InvalidSkeleton("fps must be positive".into()));
        }
        for (name, indices) in &self.groups {
            if let Some(&bad) = indices.iter().find(|&&i| i >= width) {
                return Err(MotionError::InvalidSkeleton(format!(
                    "group `{name}` index {bad} outside width {width}"
                )));
            }
        }
        if let (Ok(pos), Ok(rot)) = (self.group(ROOT_POSITION), self.group(ROOT_ROTATION)) {
            if pos.iter().any(|i| rot.contains(i)) {
                return Err(MotionError::InvalidSkeleton(
                    "root_position and root_rotation overlap".into(),
                ));
            }
        }
        for key in [ROOT_POSITION, ROOT_ROTATION, HEAD_ROTATION] {
            if let Ok(g) = self.group(key) {
                if g.len() != 3 {
                    return Err(MotionError::InvalidSkeleton(format!(
                        "group `{key}` must have 3 channels"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn group(&self, name: &str) -> Result<&[usize], MotionError> {
        self.groups
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| MotionError::MissingGroup(name.to_string()))
    }

    fn triple(&self, name: &str) -> Result<[usize; 3], MotionError> {
        let g = self.group(name)?;
        if g.len() != 3 {
            return Err(MotionError::MissingGroup(name.to_string()));
        }
        Ok([g[0], g[1], g[2]])
    }

    pub fn root_position_channels(&self) -> Result<[usize; 3], MotionError> {
        self.triple(ROOT_POSITION)
    }

    pub fn root_velocity_channels(&self) -> Result<[usize; 3], MotionError> {
        self.triple(ROOT_VELOCITY)
    }

    pub fn root_rotation_channels(&self) -> Result<[usize; 3], MotionError> {
        self.triple(ROOT_ROTATION)
    }

    pub fn head_rotation_channels(&self) -> Result<[usize; 3], MotionError> {
        self.triple(HEAD_ROTATION)
    }

    /// The vertical component of the root rotation vector, used as the
    /// segment-local heading channel.
    pub fn heading_channel(&self) -> Result<usize, MotionError> {
        Ok(self.root_rotation_channels()?[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionFrame(pub Vec<f64>);

impl MotionFrame {
    pub fn new(values: Vec<f64>, skeleton: &SkeletonConfig) -> Result<Self, MotionError> {
        if values.len() != skeleton.width() {
            return Err(MotionError::WidthMismatch {
                expected: skeleton.width(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MotionError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `K` frames for one character in one round, stored as a `K x width` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSegment {
    frames: Array2<f64>,
    pub character: CharacterId,
    pub round_index: usize,
}

impl MotionSegment {
    pub fn new(
        frames: Array2<f64>,
        character: CharacterId,
        round_index: usize,
    ) -> Result<Self, MotionError> {
        if frames.nrows() == 0 {
            return Err(MotionError::TooShort {
                frames: 0,
                required: 1,
            });
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(MotionError::NonFinite);
        }
        Ok(Self {
            frames,
            character,
            round_index,
        })
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame(&self, index: usize) -> MotionFrame {
        MotionFrame(self.frames.row(index).to_vec())
    }

    pub fn extract(&self, selector: &[usize]) -> Result<Array2<f64>, MotionError> {
        extract(self.frames.view(), selector)
    }

    pub fn velocities(&self, selector: &[usize]) -> Result<Array2<f64>, MotionError> {
        velocities(self.frames.view(), selector)
    }
}

fn check_selector(selector: &[usize], width: usize) -> Result<(), MotionError> {
    match selector.iter().find(|&&i| i >= width) {
        Some(&index) => Err(MotionError::InvalidSelector { index, width }),
        None => Ok(()),
    }
}

/// Gathers the selected channels of every frame.
pub fn extract(frames: ArrayView2<'_, f64>, selector: &[usize]) -> Result<Array2<f64>, MotionError> {
    check_selector(selector, frames.ncols())?;
    Ok(frames.select(Axis(1), selector))
}

/// Scatters `values` into a zero `frames x width` matrix at the selector
/// columns. Adjoint of [`extract`] under the Frobenius inner product.
pub fn extract_adjoint(
    values: ArrayView2<'_, f64>,
    selector: &[usize],
    width: usize,
) -> Result<Array2<f64>, MotionError> {
    check_selector(selector, width)?;
    if values.ncols() != selector.len() {
        return Err(MotionError::WidthMismatch {
            expected: selector.len(),
            found: values.ncols(),
        });
    }
    let mut out = Array2::zeros((values.nrows(), width));
    for (col, &channel) in selector.iter().enumerate() {
        let mut dst = out.column_mut(channel);
        dst += &values.column(col);
    }
    Ok(out)
}

/// Forward differences of the selected channels: row `t` is
/// `frame[t + 1] - frame[t]`.
pub fn velocities(
    frames: ArrayView2<'_, f64>,
    selector: &[usize],
) -> Result<Array2<f64>, MotionError> {
    if frames.nrows() < 2 {
        return Err(MotionError::TooShort {
            frames: frames.nrows(),
            required: 2,
        });
    }
    let selected = extract(frames, selector)?;
    let n = selected.nrows();
    let later = selected.slice(ndarray::s![1..n, ..]);
    let earlier = selected.slice(ndarray::s![0..n - 1, ..]);
    Ok(&later - &earlier)
}

/// Decomposes an exponential-map rotation vector into `(yaw, pitch)`.
pub fn exp_map_to_yaw_pitch(v: [f64; 3]) -> (f64, f64) {
    let rot = Rotation3::from_scaled_axis(Vector3::new(v[0], v[1], v[2]));
    let (_roll, pitch, yaw) = rot.euler_angles();
    (yaw, pitch)
}

/// Exponential map of `Rz(yaw) * Ry(pitch)`.
pub fn yaw_pitch_to_exp_map(yaw: f64, pitch: f64) -> [f64; 3] {
    let rot = Rotation3::from_euler_angles(0.0, pitch, yaw);
    let v = rot.scaled_axis();
    [v.x, v.y, v.z]
}

pub fn head_orientation(
    frame: &MotionFrame,
    skeleton: &SkeletonConfig,
) -> Result<(f64, f64), MotionError> {
    let ch = skeleton.head_rotation_channels()?;
    let values = frame.values();
    check_selector(&ch, values.len())?;
    Ok(exp_map_to_yaw_pitch([values[ch[0]], values[ch[1]], values[ch[2]]]))
}

fn rotate2(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Places a segment expressed in its clip-local frame into the world:
/// root positions are rotated by `base.heading` and translated by
/// `base.position`, root velocities are rotated. Joint channels are left
/// untouched.
pub fn to_world(
    segment: &MotionSegment,
    base: &WorldPose,
    skeleton: &SkeletonConfig,
) -> Result<MotionSegment, MotionError> {
    transform_root(segment, skeleton, |p| base.local_to_world(p), |v| {
        rotate2(v, base.heading)
    })
}

/// Inverse of [`to_world`].
pub fn from_world(
    segment: &MotionSegment,
    base: &WorldPose,
    skeleton: &SkeletonConfig,
) -> Result<MotionSegment, MotionError> {
    transform_root(segment, skeleton, |p| base.world_to_local(p), |v| {
        rotate2(v, -base.heading)
    })
}

fn transform_root(
    segment: &MotionSegment,
    skeleton: &SkeletonConfig,
    pos: impl Fn([f64; 2]) -> [f64; 2],
    vel: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<MotionSegment, MotionError> {
    if segment.width() != skeleton.width() {
        return Err(MotionError::WidthMismatch {
            expected: skeleton.width(),
            found: segment.width(),
        });
    }
    let p = skeleton.root_position_channels()?;
    let v = skeleton.root_velocity_channels()?;
    let mut frames = segment.frames.clone();
    for mut row in frames.rows_mut() {
        let wp = pos([row[p[0]], row[p[1]]]);
        row[p[0]] = wp[0];
        row[p[1]] = wp[1];
        let wv = vel([row[v[0]], row[v[1]]]);
        row[v[0]] = wv[0];
        row[v[1]] = wv[1];
    }
    MotionSegment::new(frames, segment.character, segment.round_index)
}

/// Re-expresses a segment from one clip-local anchor to another. Unlike
/// [`to_world`] this also shifts the heading channel so that the root
/// orientation stays fixed in the world.
pub fn rebase(
    segment: &MotionSegment,
    from: &WorldPose,
    to: &WorldPose,
    skeleton: &SkeletonConfig,
) -> Result<MotionSegment, MotionError> {
    let world = to_world(segment, from, skeleton)?;
    let mut local = from_world(&world, to, skeleton)?;
    let h = skeleton.heading_channel()?;
    let delta = wrap_angle(from.heading - to.heading);
    local.frames.column_mut(h).mapv_inplace(|x| x + delta);
    Ok(local)
}

/// World pose of the root at `frame` for a segment anchored at `base`.
pub fn world_pose_at(
    segment: &MotionSegment,
    frame: usize,
    base: &WorldPose,
    skeleton: &SkeletonConfig,
) -> Result<WorldPose, MotionError> {
    let p = skeleton.root_position_channels()?;
    let h = skeleton.heading_channel()?;
    let row: ArrayView1<'_, f64> = segment.frames.row(frame);
    let world = base.local_to_world([row[p[0]], row[p[1]]]);
    Ok(WorldPose::new(world[0], world[1], base.heading + row[h]))
}
