//! Spatial math for dyadic layouts: F-formation categories, clock bearings,
//! distance categories and conversion between relative and global poses.
//!
//! Clock readings are taken in the character's own frame with 12:00 straight
//! ahead; clockwise readings map to negative (counterclockwise-positive)
//! radians, so 3:00 is the character's right.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::{wrap_angle, WorldPose};

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxemicsError {
    #[error("unknown direction category `{0}`")]
    UnknownCategory(String),
    #[error("invalid clock reading {hour}:{minute:02}")]
    InvalidClock { hour: u32, minute: u32 },
    #[error("characters occupy the same position")]
    DegeneratePositions,
    #[error("movement distance must be non-negative, got {0}")]
    InvalidDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalConfiguration {
    VisAVis,
    LShaped,
    SideBySide,
}

impl PositionalConfiguration {
    pub const ALL: [PositionalConfiguration; 3] = [
        PositionalConfiguration::VisAVis,
        PositionalConfiguration::LShaped,
        PositionalConfiguration::SideBySide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PositionalConfiguration::VisAVis => "vis_a_vis",
            PositionalConfiguration::LShaped => "l_shaped",
            PositionalConfiguration::SideBySide => "side_by_side",
        }
    }
}

impl fmt::Display for PositionalConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceCategory {
    Interpersonal,
    Social,
    Public,
}

impl DistanceCategory {
    pub const ALL: [DistanceCategory; 3] = [
        DistanceCategory::Interpersonal,
        DistanceCategory::Social,
        DistanceCategory::Public,
    ];

    /// Inclusive range in meters.
    pub fn range_m(self) -> (f64, f64) {
        match self {
            DistanceCategory::Interpersonal => (0.5, 0.7),
            DistanceCategory::Social => (0.7, 1.2),
            DistanceCategory::Public => (1.2, 2.0),
        }
    }

    /// Fallback distance when a plan omits the number.
    pub fn midpoint_m(self) -> f64 {
        let (lo, hi) = self.range_m();
        (lo + hi) / 2.0
    }

    pub fn contains(self, d: f64) -> bool {
        let (lo, hi) = self.range_m();
        d >= lo - EPS && d <= hi + EPS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClockDirection {
    pub hour: u32,
    pub minute: u32,
}

impl ClockDirection {
    pub fn new(hour: u32, minute: u32) -> Result<Self, ProxemicsError> {
        if !(1..=12).contains(&hour) || minute > 59 {
            return Err(ProxemicsError::InvalidClock { hour, minute });
        }
        Ok(Self { hour, minute })
    }

    /// Minutes past 12:00 on a 12-hour dial, in `[0, 720)`.
    pub fn minutes(self) -> u32 {
        (self.hour % 12) * 60 + self.minute
    }

    /// Nearest clock reading for a bearing.
    pub fn from_angle(angle: f64) -> Self {
        let m = (-wrap_angle(angle) * 720.0 / (2.0 * PI)).round() as i64;
        let m = m.rem_euclid(720) as u32;
        let hour = match m / 60 {
            0 => 12,
            h => h,
        };
        Self {
            hour,
            minute: m % 60,
        }
    }
}

impl fmt::Display for ClockDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:02}", self.hour, self.minute)
    }
}

pub fn clock_to_angle(c: ClockDirection) -> f64 {
    wrap_angle(-2.0 * PI * c.minutes() as f64 / 720.0)
}

/// The eight named bearings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Front,
    FrontRight,
    Right,
    BackRight,
    Back,
    BackLeft,
    Left,
    FrontLeft,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::Front,
        Direction::FrontRight,
        Direction::Right,
        Direction::BackRight,
        Direction::Back,
        Direction::BackLeft,
        Direction::Left,
        Direction::FrontLeft,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Front => "front",
            Direction::FrontRight => "front-right",
            Direction::Right => "right",
            Direction::BackRight => "back-right",
            Direction::Back => "back",
            Direction::BackLeft => "back-left",
            Direction::Left => "left",
            Direction::FrontLeft => "front-left",
        }
    }

    /// Clock interval `(from, to)`, read clockwise.
    pub fn clock_range(self) -> (ClockDirection, ClockDirection) {
        let c = |h, m| ClockDirection { hour: h, minute: m };
        match self {
            Direction::Front => (c(11, 15), c(12, 45)),
            Direction::FrontRight => (c(12, 45), c(2, 15)),
            Direction::Right => (c(2, 15), c(3, 45)),
            Direction::BackRight => (c(3, 45), c(5, 15)),
            Direction::Back => (c(5, 15), c(6, 45)),
            Direction::BackLeft => (c(6, 45), c(8, 15)),
            Direction::Left => (c(8, 15), c(9, 45)),
            Direction::FrontLeft => (c(9, 45), c(11, 15)),
        }
    }

    /// Whether a bearing (radians) falls inside this direction's clock range,
    /// endpoints included.
    pub fn contains(self, angle: f64) -> bool {
        let (from, to) = self.clock_range();
        let start = from.minutes() as f64;
        let span = ((to.minutes() + 720 - from.minutes()) % 720) as f64;
        // bearing -> clock minutes, continuous
        let m = (-wrap_angle(angle) * 720.0 / (2.0 * PI)).rem_euclid(720.0);
        let offset = (m - start).rem_euclid(720.0);
        let tol = EPS * 720.0 / (2.0 * PI);
        offset <= span + tol || offset >= 720.0 - tol
    }

    /// Named direction of a bearing; shared endpoints go to the earlier
    /// entry of [`Direction::ALL`].
    pub fn of(angle: f64) -> Direction {
        Direction::ALL
            .into_iter()
            .find(|d| d.contains(angle))
            .unwrap_or(Direction::Front)
    }

    /// Center bearing of the range, radians.
    pub fn center(self) -> f64 {
        let (from, _) = self.clock_range();
        wrap_angle(clock_to_angle(from) - PI / 8.0)
    }
}

impl FromStr for Direction {
    type Err = ProxemicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == norm)
            .ok_or_else(|| ProxemicsError::UnknownCategory(s.to_string()))
    }
}

pub fn direction_range(category: &str) -> Result<(ClockDirection, ClockDirection), ProxemicsError> {
    Ok(category.parse::<Direction>()?.clock_range())
}

/// Bearing of II in I's frame (`theta`), bearing of I in II's frame (`phi`),
/// and horizontal distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeSpatial {
    pub theta: f64,
    pub phi: f64,
    pub distance: f64,
}

impl RelativeSpatial {
    pub fn new(theta: f64, phi: f64, distance: f64) -> Self {
        Self {
            theta: wrap_angle(theta),
            phi: wrap_angle(phi),
            distance,
        }
    }

    /// The same relation seen from the other character.
    pub fn swapped(&self) -> Self {
        Self::new(self.phi, self.theta, self.distance)
    }
}

pub fn compute_global_pose(pose_i: &WorldPose, rel: &RelativeSpatial) -> WorldPose {
    let dir = pose_i.heading + rel.theta;
    WorldPose::new(
        pose_i.position[0] + rel.distance * dir.cos(),
        pose_i.position[1] + rel.distance * dir.sin(),
        pose_i.heading + rel.theta + PI - rel.phi,
    )
}

pub fn relative_from_world(
    pose_i: &WorldPose,
    pose_ii: &WorldPose,
) -> Result<RelativeSpatial, ProxemicsError> {
    let dx = pose_ii.position[0] - pose_i.position[0];
    let dy = pose_ii.position[1] - pose_i.position[1];
    let distance = dx.hypot(dy);
    if distance < 1e-12 {
        return Err(ProxemicsError::DegeneratePositions);
    }
    let bearing = dy.atan2(dx);
    Ok(RelativeSpatial::new(
        bearing - pose_i.heading,
        bearing + PI - pose_ii.heading,
        distance,
    ))
}

fn is(d: Direction, angle: f64) -> bool {
    d.contains(angle)
}

fn validate_one_way(config: PositionalConfiguration, theta: f64, phi: f64) -> bool {
    use Direction::*;
    match config {
        PositionalConfiguration::VisAVis => is(Front, theta) && is(Front, phi),
        PositionalConfiguration::LShaped => {
            (is(FrontLeft, theta) && (is(FrontRight, phi) || is(Right, phi)))
                || (is(FrontRight, theta) && (is(FrontLeft, phi) || is(Left, phi)))
        }
        PositionalConfiguration::SideBySide => {
            (is(Left, theta) && is(Right, phi)) || (is(Right, theta) && is(Left, phi))
        }
    }
}

/// Whether the mutual bearings satisfy the configuration's mapping rule,
/// checked from both characters' points of view.
pub fn validate_configuration(config: PositionalConfiguration, rel: &RelativeSpatial) -> bool {
    validate_one_way(config, rel.theta, rel.phi) || validate_one_way(config, rel.phi, rel.theta)
}

/// Canonical bearings `(theta, phi)` for a configuration: the range centers
/// the mapping rule assigns.
pub fn canonical_bearings(config: PositionalConfiguration) -> (f64, f64) {
    match config {
        PositionalConfiguration::VisAVis => (0.0, 0.0),
        PositionalConfiguration::LShaped => {
            (Direction::FrontLeft.center(), Direction::FrontRight.center())
        }
        PositionalConfiguration::SideBySide => (Direction::Right.center(), Direction::Left.center()),
    }
}

/// World-frame displacement for a movement given as a clockwise angle from
/// the character's forward direction and a distance in meters.
pub fn displacement_to_world(
    heading: f64,
    move_angle_deg: f64,
    move_dist_m: f64,
) -> Result<[f64; 2], ProxemicsError> {
    if !(move_dist_m >= 0.0) {
        return Err(ProxemicsError::InvalidDistance(move_dist_m));
    }
    if move_dist_m == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let dir = heading - move_angle_deg.to_radians();
    Ok([move_dist_m * dir.cos(), move_dist_m * dir.sin()])
}

/// Clockwise movement angle in `[0, 360)` degrees that points at a bearing.
pub fn bearing_to_move_angle(bearing: f64) -> f64 {
    let a = (-wrap_angle(bearing).to_degrees()).rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}
