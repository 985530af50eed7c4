//! Track maps, lane geometry, differential-drive kinematics and the
//! reset/step loop.

pub mod env;
pub mod kinematics;
pub mod lane;
pub mod params;
pub mod track;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use env::{spawn_pose, DoneReason, Env, MapChoice, StepResult, DEFAULT_EPISODE_STEPS};
pub use kinematics::{action_to_pwm, integrate, Action, PwmSignals};
pub use lane::{advance, lane_pose, locate, on_road, LaneLocation, LanePose, LaneSegment, LaneShape};
pub use params::{sample_domain_randomization, ColorRange, DomainRandomization, Range, SimParams};
pub use track::{bundled, bundled_names, load_map, Edge, TileIndex, TileKind, TrackMap, HOLDOUT_MAP, TRAINING_MAPS};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("map parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("track disconnected at tile ({row}, {col}) across its {edge:?} edge")]
    DisconnectedTrack { row: usize, col: usize, edge: Edge },
    #[error("map has no closed loop of drivable tiles")]
    NoClosedLoop,
    #[error("tile size must be positive, got {0}")]
    InvalidTileSize(f64),
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("no maps registered")]
    NoMapsRegistered,
    #[error("invalid range for `{0}`")]
    InvalidRange(&'static str),
    #[error("invalid simulator parameter `{0}`")]
    InvalidParam(&'static str),
    #[error("step called after the episode finished")]
    SteppedAfterDone,
    #[error("environment has not been reset")]
    NotReset,
    #[error("io error: {0}")]
    Io(String),
}

/// Robot pose in the world frame (x east, y north, heading counter-clockwise
/// from east) plus wheel speeds and episode time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v_left: f64,
    pub v_right: f64,
    pub t: f64,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
