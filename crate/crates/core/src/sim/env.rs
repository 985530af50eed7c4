//! Gym-style episode loop over a set of registered maps.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kinematics::{integrate, PwmSignals};
use super::lane::{lane_pose, LanePose, LaneSegment};
use super::params::{sample_domain_randomization, DomainRandomization, SimParams};
use super::track::TrackMap;
use super::{normalize_angle, RobotState, SimError};
use crate::render::{Observation, Renderer};

/// Evaluation episode length: 15 s at 30 Hz.
pub const DEFAULT_EPISODE_STEPS: usize = 450;
/// Spawn perturbation bounds around the right-lane centerline.
pub const SPAWN_MAX_OFFSET: f64 = 0.05;
pub const SPAWN_MAX_HEADING_ERROR: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoneReason {
    Running,
    OffRoad,
    TimeLimit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub state: RobotState,
    pub lane_pose: LanePose,
    pub done: bool,
    pub done_reason: DoneReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapChoice {
    /// Uniform over the registered maps.
    Random,
    Fixed(usize),
}

#[derive(Clone, Debug)]
struct Episode {
    map: usize,
    params: SimParams,
    state: RobotState,
    lane_pose: LanePose,
    steps: usize,
    done_reason: DoneReason,
}

/// One simulator instance. Not shared between threads; run several
/// instances for parallel collection.
#[derive(Debug)]
pub struct Env {
    maps: Vec<Arc<TrackMap>>,
    max_steps: usize,
    domain_rand: DomainRandomization,
    episode: Option<Episode>,
    renderer: Option<Renderer>,
}

impl Env {
    pub fn new(maps: Vec<Arc<TrackMap>>, max_steps: usize, domain_rand: DomainRandomization) -> Self {
        Env {
            maps,
            max_steps,
            domain_rand,
            episode: None,
            renderer: None,
        }
    }

    pub fn maps(&self) -> &[Arc<TrackMap>] {
        &self.maps
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn set_max_steps(&mut self, max_steps: usize) {
        self.max_steps = max_steps;
    }

    pub fn domain_randomization(&self) -> &DomainRandomization {
        &self.domain_rand
    }

    /// Starts a new episode. Identical arguments give identical episodes.
    pub fn reset(
        &mut self,
        map_choice: MapChoice,
        domain_rand: bool,
        seed: u64,
    ) -> Result<(RobotState, SimParams), SimError> {
        if self.maps.is_empty() {
            return Err(SimError::NoMapsRegistered);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = match map_choice {
            MapChoice::Random => rng.gen_range(0..self.maps.len()),
            MapChoice::Fixed(i) if i < self.maps.len() => i,
            MapChoice::Fixed(i) => return Err(SimError::UnknownMap(format!("index {i}"))),
        };
        let dr_seed: u64 = rng.gen();
        let params =
            sample_domain_randomization(dr_seed, &self.domain_rand.with_enabled(domain_rand))?;
        let state = spawn_pose(&self.maps[map], &mut rng);
        let lane_pose = lane_pose(&self.maps[map], &state);
        self.episode = Some(Episode {
            map,
            params,
            state,
            lane_pose,
            steps: 0,
            done_reason: DoneReason::Running,
        });
        Ok((state, params))
    }

    /// Places the robot at an explicit pose on a chosen map.
    pub fn reset_to(
        &mut self,
        map: usize,
        state: RobotState,
        params: SimParams,
    ) -> Result<(), SimError> {
        let track = self.maps.get(map).ok_or_else(|| SimError::UnknownMap(format!("index {map}")))?;
        params.validate()?;
        let state = RobotState {
            heading: normalize_angle(state.heading),
            t: 0.0,
            ..state
        };
        self.episode = Some(Episode {
            map,
            params,
            state,
            lane_pose: lane_pose(track, &state),
            steps: 0,
            done_reason: DoneReason::Running,
        });
        Ok(())
    }

    pub fn step(&mut self, pwm: PwmSignals) -> Result<StepResult, SimError> {
        let max_steps = self.max_steps;
        let ep = self.episode.as_mut().ok_or(SimError::NotReset)?;
        if ep.done_reason != DoneReason::Running {
            return Err(SimError::SteppedAfterDone);
        }
        let track = &self.maps[ep.map];
        let p = &ep.params;
        let pwm = PwmSignals::new(pwm.left, pwm.right);
        let v_left = p.wheel_gain * p.friction_scale * pwm.left;
        let v_right = p.wheel_gain * p.friction_scale * pwm.right;
        let v = (v_left + v_right) / 2.0;
        let omega = (v_right - v_left) / p.wheel_base;
        let s = ep.state;
        let (x, y, heading) = integrate(s.x, s.y, s.heading, v, omega, p.dt);
        ep.steps += 1;
        ep.state = RobotState {
            x,
            y,
            heading,
            v_left,
            v_right,
            t: ep.steps as f64 * p.dt,
        };
        ep.lane_pose = lane_pose(track, &ep.state);
        // The time limit takes precedence, so an off-road exit always
        // happens strictly before the limit.
        ep.done_reason = if ep.steps >= max_steps {
            DoneReason::TimeLimit
        } else if !ep.lane_pose.on_drivable {
            DoneReason::OffRoad
        } else {
            DoneReason::Running
        };
        Ok(StepResult {
            state: ep.state,
            lane_pose: ep.lane_pose,
            done: ep.done_reason != DoneReason::Running,
            done_reason: ep.done_reason,
        })
    }

    fn episode(&self) -> Result<&Episode, SimError> {
        self.episode.as_ref().ok_or(SimError::NotReset)
    }

    pub fn state(&self) -> Result<RobotState, SimError> {
        Ok(self.episode()?.state)
    }

    pub fn lane_pose(&self) -> Result<LanePose, SimError> {
        Ok(self.episode()?.lane_pose)
    }

    pub fn params(&self) -> Result<SimParams, SimError> {
        Ok(self.episode()?.params)
    }

    pub fn map_index(&self) -> Result<usize, SimError> {
        Ok(self.episode()?.map)
    }

    pub fn track(&self) -> Result<&Arc<TrackMap>, SimError> {
        Ok(&self.maps[self.episode()?.map])
    }

    pub fn steps(&self) -> Result<usize, SimError> {
        Ok(self.episode()?.steps)
    }

    pub fn done_reason(&self) -> Result<DoneReason, SimError> {
        Ok(self.episode()?.done_reason)
    }

    /// Renders and preprocesses the current camera frame.
    pub fn observe(&mut self) -> Result<Observation, SimError> {
        let ep = self.episode.as_ref().ok_or(SimError::NotReset)?;
        let renderer = match self.renderer.take() {
            Some(r) if r.matches(&ep.params) => r,
            _ => Renderer::new(&ep.params),
        };
        let obs = renderer.observe(&ep.state, &self.maps[ep.map], &ep.params);
        self.renderer = Some(renderer);
        Ok(obs)
    }
}

/// Uniform spawn on the right-lane centerline of a random drivable tile and
/// direction, perturbed by at most `SPAWN_MAX_OFFSET` laterally and
/// `SPAWN_MAX_HEADING_ERROR` in heading.
pub fn spawn_pose(track: &TrackMap, rng: &mut impl Rng) -> RobotState {
    let tiles = track.drivable_tiles();
    let tile = tiles[rng.gen_range(0..tiles.len())];
    let segments = LaneSegment::both(track, tile).expect("drivable tile");
    let seg = segments[rng.gen_range(0..2)];
    let s = rng.gen_range(0.0..seg.length);
    let d = rng.gen_range(-SPAWN_MAX_OFFSET..=SPAWN_MAX_OFFSET);
    let phi = rng.gen_range(-SPAWN_MAX_HEADING_ERROR..=SPAWN_MAX_HEADING_ERROR);
    let [px, py] = seg.point_at(s);
    let lane_heading = seg.heading_at(s);
    RobotState {
        x: px - d * lane_heading.sin(),
        y: py + d * lane_heading.cos(),
        heading: normalize_angle(lane_heading + phi),
        ..RobotState::default()
    }
}
