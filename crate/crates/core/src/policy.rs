//! Uniform interface over anything that maps the current situation to an
//! action: the pure pursuit expert, a trained network, or a fixed command.

use thiserror::Error;

use crate::expert::{expert_action, ExpertError, ExpertState, PurePursuitConfig};
use crate::nn::{NnError, PolicyNet};
use crate::render::Observation;
use crate::sim::{Action, RobotState, TrackMap};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("policy needs a camera observation but none was rendered")]
    MissingObservation,
}

pub struct PolicyInput<'a> {
    pub state: &'a RobotState,
    pub track: &'a TrackMap,
    pub observation: Option<&'a Observation>,
}

pub trait Policy {
    /// Whether `act` reads the camera image. Callers skip rendering when it
    /// does not.
    fn needs_observation(&self) -> bool;

    /// Clears per-episode memory.
    fn reset(&mut self) {}

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError>;
}

/// The demonstrator, reading the true pose.
#[derive(Clone, Debug, Default)]
pub struct ExpertPolicy {
    pub config: PurePursuitConfig,
    memory: ExpertState,
}

impl ExpertPolicy {
    pub fn new(config: PurePursuitConfig) -> Self {
        ExpertPolicy {
            config,
            memory: ExpertState::default(),
        }
    }
}

impl Policy for ExpertPolicy {
    fn needs_observation(&self) -> bool {
        false
    }

    fn reset(&mut self) {
        self.memory = ExpertState::default();
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        let (action, mem) = expert_action(input.state, input.track, &self.config, self.memory)?;
        self.memory = mem;
        Ok(action)
    }
}

/// Deterministic head of a trained network.
#[derive(Clone, Copy, Debug)]
pub struct NetPolicy<'a> {
    pub net: &'a PolicyNet<f32>,
}

impl Policy for NetPolicy<'_> {
    fn needs_observation(&self) -> bool {
        true
    }

    fn act(&mut self, input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        let obs = input.observation.ok_or(PolicyError::MissingObservation)?;
        Ok(self.net.act(obs.as_slice())?)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn needs_observation(&self) -> bool {
        false
    }

    fn act(&mut self, _input: &PolicyInput<'_>) -> Result<Action, PolicyError> {
        Ok(self.0)
    }
}
