//! Demonstration collection and the imitation learning trainers.

pub mod bc;
pub mod budget;
pub mod buffer;
pub mod collect;
pub mod dagger;
pub mod dataset;
pub mod gail;

use thiserror::Error;

pub use bc::{action_loss, train_bc, BcConfig, EarlyStopping, EpochLoss, StopVerdict, TrainReport};
pub use budget::{dry_run_budgets, BudgetReport};
pub use buffer::{ReplayBuffer, Trajectory};
pub use collect::{collect_demonstrations, collect_episode, rollout_relabeled, CollectConfig, Sample};
pub use dagger::{train_dagger, DaggerConfig, DaggerReport};
pub use dataset::{Dataset, DatasetManifest, Origin, Split};
pub use gail::{discriminator_accuracy, gail_reward, stochastic_rollout, train_gail, GailConfig, GailEpochStats, GailReport};

use crate::eval::EvalError;
use crate::expert::ExpertError;
use crate::nn::NnError;
use crate::policy::PolicyError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum IlError {
    #[error("dataset has {0} records; at least 5 are needed to split")]
    TooFewRecords(usize),
    #[error("dataset has no train/validation split")]
    NoSplit,
    #[error("expert failure in episode {episode} at step {step}: {source}")]
    ExpertFailure {
        episode: usize,
        step: usize,
        #[source]
        source: ExpertError,
    },
    #[error("replay buffer is empty")]
    BufferUnderflow,
    #[error("parameters became non-finite after epoch {0}")]
    NonFiniteParameter(usize),
    #[error("action ({throttle}, {steering}) is outside the valid ranges")]
    InvalidAction { throttle: f64, steering: f64 },
    #[error("observation has {actual} values, expected {expected}")]
    ObservationSize { expected: usize, actual: usize },
    #[error("invalid configuration field `{0}`")]
    InvalidConfig(&'static str),
    #[error("dataset format error: {0}")]
    Format(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Derives an independent 64-bit seed for item `index` of stream `stream`
/// (splitmix64 finalizer over the mixed inputs).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Worker-thread count from `LANEFORGE_THREADS`, defaulting to 1.
pub fn threads_from_env() -> usize {
    std::env::var("LANEFORGE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}
