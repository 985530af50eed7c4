//! Dry runs of the collection loops that count records instead of storing
//! images. The loops are the ones training uses; only rendering is skipped
//! and the expert stands in for the learner.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::collect::{collect_episode, CollectConfig};
use super::dagger::{dagger_round_samples, DaggerConfig};
use super::gail::{rollout_trajectory, GailConfig};
use super::{derive_seed, IlError};
use crate::expert::{expert_action, ExpertState, PurePursuitConfig};
use crate::policy::ExpertPolicy;
use crate::sim::{DomainRandomization, Env, TrackMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub demonstrations: usize,
    pub dagger_dataset: usize,
    pub gail_buffer_pairs: usize,
    pub gail_buffer_trajectories: usize,
}

pub fn dry_run_budgets(
    maps: &[Arc<TrackMap>],
    domain_rand: &DomainRandomization,
    expert: &PurePursuitConfig,
    collect: &CollectConfig,
    dagger: &DaggerConfig,
    gail: &GailConfig,
) -> Result<BudgetReport, IlError> {
    let mut env = Env::new(maps.to_vec(), collect.steps_per_episode.max(1), domain_rand.clone());
    let mut demonstrations = 0;
    for episode in 0..collect.episodes {
        let seed = derive_seed(collect.seed, 1, episode as u64);
        demonstrations += collect_episode(
            &mut env,
            expert,
            collect.steps_per_episode,
            collect.domain_rand,
            seed,
            episode,
            false,
        )?
        .len();
    }

    let mut dagger_dataset = demonstrations;
    let mut learner = ExpertPolicy::new(*expert);
    for round in 0..dagger.iterations {
        dagger_dataset += dagger_round_samples(&mut env, &mut learner, expert, dagger, round, false)?.len();
    }

    let mut buffer = ReplayBuffer::new(gail.buffer_capacity);
    for epoch in 0..gail.epochs {
        for r in 0..gail.rollouts_per_epoch {
            let seed = derive_seed(gail.seed, 0x6A, (epoch * gail.rollouts_per_epoch + r) as u64);
            let mem = std::cell::Cell::new(ExpertState::default());
            let t = rollout_trajectory(
                &mut env,
                gail.rollout_len,
                gail.domain_rand,
                seed,
                false,
                |state, track, _| {
                    let (a, next) = expert_action(state, track, expert, mem.get()).map_err(|source| {
                        IlError::ExpertFailure {
                            episode: epoch,
                            step: r,
                            source,
                        }
                    })?;
                    mem.set(next);
                    Ok(([a.throttle as f32, a.steering as f32], a))
                },
                || mem.set(ExpertState::default()),
            )?;
            buffer.push(t);
        }
    }
    Ok(BudgetReport {
        demonstrations,
        dagger_dataset,
        gail_buffer_pairs: buffer.pair_count(),
        gail_buffer_trajectories: buffer.len(),
    })
}
