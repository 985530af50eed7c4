use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bc::{train_bc, BcConfig, TrainReport};
use super::collect::{rollout_relabeled, Sample};
use super::dataset::Dataset;
use super::{derive_seed, IlError};
use crate::expert::PurePursuitConfig;
use crate::nn::PolicyNet;
use crate::policy::{NetPolicy, Policy};
use crate::sim::{DomainRandomization, Env, TrackMap};

const ROLLOUT_STREAM: u64 = 0xDA;
const SPLIT_STREAM: u64 = 0xDB;
const BC_STREAM: u64 = 0xDC;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaggerConfig {
    /// Aggregation rounds after the initial fit.
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub steps_per_episode: usize,
    pub domain_rand: bool,
    pub seed: u64,
}

impl DaggerConfig {
    pub fn validate(&self) -> Result<(), IlError> {
        if self.iterations > 0 && self.episodes_per_iter == 0 {
            return Err(IlError::InvalidConfig("episodes_per_iter"));
        }
        if self.iterations > 0 && self.steps_per_episode == 0 {
            return Err(IlError::InvalidConfig("steps_per_episode"));
        }
        Ok(())
    }

    pub fn collected_records(&self) -> usize {
        self.iterations * self.episodes_per_iter * self.steps_per_episode
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaggerReport {
    /// Initial fit followed by one report per aggregation round.
    pub rounds: Vec<TrainReport>,
    pub dataset_sizes: Vec<usize>,
}

impl DaggerReport {
    pub fn final_round(&self) -> &TrainReport {
        self.rounds.last().expect("at least the initial fit")
    }
}

/// Collects one round of learner-driven, expert-labelled samples.
pub(crate) fn dagger_round_samples(
    env: &mut Env,
    learner: &mut dyn Policy,
    expert: &PurePursuitConfig,
    cfg: &DaggerConfig,
    round: usize,
    with_obs: bool,
) -> Result<Vec<Sample>, IlError> {
    let mut out = Vec::with_capacity(cfg.episodes_per_iter * cfg.steps_per_episode);
    for e in 0..cfg.episodes_per_iter {
        let episode = round * cfg.episodes_per_iter + e;
        let seed = derive_seed(cfg.seed, ROLLOUT_STREAM, episode as u64);
        out.extend(rollout_relabeled(
            env,
            learner,
            expert,
            cfg.steps_per_episode,
            cfg.domain_rand,
            seed,
            episode,
            with_obs,
        )?);
    }
    Ok(out)
}

/// Fits `net` on `dataset`, then repeatedly rolls the current policy out,
/// has the expert label every visited state, appends those records and
/// refits from the current weights. `dataset` ends holding the aggregate.
pub fn train_dagger(
    maps: &[Arc<TrackMap>],
    domain_rand: &DomainRandomization,
    expert: &PurePursuitConfig,
    net: &mut PolicyNet<f32>,
    dataset: &mut Dataset,
    cfg: &DaggerConfig,
    bc: &BcConfig,
) -> Result<DaggerReport, IlError> {
    cfg.validate()?;
    if dataset.split().is_none() {
        dataset.split_by_seed(derive_seed(cfg.seed, SPLIT_STREAM, 0))?;
    }
    let mut rounds = vec![train_bc(dataset, net, bc)?];
    let mut sizes = vec![dataset.len()];
    let mut env = Env::new(maps.to_vec(), cfg.steps_per_episode.max(1), domain_rand.clone());
    for round in 0..cfg.iterations {
        let samples = {
            let mut learner = NetPolicy { net };
            dagger_round_samples(&mut env, &mut learner, expert, cfg, round, true)?
        };
        for s in samples {
            let obs = s.obs.expect("rendered for dataset");
            dataset.push(obs.as_slice(), s.action, Some(s.origin))?;
        }
        dataset.manifest.episodes += cfg.episodes_per_iter;
        dataset.split_by_seed(derive_seed(cfg.seed, SPLIT_STREAM, round as u64 + 1))?;
        let round_bc = BcConfig {
            seed: derive_seed(bc.seed, BC_STREAM, round as u64),
            ..*bc
        };
        rounds.push(train_bc(dataset, net, &round_bc)?);
        sizes.push(dataset.len());
    }
    Ok(DaggerReport {
        rounds,
        dataset_sizes: sizes,
    })
}
