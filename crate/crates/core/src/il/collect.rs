use std::sync::Arc;

use super::dataset::{Dataset, DatasetManifest, Origin};
use super::{derive_seed, IlError};
use crate::expert::{expert_action, ExpertState, PurePursuitConfig};
use crate::policy::{Policy, PolicyInput};
use crate::render::Observation;
use crate::sim::{action_to_pwm, Action, DomainRandomization, Env, MapChoice, TrackMap};

const EPISODE_STREAM: u64 = 1;
const RESET_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub domain_rand: bool,
    pub seed: u64,
    pub threads: usize,
}

/// One labelled step. `obs` is `None` when rendering was skipped.
#[derive(Clone, Debug)]
pub struct Sample {
    pub obs: Option<Observation>,
    pub action: Action,
    pub origin: Origin,
}

/// Runs the expert for exactly `steps` steps from a seeded reset, recording
/// what it saw and did. Leaving the road is an expert failure.
pub fn collect_episode(
    env: &mut Env,
    expert: &PurePursuitConfig,
    steps: usize,
    domain_rand: bool,
    seed: u64,
    episode: usize,
    with_obs: bool,
) -> Result<Vec<Sample>, IlError> {
    env.set_max_steps(steps);
    let (mut state, _) = env.reset(MapChoice::Random, domain_rand, seed)?;
    let map = env.map_index()?;
    let track = env.track()?.clone();
    let mut mem = ExpertState::default();
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let obs = if with_obs { Some(env.observe()?) } else { None };
        let (action, next) = expert_action(&state, &track, expert, mem)
            .map_err(|source| IlError::ExpertFailure { episode, step, source })?;
        mem = next;
        out.push(Sample {
            obs,
            action,
            origin: Origin {
                reset_id: episode as u32,
                map,
                state,
            },
        });
        let r = env.step(action_to_pwm(action))?;
        if r.done && step + 1 < steps {
            return Err(IlError::ExpertFailure {
                episode,
                step,
                source: crate::expert::ExpertError::OffRoad {
                    x: r.state.x,
                    y: r.state.y,
                },
            });
        }
        state = r.state;
    }
    Ok(out)
}

fn push_samples(ds: &mut Dataset, samples: Vec<Sample>) -> Result<(), IlError> {
    for s in samples {
        let obs = s.obs.ok_or(IlError::Format("sample without observation".into()))?;
        ds.push(obs.as_slice(), s.action, Some(s.origin))?;
    }
    Ok(())
}

/// Expert demonstrations, `episodes * steps_per_episode` records in episode
/// order. The map is re-drawn for every episode. Output is independent of
/// the thread count.
pub fn collect_demonstrations(
    maps: &[Arc<TrackMap>],
    domain_rand: &DomainRandomization,
    expert: &PurePursuitConfig,
    cfg: &CollectConfig,
) -> Result<Dataset, IlError> {
    if cfg.steps_per_episode == 0 {
        return Err(IlError::InvalidConfig("steps_per_episode"));
    }
    let mut manifest = DatasetManifest::new(
        maps.iter().map(|m| m.name().to_string()).collect(),
        cfg.domain_rand,
        cfg.seed,
    );
    manifest.episodes = cfg.episodes;
    manifest.steps_per_episode = cfg.steps_per_episode;
    let mut ds = Dataset::new(manifest);
    ds.reserve(cfg.episodes * cfg.steps_per_episode);
    let threads = cfg.threads.clamp(1, cfg.episodes.max(1));
    let run = |episode: usize, env: &mut Env| {
        collect_episode(
            env,
            expert,
            cfg.steps_per_episode,
            cfg.domain_rand,
            derive_seed(cfg.seed, EPISODE_STREAM, episode as u64),
            episode,
            true,
        )
    };
    if threads == 1 {
        let mut env = Env::new(maps.to_vec(), cfg.steps_per_episode, domain_rand.clone());
        for episode in 0..cfg.episodes {
            push_samples(&mut ds, run(episode, &mut env)?)?;
        }
        return Ok(ds);
    }
    for chunk_start in (0..cfg.episodes).step_by(threads) {
        let chunk_end = (chunk_start + threads).min(cfg.episodes);
        let results: Vec<Result<Vec<Sample>, IlError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (chunk_start..chunk_end)
                .map(|episode| {
                    let run = &run;
                    scope.spawn(move || {
                        let mut env = Env::new(maps.to_vec(), cfg.steps_per_episode, domain_rand.clone());
                        run(episode, &mut env)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("collection worker panicked"))
                .collect()
        });
        for r in results {
            push_samples(&mut ds, r?)?;
        }
    }
    Ok(ds)
}

/// Lets `learner` drive for exactly `steps` steps while a shadow expert
/// labels every visited state. The environment is re-seeded after each
/// termination so the step count is always reached.
#[allow(clippy::too_many_arguments)]
pub fn rollout_relabeled(
    env: &mut Env,
    learner: &mut dyn Policy,
    expert: &PurePursuitConfig,
    steps: usize,
    domain_rand: bool,
    seed: u64,
    episode: usize,
    with_obs: bool,
) -> Result<Vec<Sample>, IlError> {
    env.set_max_steps(steps);
    let reset = |env: &mut Env, n: u64| env.reset(MapChoice::Random, domain_rand, derive_seed(seed, RESET_STREAM, n));
    let (mut state, _) = reset(env, 0)?;
    let mut resets = 1u64;
    learner.reset();
    let mut mem = ExpertState::default();
    let mut reset_id = (episode as u32) << 16;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let track = env.track()?.clone();
        let obs = if with_obs || learner.needs_observation() {
            Some(env.observe()?)
        } else {
            None
        };
        let (label, next) = expert_action(&state, &track, expert, mem)
            .map_err(|source| IlError::ExpertFailure { episode, step, source })?;
        mem = next;
        let action = learner.act(&PolicyInput {
            state: &state,
            track: &track,
            observation: obs.as_ref(),
        })?;
        out.push(Sample {
            obs: if with_obs { obs } else { None },
            action: label,
            origin: Origin {
                reset_id,
                map: env.map_index()?,
                state,
            },
        });
        let r = env.step(action_to_pwm(action))?;
        state = r.state;
        if r.done && step + 1 < steps {
            state = reset(env, resets)?.0;
            resets += 1;
            reset_id += 1;
            learner.reset();
            mem = ExpertState::default();
        }
    }
    Ok(out)
}
