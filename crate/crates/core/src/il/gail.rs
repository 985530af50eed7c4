use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, Trajectory};
use super::dataset::Dataset;
use super::{derive_seed, IlError};
use crate::nn::{obs_to_chw, sigmoid, softplus, squash, AdamState, Discriminator, Parameterized, PolicyNet, Tensor};
use crate::render::Observation;
use crate::sim::{action_to_pwm, Action, DomainRandomization, Env, MapChoice, RobotState, TrackMap};

const ROLLOUT_STREAM: u64 = 0x6A;
const NOISE_STREAM: u64 = 0x6B;
const DISC_STREAM: u64 = 0x6C;
const POLICY_STREAM: u64 = 0x6D;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GailConfig {
    pub epochs: usize,
    pub rollouts_per_epoch: usize,
    pub rollout_len: usize,
    /// Replay capacity in trajectories.
    pub buffer_capacity: usize,
    pub disc_passes: usize,
    pub policy_passes: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Step size of the running reward baseline.
    pub baseline_rate: f64,
    pub reward_clamp: f64,
    pub domain_rand: bool,
    pub seed: u64,
}

impl Default for GailConfig {
    fn default() -> Self {
        GailConfig {
            epochs: 30,
            rollouts_per_epoch: 15,
            rollout_len: 256,
            buffer_capacity: 75,
            disc_passes: 4,
            policy_passes: 4,
            batch_size: 32,
            lr: 1e-4,
            baseline_rate: 0.1,
            reward_clamp: 10.0,
            domain_rand: false,
            seed: 0,
        }
    }
}

impl GailConfig {
    pub fn validate(&self) -> Result<(), IlError> {
        let counts = [
            ("rollouts_per_epoch", self.rollouts_per_epoch),
            ("rollout_len", self.rollout_len),
            ("buffer_capacity", self.buffer_capacity),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(IlError::InvalidConfig(name));
            }
        }
        if self.buffer_capacity < self.rollouts_per_epoch {
            return Err(IlError::InvalidConfig("buffer_capacity"));
        }
        if self.batch_size < 2 {
            return Err(IlError::InvalidConfig("batch_size"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(IlError::InvalidConfig("lr"));
        }
        if !(self.baseline_rate > 0.0 && self.baseline_rate <= 1.0) {
            return Err(IlError::InvalidConfig("baseline_rate"));
        }
        if !(self.reward_clamp > 0.0 && self.reward_clamp.is_finite()) {
            return Err(IlError::InvalidConfig("reward_clamp"));
        }
        Ok(())
    }

    pub fn buffer_pairs(&self) -> usize {
        self.buffer_capacity * self.rollout_len
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GailEpochStats {
    pub epoch: usize,
    pub disc_loss: f64,
    pub disc_accuracy: f64,
    pub mean_reward: f64,
    pub baseline: f64,
    pub log_std: [f64; 2],
    pub buffer_trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GailReport {
    pub epochs_run: usize,
    pub epochs: Vec<GailEpochStats>,
}

/// `-log(1 - D)` for a discriminator logit, clamped to `[0, clamp]`.
pub fn gail_reward(logit: f64, clamp: f64) -> f64 {
    softplus(logit).clamp(0.0, clamp)
}

/// Fraction of pairs classified correctly (positive logit means expert).
pub fn discriminator_accuracy<'a>(
    disc: &Discriminator<f32>,
    expert: impl IntoIterator<Item = (&'a [f32], [f32; 2])>,
    agent: impl IntoIterator<Item = (&'a [f32], [f32; 2])>,
) -> Result<f64, IlError> {
    let c = &disc.config;
    let (mut right, mut total) = (0usize, 0usize);
    for (label, pairs) in [(true, expert.into_iter().collect::<Vec<_>>()), (false, agent.into_iter().collect())] {
        for (obs, a) in pairs {
            let x = obs_to_chw(obs, c.in_height, c.in_width, c.in_channels);
            let l = disc.logit(&x, a)?;
            right += usize::from((l > 0.0) == label);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { right as f64 / total as f64 })
}

/// Fixed-length rollout; the environment is re-seeded whenever an episode
/// ends early. `actor` returns the pre-squash sample and the executed action.
pub fn rollout_trajectory(
    env: &mut Env,
    len: usize,
    domain_rand: bool,
    seed: u64,
    with_obs: bool,
    mut actor: impl FnMut(&RobotState, &TrackMap, Option<&Observation>) -> Result<([f32; 2], Action), IlError>,
    mut on_reset: impl FnMut(),
) -> Result<Trajectory, IlError> {
    env.set_max_steps(len);
    let mut resets = 0u64;
    let (mut state, _) = env.reset(MapChoice::Random, domain_rand, derive_seed(seed, ROLLOUT_STREAM, resets))?;
    on_reset();
    let mut t = Trajectory::default();
    for step in 0..len {
        let track = env.track()?.clone();
        let obs = if with_obs { Some(env.observe()?) } else { None };
        let (u, action) = actor(&state, &track, obs.as_ref())?;
        if let Some(o) = obs {
            t.obs.extend_from_slice(o.as_slice());
        }
        t.pre_squash.push(u);
        t.actions.push([action.throttle as f32, action.steering as f32]);
        let r = env.step(action_to_pwm(action))?;
        state = r.state;
        if r.done && step + 1 < len {
            resets += 1;
            state = env
                .reset(MapChoice::Random, domain_rand, derive_seed(seed, ROLLOUT_STREAM, resets))?
                .0;
            on_reset();
        }
    }
    Ok(t)
}

/// Rollout of the Gaussian policy: pre-squash values are drawn around the
/// network output with the learned standard deviation.
pub fn stochastic_rollout(
    env: &mut Env,
    policy: &PolicyNet<f32>,
    len: usize,
    domain_rand: bool,
    seed: u64,
) -> Result<Trajectory, IlError> {
    let mut noise = ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM, 0));
    let std = policy.log_std_values().map(f64::exp);
    let c = policy.config;
    rollout_trajectory(
        env,
        len,
        domain_rand,
        seed,
        true,
        |_, _, obs| {
            let obs = obs.expect("rendered");
            let z = policy.forward(&obs_to_chw(obs.as_slice(), c.in_height, c.in_width, c.in_channels))?;
            let u = [
                z[0] + (std[0] * noise.sample::<f64, _>(StandardNormal)) as f32,
                z[1] + (std[1] * noise.sample::<f64, _>(StandardNormal)) as f32,
            ];
            let a = squash(u);
            Ok((u, Action::new(f64::from(a[0]), f64::from(a[1]))))
        },
        || {},
    )
}

fn disc_input(disc: &Discriminator<f32>, obs: &[f32]) -> Vec<f32> {
    let c = &disc.config;
    obs_to_chw(obs, c.in_height, c.in_width, c.in_channels)
}

fn params_of<M: Parameterized<f32>>(m: &M) -> Vec<&Tensor<f32>> {
    m.named_params().into_iter().map(|(_, t)| t).collect()
}

/// Adversarial imitation: each epoch adds fresh stochastic rollouts to the
/// replay buffer, trains the discriminator to separate expert pairs from
/// buffered agent pairs, then takes likelihood-ratio policy-gradient steps
/// on the fresh rollouts with reward `-log(1 - D)` and a running baseline.
#[allow(clippy::too_many_arguments)]
pub fn train_gail(
    maps: &[Arc<TrackMap>],
    domain_rand: &DomainRandomization,
    expert: &Dataset,
    policy: &mut PolicyNet<f32>,
    disc: &mut Discriminator<f32>,
    buffer: &mut ReplayBuffer,
    cfg: &GailConfig,
) -> Result<GailReport, IlError> {
    cfg.validate()?;
    let expert_idx: Vec<usize> = match expert.split() {
        Some(s) => s.train.clone(),
        None => (0..expert.len()).collect(),
    };
    if expert_idx.is_empty() {
        return Err(IlError::TooFewRecords(0));
    }
    let mut env = Env::new(maps.to_vec(), cfg.rollout_len, domain_rand.clone());
    let mut adam_p = AdamState::for_params(&params_of(policy), cfg.lr);
    let mut adam_d = AdamState::for_params(&params_of(disc), cfg.lr);
    let mut grads_p = policy.zero_grads();
    let mut grads_d = disc.zero_grads();
    let mut baseline: Option<f64> = None;
    let mut stats = Vec::with_capacity(cfg.epochs);
    let half = cfg.batch_size / 2;

    for epoch in 0..cfg.epochs {
        for r in 0..cfg.rollouts_per_epoch {
            let seed = derive_seed(cfg.seed, ROLLOUT_STREAM, (epoch * cfg.rollouts_per_epoch + r) as u64);
            buffer.push(stochastic_rollout(&mut env, policy, cfg.rollout_len, cfg.domain_rand, seed)?);
        }
        if buffer.is_empty() {
            return Err(IlError::BufferUnderflow);
        }
        let fresh_pairs = cfg.rollouts_per_epoch * cfg.rollout_len;

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, DISC_STREAM, epoch as u64));
        let (mut d_loss, mut d_right, mut d_seen) = (0.0, 0usize, 0usize);
        let batches = fresh_pairs.div_ceil(half);
        let buffered = buffer.pair_count();
        for _ in 0..cfg.disc_passes {
            for _ in 0..batches {
                grads_d.iter_mut().for_each(|g| g.fill(0.0));
                let scale = 1.0 / (2 * half) as f32;
                for k in 0..2 * half {
                    let is_expert = k < half;
                    let (x, a) = if is_expert {
                        let i = expert_idx[rng.gen_range(0..expert_idx.len())];
                        (disc_input(disc, expert.obs(i)), expert.action(i))
                    } else {
                        let (t, s) = buffer.locate(rng.gen_range(0..buffered))?;
                        if !t.has_obs() {
                            return Err(IlError::Format("buffered trajectory has no observations".into()));
                        }
                        (disc_input(disc, t.obs(s)), t.actions[s])
                    };
                    let y = if is_expert { 1.0 } else { 0.0 };
                    let tr = disc.forward_trace(&x, a)?;
                    let l = f64::from(tr.logit);
                    d_loss += softplus(l) - y * l;
                    d_right += usize::from((l > 0.0) == is_expert);
                    d_seen += 1;
                    disc.backward(&tr, (sigmoid(tr.logit) - y as f32) * scale, &mut grads_d);
                }
                adam_d.step(disc.params_mut(), &grads_d)?;
            }
        }

        let fresh: Vec<&Trajectory> = buffer.iter().rev().take(cfg.rollouts_per_epoch).collect();
        let mut samples: Vec<(usize, usize, f64)> = Vec::with_capacity(fresh_pairs);
        for (ti, t) in fresh.iter().enumerate() {
            for s in 0..t.len() {
                let l = disc.logit(&disc_input(disc, t.obs(s)), t.actions[s])?;
                samples.push((ti, s, gail_reward(f64::from(l), cfg.reward_clamp)));
            }
        }
        let mean_reward = samples.iter().map(|s| s.2).sum::<f64>() / samples.len() as f64;
        let mut b = baseline.unwrap_or(mean_reward);

        let mut prng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, POLICY_STREAM, epoch as u64));
        let c = policy.config;
        for _ in 0..cfg.policy_passes {
            rand::seq::SliceRandom::shuffle(samples.as_mut_slice(), &mut prng);
            for batch in samples.chunks(cfg.batch_size) {
                grads_p.iter_mut().for_each(|g| g.fill(0.0));
                let ls = policy.log_std_values();
                let var = ls.map(|v| (2.0 * v).exp());
                let scale = 1.0 / batch.len() as f64;
                let mut dls = [0.0f64; 2];
                for &(ti, s, reward) in batch {
                    let t = fresh[ti];
                    let x = obs_to_chw(t.obs(s), c.in_height, c.in_width, c.in_channels);
                    let tr = policy.forward_trace(&x)?;
                    let adv = reward - b;
                    let u = t.pre_squash[s];
                    let mut dz = [0.0f32; 2];
                    for i in 0..2 {
                        let diff = f64::from(u[i]) - f64::from(tr.z[i]);
                        // Ascend adv * log pi(u); the optimizer minimizes.
                        dz[i] = (-adv * scale * diff / var[i]) as f32;
                        dls[i] += -adv * scale * (diff * diff / var[i] - 1.0);
                    }
                    policy.backward(&tr, dz, &mut grads_p);
                }
                let mean_r = batch.iter().map(|s| s.2).sum::<f64>() * scale;
                grads_p[PolicyNet::<f32>::LOG_STD_INDEX]
                    .data_mut()
                    .copy_from_slice(&[dls[0] as f32, dls[1] as f32]);
                adam_p.step(policy.params_mut(), &grads_p)?;
                b += cfg.baseline_rate * (mean_r - b);
            }
        }
        baseline = Some(b);
        if !policy.all_finite() || !disc.all_finite() {
            return Err(IlError::NonFiniteParameter(epoch + 1));
        }
        stats.push(GailEpochStats {
            epoch: epoch + 1,
            disc_loss: d_loss / d_seen.max(1) as f64,
            disc_accuracy: d_right as f64 / d_seen.max(1) as f64,
            mean_reward,
            baseline: b,
            log_std: policy.log_std_values(),
            buffer_trajectories: buffer.len(),
        });
    }
    Ok(GailReport {
        epochs_run: stats.len(),
        epochs: stats,
    })
}
