//! Run configuration: one TOML file with a section per component.
//!
//! ```toml
//! seed = 1
//! threads = 1
//!
//! [sim]
//! maps = ["small_loop", "loop_obstacles_free", "zigzag"]
//! holdout_maps = ["holdout_loop"]
//! episode_steps = 450
//!
//! [collect]
//! episodes = 16
//! steps_per_episode = 512
//!
//! [bc]
//! lr = 0.0001
//! batch_size = 32
//! patience = 25
//! max_epochs = 12
//! ```
//!
//! Omitted sections and keys take the desk-scale defaults. The remaining
//! sections are `[domain_rand]`, `[expert]`, `[net]`, `[dagger]`, `[gail]`
//! and `[eval]`; see [`RunConfig`] for their fields.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expert::PurePursuitConfig;
use crate::il::{derive_seed, BcConfig, CollectConfig, DaggerConfig, GailConfig};
use crate::nn::NetConfig;
use crate::sim::{load_map, DomainRandomization, SimError, TrackMap, HOLDOUT_MAP, TRAINING_MAPS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Bundled map names or map file paths used for collection and training.
    pub maps: Vec<String>,
    /// Maps reserved for generalization checks.
    pub holdout_maps: Vec<String>,
    pub episode_steps: i64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            maps: TRAINING_MAPS.iter().map(|s| s.to_string()).collect(),
            holdout_maps: vec![HOLDOUT_MAP.to_string()],
            episode_steps: 450,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectSection {
    pub episodes: i64,
    pub steps_per_episode: i64,
}

impl Default for CollectSection {
    fn default() -> Self {
        CollectSection {
            episodes: 16,
            steps_per_episode: 512,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcSection {
    pub lr: f64,
    pub batch_size: i64,
    pub patience: i64,
    pub max_epochs: i64,
}

impl Default for BcSection {
    fn default() -> Self {
        BcSection {
            lr: 1e-4,
            batch_size: 32,
            patience: 25,
            max_epochs: 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaggerSection {
    pub iterations: i64,
    pub episodes_per_iter: i64,
    pub steps_per_episode: i64,
}

impl Default for DaggerSection {
    fn default() -> Self {
        DaggerSection {
            iterations: 2,
            episodes_per_iter: 4,
            steps_per_episode: 512,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GailSection {
    pub epochs: i64,
    pub rollouts_per_epoch: i64,
    pub rollout_len: i64,
    pub buffer_capacity: i64,
    pub disc_passes: i64,
    pub policy_passes: i64,
    pub batch_size: i64,
    pub lr: f64,
    pub baseline_rate: f64,
    pub reward_clamp: f64,
}

impl Default for GailSection {
    fn default() -> Self {
        GailSection {
            epochs: 10,
            rollouts_per_epoch: 4,
            rollout_len: 64,
            buffer_capacity: 20,
            disc_passes: 4,
            policy_passes: 4,
            batch_size: 32,
            lr: 1e-4,
            baseline_rate: 0.1,
            reward_clamp: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub episodes: i64,
    pub seeds: Vec<u64>,
    /// Evaluate on the holdout maps instead of the training maps.
    pub holdout: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 5,
            seeds: vec![1, 2, 3, 4, 5],
            holdout: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Parallel environment instances for demonstration collection.
    pub threads: i64,
    pub sim: SimSection,
    pub domain_rand: DomainRandomization,
    pub expert: PurePursuitConfig,
    pub net: NetConfig,
    pub collect: CollectSection,
    pub bc: BcSection,
    pub dagger: DaggerSection,
    pub gail: GailSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn count(field: &str, v: i64, min: i64) -> Result<usize, ConfigError> {
    if v < min {
        return Err(invalid(field, format!("must be at least {min}, got {v}")));
    }
    Ok(v as usize)
}

impl RunConfig {
    /// Small budgets that run on a single laptop core.
    pub fn desk() -> Self {
        RunConfig {
            seed: 1,
            threads: 1,
            sim: SimSection::default(),
            domain_rand: DomainRandomization::default(),
            expert: PurePursuitConfig::default(),
            net: NetConfig::default(),
            collect: CollectSection::default(),
            bc: BcSection::default(),
            dagger: DaggerSection::default(),
            gail: GailSection::default(),
            eval: EvalSection::default(),
        }
    }

    /// Full budgets: 128 demonstration episodes of 768 steps, 128 DAgger
    /// episodes of 512 steps, and 30 GAIL epochs of 15 rollouts of 256 steps
    /// into a 75-trajectory buffer.
    pub fn full() -> Self {
        RunConfig {
            collect: CollectSection {
                episodes: 128,
                steps_per_episode: 768,
            },
            bc: BcSection {
                max_epochs: 1000,
                ..BcSection::default()
            },
            dagger: DaggerSection {
                iterations: 4,
                episodes_per_iter: 32,
                steps_per_episode: 512,
            },
            gail: GailSection {
                epochs: 30,
                rollouts_per_epoch: 15,
                rollout_len: 256,
                buffer_capacity: 75,
                ..GailSection::default()
            },
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks every field against the owning component's invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        count("threads", self.threads, 1)?;
        if self.sim.maps.is_empty() {
            return Err(invalid("sim.maps", "at least one map is required"));
        }
        count("sim.episode_steps", self.sim.episode_steps, 1)?;
        self.domain_rand
            .validate()
            .map_err(|e| invalid(&format!("domain_rand.{}", sim_field(&e)), e.to_string()))?;
        self.expert
            .validate()
            .map_err(|e| match e {
                crate::expert::ExpertError::InvalidConfig(f) => invalid(&format!("expert.{f}"), "out of range"),
                other => invalid("expert", other.to_string()),
            })?;
        self.net
            .validate()
            .map_err(|f| invalid(&format!("net.{f}"), "must be positive (kernel odd)"))?;
        count("collect.episodes", self.collect.episodes, 0)?;
        count("collect.steps_per_episode", self.collect.steps_per_episode, 1)?;
        if !(self.bc.lr > 0.0 && self.bc.lr.is_finite()) {
            return Err(invalid("bc.lr", "must be positive"));
        }
        count("bc.batch_size", self.bc.batch_size, 1)?;
        count("bc.patience", self.bc.patience, 1)?;
        count("bc.max_epochs", self.bc.max_epochs, 0)?;
        count("dagger.iterations", self.dagger.iterations, 0)?;
        count("dagger.episodes_per_iter", self.dagger.episodes_per_iter, 1)?;
        count("dagger.steps_per_episode", self.dagger.steps_per_episode, 1)?;
        let g = &self.gail;
        count("gail.epochs", g.epochs, 0)?;
        count("gail.rollouts_per_epoch", g.rollouts_per_epoch, 1)?;
        count("gail.rollout_len", g.rollout_len, 1)?;
        count("gail.buffer_capacity", g.buffer_capacity, g.rollouts_per_epoch.max(1))?;
        count("gail.disc_passes", g.disc_passes, 0)?;
        count("gail.policy_passes", g.policy_passes, 0)?;
        count("gail.batch_size", g.batch_size, 2)?;
        if !(g.lr > 0.0 && g.lr.is_finite()) {
            return Err(invalid("gail.lr", "must be positive"));
        }
        if !(g.baseline_rate > 0.0 && g.baseline_rate <= 1.0) {
            return Err(invalid("gail.baseline_rate", "must be in (0, 1]"));
        }
        if !(g.reward_clamp > 0.0 && g.reward_clamp.is_finite()) {
            return Err(invalid("gail.reward_clamp", "must be positive"));
        }
        count("eval.episodes", self.eval.episodes, 1)?;
        if self.eval.seeds.len() != self.eval.episodes as usize {
            return Err(invalid(
                "eval.seeds",
                format!("expected {} seeds, got {}", self.eval.episodes, self.eval.seeds.len()),
            ));
        }
        Ok(())
    }

    pub fn load_maps(&self) -> Result<Vec<Arc<TrackMap>>, SimError> {
        self.sim.maps.iter().map(|m| load_map(m).map(Arc::new)).collect()
    }

    pub fn load_holdout_maps(&self) -> Result<Vec<Arc<TrackMap>>, SimError> {
        self.sim.holdout_maps.iter().map(|m| load_map(m).map(Arc::new)).collect()
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            episodes: self.collect.episodes as usize,
            steps_per_episode: self.collect.steps_per_episode as usize,
            domain_rand: self.domain_rand.enabled,
            seed: derive_seed(self.seed, 0xC0, 0),
            threads: self.threads as usize,
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, 0x5B, 0)
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, 0x1A, 0)
    }

    pub fn bc_config(&self) -> BcConfig {
        BcConfig {
            lr: self.bc.lr,
            batch_size: self.bc.batch_size as usize,
            patience: self.bc.patience as usize,
            max_epochs: self.bc.max_epochs as usize,
            seed: derive_seed(self.seed, 0xBC, 0),
        }
    }

    pub fn dagger_config(&self) -> DaggerConfig {
        DaggerConfig {
            iterations: self.dagger.iterations as usize,
            episodes_per_iter: self.dagger.episodes_per_iter as usize,
            steps_per_episode: self.dagger.steps_per_episode as usize,
            domain_rand: self.domain_rand.enabled,
            seed: derive_seed(self.seed, 0xDA, 0),
        }
    }

    pub fn gail_config(&self) -> GailConfig {
        let g = &self.gail;
        GailConfig {
            epochs: g.epochs as usize,
            rollouts_per_epoch: g.rollouts_per_epoch as usize,
            rollout_len: g.rollout_len as usize,
            buffer_capacity: g.buffer_capacity as usize,
            disc_passes: g.disc_passes as usize,
            policy_passes: g.policy_passes as usize,
            batch_size: g.batch_size as usize,
            lr: g.lr,
            baseline_rate: g.baseline_rate,
            reward_clamp: g.reward_clamp,
            domain_rand: self.domain_rand.enabled,
            seed: derive_seed(self.seed, 0x6A, 0),
        }
    }
}

fn sim_field(e: &SimError) -> &'static str {
    match e {
        SimError::InvalidRange(f) | SimError::InvalidParam(f) => f,
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [RunConfig::desk(), RunConfig::full()] {
            cfg.validate().unwrap();
            let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        assert_ne!(RunConfig::desk().hash(), RunConfig::full().hash());
    }

    #[test]
    fn empty_file_is_the_desk_preset() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::desk());
    }

    #[test]
    fn negative_patience_names_the_field() {
        let err = RunConfig::from_toml("[bc]\npatience = -1\n").unwrap_err();
        assert!(err.to_string().contains("patience"), "{err}");
        assert!(matches!(err, ConfigError::Invalid { .. }));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[bc]\npatiense = 3\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn nested_field_errors() {
        let err = RunConfig::from_toml("[expert]\nv_curve = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("expert.v_curve"), "{err}");
        let err = RunConfig::from_toml("[eval]\nepisodes = 3\n").unwrap_err();
        assert!(err.to_string().contains("eval.seeds"), "{err}");
        let err = RunConfig::from_toml("[domain_rand.light_intensity]\nlo = 2.0\nhi = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("light_intensity"), "{err}");
    }

    #[test]
    fn full_budgets() {
        let p = RunConfig::full();
        let c = p.collect_config();
        assert_eq!(c.episodes * c.steps_per_episode, 98304);
        assert_eq!(c.episodes * c.steps_per_episode + p.dagger_config().collected_records(), 163840);
        assert_eq!(p.gail_config().buffer_pairs(), 19200);
    }
}
