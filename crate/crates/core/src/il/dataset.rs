use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::IlError;
use crate::render::{CHANNELS, OBS_HEIGHT, OBS_LEN, OBS_WIDTH};
use crate::sim::{Action, RobotState};

/// Where a record came from: the map index, the pose the robot had, and a
/// counter that changes at every environment reset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub reset_id: u32,
    pub map: usize,
    pub state: RobotState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub record_count: usize,
    pub obs_shape: [usize; 3],
    pub split_seed: Option<u64>,
    pub maps: Vec<String>,
    pub domain_rand: bool,
    pub seed: u64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub config_hash: Option<String>,
}

impl DatasetManifest {
    pub fn new(maps: Vec<String>, domain_rand: bool, seed: u64) -> Self {
        DatasetManifest {
            record_count: 0,
            obs_shape: [OBS_HEIGHT, OBS_WIDTH, CHANNELS],
            split_seed: None,
            maps,
            domain_rand,
            seed,
            episodes: 0,
            steps_per_episode: 0,
            config_hash: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Observation/action pairs stored as flat `f32` buffers in record order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    obs: Vec<f32>,
    actions: Vec<[f32; 2]>,
    origins: Vec<Origin>,
    split: Option<Split>,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest) -> Self {
        Dataset {
            manifest,
            obs: Vec::new(),
            actions: Vec::new(),
            origins: Vec::new(),
            split: None,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn reserve(&mut self, records: usize) {
        self.obs.reserve(records * OBS_LEN);
        self.actions.reserve(records);
    }

    /// Appends one record. Origins are kept only if every record has one.
    pub fn push(&mut self, obs: &[f32], action: Action, origin: Option<Origin>) -> Result<(), IlError> {
        if obs.len() != OBS_LEN {
            return Err(IlError::ObservationSize {
                expected: OBS_LEN,
                actual: obs.len(),
            });
        }
        if !action.is_valid() {
            return Err(IlError::InvalidAction {
                throttle: action.throttle,
                steering: action.steering,
            });
        }
        match origin {
            Some(o) if self.origins.len() == self.actions.len() => self.origins.push(o),
            _ => self.origins.clear(),
        }
        self.obs.extend_from_slice(obs);
        self.actions.push([action.throttle as f32, action.steering as f32]);
        self.manifest.record_count = self.actions.len();
        self.split = None;
        Ok(())
    }

    pub fn obs(&self, i: usize) -> &[f32] {
        &self.obs[i * OBS_LEN..(i + 1) * OBS_LEN]
    }

    pub fn action(&self, i: usize) -> [f32; 2] {
        self.actions[i]
    }

    pub fn origin(&self, i: usize) -> Option<&Origin> {
        self.origins.get(i)
    }

    pub fn has_origins(&self) -> bool {
        !self.actions.is_empty() && self.origins.len() == self.actions.len()
    }

    pub fn split(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    /// Uniform shuffle by `seed`; the first 80% (rounded) become training
    /// records.
    pub fn split_by_seed(&mut self, seed: u64) -> Result<&Split, IlError> {
        let n = self.len();
        if n < 5 {
            return Err(IlError::TooFewRecords(n));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (4 * n + 2) / 5;
        let val = idx.split_off(n_train);
        self.manifest.split_seed = Some(seed);
        Ok(self.split.insert(Split { train: idx, val }))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), IlError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| IlError::Format(e.to_string()))?;
        fs::write(dir.join("manifest.json"), manifest + "\n")?;
        let mut w = BufWriter::new(fs::File::create(dir.join("obs.f32"))?);
        for v in &self.obs {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(dir.join("act.f32"))?);
        for a in &self.actions {
            w.write_all(&a[0].to_le_bytes())?;
            w.write_all(&a[1].to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, IlError> {
        let dir = dir.as_ref();
        let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)
            .map_err(|e| IlError::Format(format!("manifest.json: {e}")))?;
        if manifest.obs_shape != [OBS_HEIGHT, OBS_WIDTH, CHANNELS] {
            return Err(IlError::Format(format!("unsupported obs_shape {:?}", manifest.obs_shape)));
        }
        let floats = |name: &str| -> Result<Vec<f32>, IlError> {
            let bytes = fs::read(dir.join(name))?;
            if bytes.len() % 4 != 0 {
                return Err(IlError::Format(format!("{name} length is not a multiple of 4")));
            }
            Ok(bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let obs = floats("obs.f32")?;
        let act = floats("act.f32")?;
        let n = manifest.record_count;
        if obs.len() != n * OBS_LEN || act.len() != n * 2 {
            return Err(IlError::Format(format!(
                "manifest says {n} records but files hold {} observations and {} actions",
                obs.len() / OBS_LEN,
                act.len() / 2
            )));
        }
        let actions: Vec<[f32; 2]> = act.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        for a in &actions {
            if !Action::new(f64::from(a[0]), f64::from(a[1])).is_valid()
                || !(0.0..=1.0).contains(&a[0])
                || !(-1.0..=1.0).contains(&a[1])
            {
                return Err(IlError::InvalidAction {
                    throttle: f64::from(a[0]),
                    steering: f64::from(a[1]),
                });
            }
        }
        let split_seed = manifest.split_seed;
        let mut ds = Dataset {
            manifest,
            obs,
            actions,
            origins: Vec::new(),
            split: None,
        };
        if let Some(seed) = split_seed {
            ds.split_by_seed(seed)?;
        }
        Ok(ds)
    }

    /// Appends every record of `other`, keeping origins only if both sides
    /// carry them.
    pub fn extend_from(&mut self, other: &Dataset) {
        let keep = (self.has_origins() || self.is_empty()) && other.has_origins();
        self.obs.extend_from_slice(&other.obs);
        self.actions.extend_from_slice(&other.actions);
        if keep {
            self.origins.extend_from_slice(&other.origins);
        } else {
            self.origins.clear();
        }
        self.manifest.record_count = self.actions.len();
        self.split = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let mut ds = Dataset::new(DatasetManifest::new(vec!["small_loop".into()], false, 0));
        for i in 0..n {
            let obs = vec![i as f32 / n as f32; OBS_LEN];
            ds.push(&obs, Action::new(0.5, -0.25), None).unwrap();
        }
        ds
    }

    #[test]
    fn ten_records_split_eight_two() {
        let mut ds = toy(10);
        let s = ds.split_by_seed(3).unwrap().clone();
        assert_eq!((s.train.len(), s.val.len()), (8, 2));
        let mut all: Vec<_> = s.train.iter().chain(&s.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(ds.split_by_seed(3).unwrap(), &s);
    }

    #[test]
    fn full_scale_split_size() {
        assert_eq!((4 * 98304 + 2) / 5, 78643);
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(toy(4).split_by_seed(0), Err(IlError::TooFewRecords(4))));
    }

    #[test]
    fn rejects_bad_records() {
        let mut ds = toy(0);
        assert!(matches!(
            ds.push(&[0.0; 3], Action::new(0.5, 0.0), None),
            Err(IlError::ObservationSize { .. })
        ));
        let bad = Action {
            throttle: 1.5,
            steering: 0.0,
        };
        assert!(matches!(ds.push(&vec![0.0; OBS_LEN], bad, None), Err(IlError::InvalidAction { .. })));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = toy(6);
        ds.split_by_seed(9).unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back.obs(5), ds.obs(5));
        assert_eq!(back.action(2), ds.action(2));
        assert_eq!(back.split(), ds.split());
        let bytes = std::fs::metadata(dir.path().join("act.f32")).unwrap().len();
        assert_eq!(bytes, 6 * 2 * 4);
    }
}
