use std::collections::VecDeque;

use super::IlError;
use crate::render::OBS_LEN;

/// A fixed-length stretch of agent experience. `obs` is empty when the
/// rollout was run without rendering.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub obs: Vec<f32>,
    /// Sampled Gaussian values before squashing.
    pub pre_squash: Vec<[f32; 2]>,
    /// Squashed actions actually executed.
    pub actions: Vec<[f32; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn has_obs(&self) -> bool {
        self.obs.len() == self.actions.len() * OBS_LEN
    }

    pub fn obs(&self, i: usize) -> &[f32] {
        &self.obs[i * OBS_LEN..(i + 1) * OBS_LEN]
    }
}

/// Ring of whole trajectories; the oldest is evicted first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    trajectories: VecDeque<Trajectory>,
    offered: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            trajectories: VecDeque::with_capacity(capacity),
            offered: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored trajectories.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Trajectories offered since creation, including evicted ones.
    pub fn offered(&self) -> usize {
        self.offered
    }

    pub fn pair_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Stores `t`, returning the trajectory it displaced, if any.
    pub fn push(&mut self, t: Trajectory) -> Option<Trajectory> {
        self.offered += 1;
        if self.capacity == 0 {
            return Some(t);
        }
        let evicted = if self.trajectories.len() == self.capacity {
            self.trajectories.pop_front()
        } else {
            None
        };
        self.trajectories.push_back(t);
        evicted
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &Trajectory> {
        self.trajectories.iter()
    }

    /// The `k`-th stored pair in age order, as (trajectory, step).
    pub fn locate(&self, mut k: usize) -> Result<(&Trajectory, usize), IlError> {
        for t in &self.trajectories {
            if k < t.len() {
                return Ok((t, k));
            }
            k -= t.len();
        }
        Err(IlError::BufferUnderflow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(tag: f32, len: usize) -> Trajectory {
        Trajectory {
            obs: Vec::new(),
            pre_squash: vec![[tag, 0.0]; len],
            actions: vec![[0.5, tag.tanh()]; len],
        }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(75);
        for i in 0..90 {
            let ev = b.push(traj(i as f32, 256));
            if i < 75 {
                assert!(ev.is_none());
            } else {
                assert_eq!(ev.unwrap().pre_squash[0][0], (i - 75) as f32);
            }
        }
        assert_eq!(b.len(), 75);
        assert_eq!(b.pair_count(), 19200);
        assert_eq!(b.iter().next().unwrap().pre_squash[0][0], 15.0);
        assert_eq!(b.offered(), 90);
    }

    #[test]
    fn locate_walks_trajectories() {
        let mut b = ReplayBuffer::new(3);
        assert!(matches!(b.locate(0), Err(IlError::BufferUnderflow)));
        b.push(traj(1.0, 2));
        b.push(traj(2.0, 3));
        let (t, i) = b.locate(3).unwrap();
        assert_eq!((t.pre_squash[0][0], i), (2.0, 1));
        assert!(b.locate(5).is_err());
    }
}
