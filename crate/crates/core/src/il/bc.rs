use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::{derive_seed, IlError};
use crate::nn::{obs_to_chw, squash, AdamState, Parameterized, PolicyNet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            lr: 1e-4,
            batch_size: 32,
            patience: 25,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<(), IlError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(IlError::InvalidConfig("lr"));
        }
        if self.batch_size == 0 {
            return Err(IlError::InvalidConfig("batch_size"));
        }
        if self.patience == 0 {
            return Err(IlError::InvalidConfig("patience"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// `None` for the pre-training evaluation at epoch 0.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub loss_history: Vec<EpochLoss>,
    pub stopped_early: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopVerdict {
    Improved,
    Continue,
    Stop,
}

/// Patience counter over validation losses.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, initial: f64) -> Self {
        EarlyStopping {
            patience,
            best: initial,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopVerdict {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            StopVerdict::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                StopVerdict::Stop
            } else {
                StopVerdict::Continue
            }
        }
    }
}

/// Per-sample loss (mean squared error over the two squashed action
/// components) and its gradient with respect to the pre-squash outputs.
pub fn action_loss(z: [f32; 2], target: [f32; 2]) -> (f64, [f32; 2]) {
    let a = squash(z);
    let e = [a[0] - target[0], a[1] - target[1]];
    let loss = 0.5 * (f64::from(e[0]).powi(2) + f64::from(e[1]).powi(2));
    (loss, [e[0] * a[0] * (1.0 - a[0]), e[1] * (1.0 - a[1] * a[1])])
}

fn input_of(net: &PolicyNet<f32>, ds: &Dataset, i: usize) -> Vec<f32> {
    let c = &net.config;
    obs_to_chw(ds.obs(i), c.in_height, c.in_width, c.in_channels)
}

pub(crate) fn mean_loss(net: &PolicyNet<f32>, ds: &Dataset, idx: &[usize]) -> Result<f64, IlError> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &i in idx {
        let z = net.forward(&input_of(net, ds, i))?;
        total += action_loss(z, ds.action(i)).0;
    }
    Ok(total / idx.len() as f64)
}

/// One pass over `idx` in shuffled minibatches; returns the mean training
/// loss.
pub(crate) fn train_epoch(
    net: &mut PolicyNet<f32>,
    adam: &mut AdamState<f32>,
    grads: &mut [Tensor<f32>],
    ds: &Dataset,
    idx: &mut [usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, IlError> {
    idx.shuffle(rng);
    let mut total = 0.0;
    for batch in idx.chunks(batch_size) {
        grads.iter_mut().for_each(|g| g.fill(0.0));
        let scale = 1.0 / batch.len() as f32;
        for &i in batch {
            let tr = net.forward_trace(&input_of(net, ds, i))?;
            let (loss, dz) = action_loss(tr.z, ds.action(i));
            total += loss;
            net.backward(&tr, [dz[0] * scale, dz[1] * scale], grads);
        }
        // The log-std head is not part of the regression objective.
        grads[PolicyNet::<f32>::LOG_STD_INDEX].fill(0.0);
        adam.step(net.params_mut(), grads)?;
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Supervised regression onto the demonstrated actions with early stopping
/// on the validation split. `net` is left at the best checkpoint, which may
/// be the untouched initial weights.
pub fn train_bc(ds: &Dataset, net: &mut PolicyNet<f32>, cfg: &BcConfig) -> Result<TrainReport, IlError> {
    cfg.validate()?;
    let split = ds.split().ok_or(IlError::NoSplit)?;
    let mut train_idx = split.train.clone();
    let val_idx = &split.val;
    let initial = mean_loss(net, ds, val_idx)?;
    let mut history = vec![EpochLoss {
        epoch: 0,
        train_loss: None,
        val_loss: initial,
    }];
    let mut stopper = EarlyStopping::new(cfg.patience, initial);
    let mut best = net.clone();
    let mut adam = AdamState::for_params(
        &net.named_params().iter().map(|(_, t)| *t).collect::<Vec<_>>(),
        cfg.lr,
    );
    let mut grads = net.zero_grads();
    let mut stopped_early = false;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xBC, epoch as u64));
        let train_loss = train_epoch(net, &mut adam, &mut grads, ds, &mut train_idx, cfg.batch_size, &mut rng)?;
        if !net.all_finite() {
            return Err(IlError::NonFiniteParameter(epoch));
        }
        let val_loss = mean_loss(net, ds, val_idx)?;
        history.push(EpochLoss {
            epoch,
            train_loss: Some(train_loss),
            val_loss,
        });
        epochs_run = epoch;
        match stopper.observe(epoch, val_loss) {
            StopVerdict::Improved => best = net.clone(),
            StopVerdict::Continue => {}
            StopVerdict::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    *net = best;
    Ok(TrainReport {
        epochs_run,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        loss_history: history,
        stopped_early,
    })
}
