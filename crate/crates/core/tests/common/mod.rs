//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use laneforge::nn::{gaussian_log_prob, squash, Discriminator, NetConfig, Parameterized, PolicyNet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn tiny_config(rng: &mut impl Rng) -> NetConfig {
    NetConfig {
        in_channels: 3,
        in_height: rng.gen_range(8..=14),
        in_width: rng.gen_range(8..=16),
        conv1_channels: rng.gen_range(2..=3),
        conv2_channels: rng.gen_range(2..=3),
        kernel: 5,
        stride: 2,
        hidden1: rng.gen_range(4..=8),
        hidden2: rng.gen_range(3..=6),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates where a +-h step flips a ReLU, so the function is not
    /// differentiable within the stencil.
    pub skipped_kinks: usize,
}

impl GradCheck {
    pub fn merge(&mut self, o: GradCheck) {
        self.max_rel_err = self.max_rel_err.max(o.max_rel_err);
        self.checked += o.checked;
        self.skipped_kinks += o.skipped_kinks;
    }
}

/// |a - n| / max(|a|, |n|), with an absolute floor for gradients that are
/// zero to rounding.
pub fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-7 {
        (a - n).abs() / 1e-7
    } else {
        (a - n).abs() / scale
    }
}

fn check_module<M: Parameterized<f64> + Clone>(
    module: &M,
    analytic: &[Tensor<f64>],
    eval: impl Fn(&M) -> (f64, Vec<bool>),
) -> GradCheck {
    let (_, base_pattern) = eval(module);
    let mut out = GradCheck::default();
    let mut probe = module.clone();
    let n_tensors = analytic.len();
    for ti in 0..n_tensors {
        for j in 0..analytic[ti].len() {
            let orig = probe.params_mut()[ti].data()[j];
            probe.params_mut()[ti].data_mut()[j] = orig + FD_STEP;
            let (lp, pp) = eval(&probe);
            probe.params_mut()[ti].data_mut()[j] = orig - FD_STEP;
            let (lm, pm) = eval(&probe);
            probe.params_mut()[ti].data_mut()[j] = orig;
            if pp != base_pattern || pm != base_pattern {
                out.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            out.max_rel_err = out.max_rel_err.max(rel_err(analytic[ti].data()[j], numeric));
            out.checked += 1;
        }
    }
    out
}

/// Scalar loss touching both squashed heads and the Gaussian log density.
fn policy_loss(net: &PolicyNet<f64>, input: &[f64], c: [f64; 3], u: [f64; 2]) -> (f64, Vec<bool>) {
    let tr = net.forward_trace(input).unwrap();
    let a = squash(tr.z);
    let lp = gaussian_log_prob(u, tr.z, net.log_std_values());
    (c[0] * a[0] + c[1] * a[1] + c[2] * lp, tr.relu_pattern())
}

pub fn check_policy(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = tiny_config(&mut rng);
    let mut net = PolicyNet::<f64>::new(cfg, rng.gen());
    for b in net.params_mut() {
        for v in b.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let input: Vec<f64> = (0..cfg.input_len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let c = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2)];
    let u = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];

    let tr = net.forward_trace(&input).unwrap();
    let z = tr.z;
    let a = squash(z);
    let ls = net.log_std_values();
    let mut dz = [0.0; 2];
    let mut dls = [0.0; 2];
    let da = [a[0] * (1.0 - a[0]), 1.0 - a[1] * a[1]];
    for i in 0..2 {
        let var = (2.0 * ls[i]).exp();
        dz[i] = c[i] * da[i] + c[2] * (u[i] - z[i]) / var;
        dls[i] = c[2] * ((u[i] - z[i]).powi(2) / var - 1.0);
    }
    let mut grads = net.zero_grads();
    net.backward(&tr, dz, &mut grads);
    grads[PolicyNet::<f64>::LOG_STD_INDEX].data_mut().copy_from_slice(&dls);
    check_module(&net, &grads, |m| policy_loss(m, &input, c, u))
}

pub fn check_discriminator(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD15C);
    let cfg = tiny_config(&mut rng);
    let mut disc = Discriminator::<f64>::new(cfg, rng.gen());
    for b in disc.params_mut() {
        for v in b.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let input: Vec<f64> = (0..cfg.input_len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let action = [rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0)];
    let label = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
    let bce = |l: f64| laneforge::nn::softplus(l) - label * l;
    let tr = disc.forward_trace(&input, action).unwrap();
    let mut grads = disc.zero_grads();
    disc.backward(&tr, laneforge::nn::sigmoid(tr.logit) - label, &mut grads);
    check_module(&disc, &grads, |d| {
        let tr = d.forward_trace(&input, action).unwrap();
        (bce(tr.logit), tr.relu_pattern())
    })
}
