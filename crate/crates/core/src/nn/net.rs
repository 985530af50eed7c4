use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{relu_backward, relu_inplace, sigmoid, Conv2d, Dense};
use super::tensor::{Scalar, Tensor};
use super::NnError;
use crate::render::{CHANNELS, OBS_HEIGHT, OBS_WIDTH};
use crate::sim::Action;

/// Starting log standard deviation of the stochastic policy head.
pub const INITIAL_LOG_STD: f64 = -1.6;

const HEAD_INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            in_channels: CHANNELS,
            in_height: OBS_HEIGHT,
            in_width: OBS_WIDTH,
            conv1_channels: 8,
            conv2_channels: 16,
            kernel: 5,
            stride: 2,
            hidden1: 128,
            hidden2: 64,
        }
    }
}

impl NetConfig {
    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let fields = [
            ("in_channels", self.in_channels),
            ("in_height", self.in_height),
            ("in_width", self.in_width),
            ("conv1_channels", self.conv1_channels),
            ("conv2_channels", self.conv2_channels),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("hidden1", self.hidden1),
            ("hidden2", self.hidden2),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(name);
            }
        }
        if self.kernel % 2 == 0 {
            return Err("kernel");
        }
        Ok(())
    }
}

/// Converts an HWC observation into the CHW layout the encoder consumes.
pub fn obs_to_chw<T: Scalar>(hwc: &[f32], height: usize, width: usize, channels: usize) -> Vec<T> {
    let mut out = vec![T::zero(); hwc.len()];
    for r in 0..height {
        for c in 0..width {
            for ch in 0..channels {
                out[(ch * height + r) * width + c] = T::of_f64(f64::from(hwc[(r * width + c) * channels + ch]));
            }
        }
    }
    out
}

/// Squashes pre-activation outputs into an action: sigmoid for throttle,
/// tanh for steering.
pub fn squash<T: Scalar>(z: [T; 2]) -> [T; 2] {
    [sigmoid(z[0]), z[1].tanh()]
}

/// Log density of `u` under a diagonal Gaussian.
pub fn gaussian_log_prob(u: [f64; 2], mean: [f64; 2], log_std: [f64; 2]) -> f64 {
    let half_ln_tau = 0.5 * std::f64::consts::TAU.ln();
    (0..2)
        .map(|i| {
            let z = (u[i] - mean[i]) / log_std[i].exp();
            -0.5 * z * z - log_std[i] - half_ln_tau
        })
        .sum()
}

/// Anything with an ordered, named list of trainable tensors.
pub trait Parameterized<T: Scalar> {
    fn named_params(&self) -> Vec<(&'static str, &Tensor<T>)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.named_params()
            .into_iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect()
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, t)| t.all_finite())
    }
}

/// Two strided conv layers with ReLU, flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
}

#[derive(Clone, Debug, Default)]
pub struct EncoderTrace<T> {
    cols1: Vec<T>,
    act1: Vec<T>,
    cols2: Vec<T>,
    /// Flattened post-ReLU features.
    pub features: Vec<T>,
}

impl<T: Scalar> EncoderTrace<T> {
    fn relu_pattern(&self, out: &mut Vec<bool>) {
        out.extend(self.act1.iter().chain(&self.features).map(|v| *v > T::zero()));
    }
}

impl<T: Scalar> Encoder<T> {
    fn new(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let conv1 = Conv2d::new(
            cfg.in_channels,
            cfg.conv1_channels,
            cfg.kernel,
            cfg.stride,
            cfg.in_height,
            cfg.in_width,
            rng,
            1.0,
        );
        let conv2 = Conv2d::new(
            cfg.conv1_channels,
            cfg.conv2_channels,
            cfg.kernel,
            cfg.stride,
            conv1.out_h,
            conv1.out_w,
            rng,
            1.0,
        );
        Encoder { conv1, conv2 }
    }

    pub fn feature_len(&self) -> usize {
        self.conv2.out_len()
    }

    pub fn forward(&self, input: &[T]) -> Result<EncoderTrace<T>, NnError> {
        let expected = self.conv1.in_channels * self.conv1.in_h * self.conv1.in_w;
        if input.len() != expected {
            return Err(NnError::ShapeMismatch {
                expected: vec![expected],
                actual: vec![input.len()],
            });
        }
        let mut tr = EncoderTrace::default();
        tr.act1 = self.conv1.forward(input, &mut tr.cols1);
        relu_inplace(&mut tr.act1);
        tr.features = self.conv2.forward(&tr.act1, &mut tr.cols2);
        relu_inplace(&mut tr.features);
        if !tr.features.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFiniteActivation("encoder"));
        }
        Ok(tr)
    }

    /// `grads` holds conv1 weight/bias then conv2 weight/bias.
    fn backward(&self, tr: &EncoderTrace<T>, mut dfeat: Vec<T>, grads: &mut [Tensor<T>]) {
        let [g1w, g1b, g2w, g2b] = grads else {
            unreachable!("encoder owns four tensors")
        };
        relu_backward(&tr.features, &mut dfeat);
        let mut dact1 = vec![T::zero(); tr.act1.len()];
        self.conv2
            .backward(&tr.cols2, &dfeat, g2w.data_mut(), g2b.data_mut(), Some(&mut dact1));
        relu_backward(&tr.act1, &mut dact1);
        self.conv1
            .backward(&tr.cols1, &dact1, g1w.data_mut(), g1b.data_mut(), None);
    }

    fn named<'a>(&'a self, out: &mut Vec<(&'static str, &'a Tensor<T>)>) {
        out.push(("conv1.weight", &self.conv1.weight));
        out.push(("conv1.bias", &self.conv1.bias));
        out.push(("conv2.weight", &self.conv2.weight));
        out.push(("conv2.bias", &self.conv2.bias));
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor<T>>) {
        out.push(&mut self.conv1.weight);
        out.push(&mut self.conv1.bias);
        out.push(&mut self.conv2.weight);
        out.push(&mut self.conv2.bias);
    }
}

/// Image-to-action network. `forward` yields pre-squash outputs; the
/// deterministic action is `squash` of them.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet<T> {
    pub config: NetConfig,
    pub encoder: Encoder<T>,
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
    pub head: Dense<T>,
    /// Log standard deviation of the Gaussian over pre-squash outputs.
    pub log_std: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct PolicyTrace<T> {
    encoder: EncoderTrace<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    /// Pre-squash outputs (throttle, steering).
    pub z: [T; 2],
}

impl<T: Scalar> PolicyTrace<T> {
    /// Which ReLU units were active, in layer order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        self.encoder.relu_pattern(&mut out);
        out.extend(self.h1.iter().chain(&self.h2).map(|v| *v > T::zero()));
        out
    }
}

impl<T: Scalar> PolicyNet<T> {
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(&config, &mut rng);
        let fc1 = Dense::new(encoder.feature_len(), config.hidden1, &mut rng, 1.0);
        let fc2 = Dense::new(config.hidden1, config.hidden2, &mut rng, 1.0);
        let head = Dense::new(config.hidden2, 2, &mut rng, HEAD_INIT_SCALE);
        let log_std = Tensor::new(vec![2], vec![T::of_f64(INITIAL_LOG_STD); 2]).expect("two entries");
        PolicyNet {
            config,
            encoder,
            fc1,
            fc2,
            head,
            log_std,
        }
    }

    pub fn forward_trace(&self, input: &[T]) -> Result<PolicyTrace<T>, NnError> {
        let encoder = self.encoder.forward(input)?;
        let mut h1 = self.fc1.forward(&encoder.features);
        relu_inplace(&mut h1);
        let mut h2 = self.fc2.forward(&h1);
        relu_inplace(&mut h2);
        let out = self.head.forward(&h2);
        let z = [out[0], out[1]];
        if !(z[0].is_finite() && z[1].is_finite()) {
            return Err(NnError::NonFiniteActivation("policy head"));
        }
        Ok(PolicyTrace { encoder, h1, h2, z })
    }

    pub fn forward(&self, input: &[T]) -> Result<[T; 2], NnError> {
        Ok(self.forward_trace(input)?.z)
    }

    /// Deterministic action for an HWC observation.
    pub fn act(&self, obs_hwc: &[f32]) -> Result<Action, NnError> {
        let c = &self.config;
        let input = obs_to_chw::<T>(obs_hwc, c.in_height, c.in_width, c.in_channels);
        let [t, s] = squash(self.forward(&input)?);
        Ok(Action::new(t.as_f64(), s.as_f64()))
    }

    pub fn log_std_values(&self) -> [f64; 2] {
        [self.log_std.data()[0].as_f64(), self.log_std.data()[1].as_f64()]
    }

    /// Accumulates parameter gradients given the loss gradient with respect
    /// to the pre-squash outputs. The log-std slot is left to the caller.
    pub fn backward(&self, tr: &PolicyTrace<T>, dz: [T; 2], grads: &mut [Tensor<T>]) {
        let (enc, rest) = grads.split_at_mut(4);
        let [f1w, f1b, f2w, f2b, hw, hb, _log_std] = rest else {
            unreachable!("policy owns eleven tensors")
        };
        let mut dh2 = vec![T::zero(); tr.h2.len()];
        self.head
            .backward(&tr.h2, &dz, hw.data_mut(), hb.data_mut(), Some(&mut dh2));
        relu_backward(&tr.h2, &mut dh2);
        let mut dh1 = vec![T::zero(); tr.h1.len()];
        self.fc2
            .backward(&tr.h1, &dh2, f2w.data_mut(), f2b.data_mut(), Some(&mut dh1));
        relu_backward(&tr.h1, &mut dh1);
        let mut dfeat = vec![T::zero(); tr.encoder.features.len()];
        self.fc1.backward(
            &tr.encoder.features,
            &dh1,
            f1w.data_mut(),
            f1b.data_mut(),
            Some(&mut dfeat),
        );
        self.encoder.backward(&tr.encoder, dfeat, enc);
    }

    /// Index of the log-std tensor in `named_params` order.
    pub const LOG_STD_INDEX: usize = 10;
}

impl<T: Scalar> Parameterized<T> for PolicyNet<T> {
    fn named_params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut out = Vec::with_capacity(11);
        self.encoder.named(&mut out);
        out.push(("fc1.weight", &self.fc1.weight));
        out.push(("fc1.bias", &self.fc1.bias));
        out.push(("fc2.weight", &self.fc2.weight));
        out.push(("fc2.bias", &self.fc2.bias));
        out.push(("head.weight", &self.head.weight));
        out.push(("head.bias", &self.head.bias));
        out.push(("log_std", &self.log_std));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(11);
        self.encoder.params_mut(&mut out);
        out.push(&mut self.fc1.weight);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weight);
        out.push(&mut self.fc2.bias);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out.push(&mut self.log_std);
        out
    }
}

/// Binary classifier over (observation, action) pairs; outputs a logit where
/// positive means "expert".
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub config: NetConfig,
    pub encoder: Encoder<T>,
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
    pub out: Dense<T>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorTrace<T> {
    encoder: EncoderTrace<T>,
    joint: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    pub logit: T,
}

impl<T: Scalar> DiscriminatorTrace<T> {
    /// Which ReLU units were active, in layer order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        self.encoder.relu_pattern(&mut out);
        out.extend(self.h1.iter().chain(&self.h2).map(|v| *v > T::zero()));
        out
    }
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(&config, &mut rng);
        let fc1 = Dense::new(encoder.feature_len() + 2, config.hidden1, &mut rng, 1.0);
        let fc2 = Dense::new(config.hidden1, config.hidden2, &mut rng, 1.0);
        let out = Dense::new(config.hidden2, 1, &mut rng, HEAD_INIT_SCALE);
        Discriminator {
            config,
            encoder,
            fc1,
            fc2,
            out,
        }
    }

    pub fn forward_trace(&self, input: &[T], action: [T; 2]) -> Result<DiscriminatorTrace<T>, NnError> {
        let encoder = self.encoder.forward(input)?;
        let mut joint = encoder.features.clone();
        joint.extend_from_slice(&action);
        let mut h1 = self.fc1.forward(&joint);
        relu_inplace(&mut h1);
        let mut h2 = self.fc2.forward(&h1);
        relu_inplace(&mut h2);
        let logit = self.out.forward(&h2)[0];
        if !logit.is_finite() {
            return Err(NnError::NonFiniteActivation("discriminator"));
        }
        Ok(DiscriminatorTrace {
            encoder,
            joint,
            h1,
            h2,
            logit,
        })
    }

    pub fn logit(&self, input: &[T], action: [T; 2]) -> Result<T, NnError> {
        Ok(self.forward_trace(input, action)?.logit)
    }

    pub fn backward(&self, tr: &DiscriminatorTrace<T>, dlogit: T, grads: &mut [Tensor<T>]) {
        let (enc, rest) = grads.split_at_mut(4);
        let [f1w, f1b, f2w, f2b, ow, ob] = rest else {
            unreachable!("discriminator owns ten tensors")
        };
        let mut dh2 = vec![T::zero(); tr.h2.len()];
        self.out
            .backward(&tr.h2, &[dlogit], ow.data_mut(), ob.data_mut(), Some(&mut dh2));
        relu_backward(&tr.h2, &mut dh2);
        let mut dh1 = vec![T::zero(); tr.h1.len()];
        self.fc2
            .backward(&tr.h1, &dh2, f2w.data_mut(), f2b.data_mut(), Some(&mut dh1));
        relu_backward(&tr.h1, &mut dh1);
        let mut djoint = vec![T::zero(); tr.joint.len()];
        self.fc1
            .backward(&tr.joint, &dh1, f1w.data_mut(), f1b.data_mut(), Some(&mut djoint));
        djoint.truncate(tr.encoder.features.len());
        self.encoder.backward(&tr.encoder, djoint, enc);
    }
}

impl<T: Scalar> Parameterized<T> for Discriminator<T> {
    fn named_params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut out = Vec::with_capacity(10);
        self.encoder.named(&mut out);
        out.push(("fc1.weight", &self.fc1.weight));
        out.push(("fc1.bias", &self.fc1.bias));
        out.push(("fc2.weight", &self.fc2.weight));
        out.push(("fc2.bias", &self.fc2.bias));
        out.push(("out.weight", &self.out.weight));
        out.push(("out.bias", &self.out.bias));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(10);
        self.encoder.params_mut(&mut out);
        out.push(&mut self.fc1.weight);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weight);
        out.push(&mut self.fc2.bias);
        out.push(&mut self.out.weight);
        out.push(&mut self.out.bias);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetConfig {
        NetConfig {
            in_channels: 3,
            in_height: 12,
            in_width: 16,
            conv1_channels: 2,
            conv2_channels: 3,
            kernel: 5,
            stride: 2,
            hidden1: 8,
            hidden2: 6,
        }
    }

    #[test]
    fn zero_network_outputs_midpoint_action() {
        let mut net = PolicyNet::<f32>::new(NetConfig::default(), 1);
        for p in net.params_mut() {
            p.fill(0.0);
        }
        let obs = vec![0.37f32; crate::render::OBS_LEN];
        let a = net.act(&obs).unwrap();
        assert_eq!(a.throttle, 0.5);
        assert_eq!(a.steering, 0.0);
    }

    #[test]
    fn actions_stay_in_range_for_extreme_weights() {
        let mut net = PolicyNet::<f64>::new(tiny(), 2);
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v *= 50.0);
        }
        let input = vec![1.0; tiny().input_len()];
        let a = net.act(&vec![1.0f32; tiny().input_len()]).unwrap();
        assert!((0.0..=1.0).contains(&a.throttle) && (-1.0..=1.0).contains(&a.steering));
        assert!(net.forward(&input).is_ok());
    }

    #[test]
    fn chw_conversion_moves_channels_to_planes() {
        let hwc: Vec<f32> = (0..2 * 3 * 3).map(|v| v as f32).collect();
        let chw: Vec<f32> = obs_to_chw(&hwc, 2, 3, 3);
        assert_eq!(&chw[..6], &[0.0, 3.0, 6.0, 9.0, 12.0, 15.0]);
        assert_eq!(chw[6], 1.0);
    }

    #[test]
    fn seeded_init_is_reproducible_and_precision_independent() {
        let a = PolicyNet::<f32>::new(tiny(), 9);
        let b = PolicyNet::<f32>::new(tiny(), 9);
        assert_eq!(a, b);
        let c = PolicyNet::<f64>::new(tiny(), 9);
        let wa = a.fc1.weight.data()[3];
        assert_eq!(wa, c.fc1.weight.data()[3] as f32);
        assert_ne!(PolicyNet::<f32>::new(tiny(), 10), a);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let net = PolicyNet::<f32>::new(tiny(), 0);
        assert!(matches!(net.forward(&[0.0; 5]), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let net = PolicyNet::<f64>::new(tiny(), 4);
        let tr = net.forward_trace(&vec![0.5; tiny().input_len()]).unwrap();
        let mut grads = net.zero_grads();
        net.backward(&tr, [0.0, 0.0], &mut grads);
        assert!(grads.iter().all(|g| g.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn gaussian_density_peaks_at_mean() {
        let ls = [-1.0, -0.5];
        let at_mean = gaussian_log_prob([0.2, 0.1], [0.2, 0.1], ls);
        let off = gaussian_log_prob([0.3, 0.1], [0.2, 0.1], ls);
        assert!(at_mean > off);
        let expect = -(-1.0f64) - (-0.5) - std::f64::consts::TAU.ln();
        assert!((at_mean - expect).abs() < 1e-12);
    }

    #[test]
    fn default_geometry() {
        let net = PolicyNet::<f32>::new(NetConfig::default(), 0);
        assert_eq!(net.encoder.feature_len(), 16 * 15 * 20);
        let d = Discriminator::<f32>::new(NetConfig::default(), 0);
        assert_eq!(d.fc1.in_dim, 4802);
    }
}
