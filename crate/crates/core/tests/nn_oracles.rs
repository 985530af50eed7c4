mod common;

use laneforge::nn::{sigmoid, squash, Conv2d, Dense, NetConfig, Parameterized, PolicyNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{check_discriminator, check_policy, rel_err, FD_STEP};

#[test]
fn policy_gradients_match_finite_differences() {
    for seed in 0..5 {
        let r = check_policy(seed);
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
        assert!(r.skipped_kinks * 50 < r.checked, "{r:?}");
    }
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    for seed in 0..5 {
        let r = check_discriminator(seed);
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn dense_layer_gradient_in_isolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let layer = Dense::<f64>::new(7, 5, &mut rng, 1.0);
    let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |l: &Dense<f64>, x: &[f64]| -> f64 { l.forward(x).iter().zip(&c).map(|(o, c)| (o * c).tanh()).sum() };
    let out = layer.forward(&x);
    let g: Vec<f64> = out.iter().zip(&c).map(|(o, c)| c * (1.0 - (o * c).tanh().powi(2))).collect();
    let (mut gw, mut gb, mut gx) = (vec![0.0; 35], vec![0.0; 5], vec![0.0; 7]);
    layer.backward(&x, &g, &mut gw, &mut gb, Some(&mut gx));
    for j in 0..35 {
        let mut p = layer.clone();
        p.weight.data_mut()[j] += FD_STEP;
        let lp = loss(&p, &x);
        p.weight.data_mut()[j] -= 2.0 * FD_STEP;
        let lm = loss(&p, &x);
        assert!(rel_err(gw[j], (lp - lm) / (2.0 * FD_STEP)) < 1e-6);
    }
    for j in 0..7 {
        let mut xp = x.clone();
        xp[j] += FD_STEP;
        let lp = loss(&layer, &xp);
        xp[j] -= 2.0 * FD_STEP;
        let lm = loss(&layer, &xp);
        assert!(rel_err(gx[j], (lp - lm) / (2.0 * FD_STEP)) < 1e-6);
    }
    assert!(gb.iter().zip(&g).all(|(a, b)| a == b));
}

#[test]
fn conv_layer_gradient_in_isolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let layer = Conv2d::<f64>::new(2, 3, 5, 2, 9, 10, &mut rng, 1.0);
    let x: Vec<f64> = (0..2 * 9 * 10).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..layer.out_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |l: &Conv2d<f64>, x: &[f64]| -> f64 {
        let mut cols = Vec::new();
        l.forward(x, &mut cols).iter().zip(&c).map(|(o, c)| (o * c).sin()).sum()
    };
    let mut cols = Vec::new();
    let out = layer.forward(&x, &mut cols);
    let g: Vec<f64> = out.iter().zip(&c).map(|(o, c)| c * (o * c).cos()).collect();
    let mut gw = vec![0.0; layer.weight.len()];
    let mut gb = vec![0.0; 3];
    let mut gx = vec![0.0; x.len()];
    layer.backward(&cols, &g, &mut gw, &mut gb, Some(&mut gx));
    for j in 0..gw.len() {
        let mut p = layer.clone();
        p.weight.data_mut()[j] += FD_STEP;
        let lp = loss(&p, &x);
        p.weight.data_mut()[j] -= 2.0 * FD_STEP;
        let lm = loss(&p, &x);
        assert!(rel_err(gw[j], (lp - lm) / (2.0 * FD_STEP)) < 1e-5, "w{j}");
    }
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp[j] += FD_STEP;
        let lp = loss(&layer, &xp);
        xp[j] -= 2.0 * FD_STEP;
        let lm = loss(&layer, &xp);
        assert!(rel_err(gx[j], (lp - lm) / (2.0 * FD_STEP)) < 1e-5, "x{j}");
    }
    for (o, gbv) in gb.iter().enumerate() {
        let mut p = layer.clone();
        p.bias.data_mut()[o] += FD_STEP;
        let lp = loss(&p, &x);
        p.bias.data_mut()[o] -= 2.0 * FD_STEP;
        let lm = loss(&p, &x);
        assert!(rel_err(*gbv, (lp - lm) / (2.0 * FD_STEP)) < 1e-5);
    }
}

/// Straight-line forward pass over raw parameter buffers, written without the
/// library's im2col or chunked dot products.
fn hand_forward(net: &PolicyNet<f32>, input: &[f32]) -> [f32; 2] {
    fn conv(x: &[f64], c_in: usize, h: usize, w: usize, wt: &[f32], b: &[f32], c_out: usize) -> (Vec<f64>, usize, usize) {
        let (oh, ow) = ((h + 4 - 5) / 2 + 1, (w + 4 - 5) / 2 + 1);
        let mut y = vec![0.0; c_out * oh * ow];
        for o in 0..c_out {
            for r in 0..oh {
                for q in 0..ow {
                    let mut acc = f64::from(b[o]);
                    for c in 0..c_in {
                        for i in 0..5 {
                            for j in 0..5 {
                                let (yy, xx) = ((2 * r + i) as i64 - 2, (2 * q + j) as i64 - 2);
                                if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                                    acc += f64::from(wt[((o * c_in + c) * 5 + i) * 5 + j])
                                        * x[(c * h + yy as usize) * w + xx as usize];
                                }
                            }
                        }
                    }
                    y[(o * oh + r) * ow + q] = acc.max(0.0);
                }
            }
        }
        (y, oh, ow)
    }
    fn dense(x: &[f64], wt: &[f32], b: &[f32], relu: bool) -> Vec<f64> {
        b.iter()
            .enumerate()
            .map(|(o, bo)| {
                let v = f64::from(*bo) + x.iter().enumerate().map(|(i, xi)| f64::from(wt[o * x.len() + i]) * xi).sum::<f64>();
                if relu { v.max(0.0) } else { v }
            })
            .collect()
    }
    let p = net.named_params();
    let d = |i: usize| p[i].1.data();
    let cfg = net.config;
    let x: Vec<f64> = input.iter().map(|v| f64::from(*v)).collect();
    let (a1, h1, w1) = conv(&x, 3, cfg.in_height, cfg.in_width, d(0), d(1), cfg.conv1_channels);
    let (a2, _, _) = conv(&a1, cfg.conv1_channels, h1, w1, d(2), d(3), cfg.conv2_channels);
    let f1 = dense(&a2, d(4), d(5), true);
    let f2 = dense(&f1, d(6), d(7), true);
    let z = dense(&f2, d(8), d(9), false);
    [z[0] as f32, z[1] as f32]
}

#[test]
fn forward_matches_hand_stepped_pass() {
    let net = PolicyNet::<f32>::new(NetConfig::default(), 2024);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let input: Vec<f32> = (0..NetConfig::default().input_len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fast = net.forward(&input).unwrap();
        let slow = hand_forward(&net, &input);
        for i in 0..2 {
            assert!((fast[i] - slow[i]).abs() < 1e-4, "{fast:?} vs {slow:?}");
        }
        let a = squash(fast);
        assert!((a[0] - sigmoid(slow[0])).abs() < 1e-4);
    }
}
