//! Convolution and dense layers with explicit forward caches and backward
//! passes.

use rand::Rng;

use super::tensor::{axpy, dot, Scalar, Tensor};

fn uniform_init<T: Scalar>(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of_f64(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

/// 2-D convolution over a CHW input, square kernel, zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// `[out_channels, in_channels, kernel, kernel]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        in_h: usize,
        in_w: usize,
        rng: &mut impl Rng,
        bound_scale: f64,
    ) -> Self {
        let pad = kernel / 2;
        let out_h = (in_h + 2 * pad - kernel) / stride + 1;
        let out_w = (in_w + 2 * pad - kernel) / stride + 1;
        let fan_in = in_channels * kernel * kernel;
        let bound = bound_scale * (6.0 / fan_in as f64).sqrt();
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            in_h,
            in_w,
            out_h,
            out_w,
            weight: uniform_init(rng, &[out_channels, in_channels, kernel, kernel], bound),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_pixels()
    }

    /// Unrolls input patches into `[patch_len, out_pixels]`.
    fn im2col(&self, input: &[T], cols: &mut Vec<T>) {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let npix = self.out_pixels();
        cols.clear();
        cols.resize(self.patch_len() * npix, T::zero());
        for c in 0..self.in_channels {
            let plane = &input[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * npix..(row + 1) * npix];
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ki) as isize - p as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        let drow = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - p as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, dcols: &[T], grad_in: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let npix = self.out_pixels();
        for c in 0..self.in_channels {
            let plane = &mut grad_in[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &dcols[row * npix..(row + 1) * npix];
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ki) as isize - p as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for ox in 0..self.out_w {
                            let ix = (ox * s + kj) as isize - p as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                dst[ix as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Returns the `[out_channels, out_h, out_w]` output; `cols` keeps the
    /// unrolled input for the backward pass.
    pub fn forward(&self, input: &[T], cols: &mut Vec<T>) -> Vec<T> {
        debug_assert_eq!(input.len(), self.in_channels * self.in_h * self.in_w);
        self.im2col(input, cols);
        let npix = self.out_pixels();
        let plen = self.patch_len();
        let w = self.weight.data();
        let mut out = vec![T::zero(); self.out_len()];
        for (oc, orow) in out.chunks_exact_mut(npix).enumerate() {
            orow.fill(self.bias.data()[oc]);
            for kk in 0..plen {
                let wv = w[oc * plen + kk];
                if wv != T::zero() {
                    axpy(wv, &cols[kk * npix..(kk + 1) * npix], orow);
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        cols: &[T],
        grad_out: &[T],
        grad_w: &mut [T],
        grad_b: &mut [T],
        grad_in: Option<&mut [T]>,
    ) {
        let npix = self.out_pixels();
        let plen = self.patch_len();
        for (oc, g) in grad_out.chunks_exact(npix).enumerate() {
            grad_b[oc] += g.iter().copied().sum::<T>();
            for kk in 0..plen {
                grad_w[oc * plen + kk] += dot(g, &cols[kk * npix..(kk + 1) * npix]);
            }
        }
        if let Some(grad_in) = grad_in {
            let w = self.weight.data();
            let mut dcols = vec![T::zero(); plen * npix];
            for (oc, g) in grad_out.chunks_exact(npix).enumerate() {
                if g.iter().all(|v| *v == T::zero()) {
                    continue;
                }
                for kk in 0..plen {
                    axpy(w[oc * plen + kk], g, &mut dcols[kk * npix..(kk + 1) * npix]);
                }
            }
            self.col2im(&dcols, grad_in);
        }
    }
}

/// Fully connected layer, `weight` is `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng, bound_scale: f64) -> Self {
        let bound = bound_scale * (6.0 / in_dim as f64).sqrt();
        Dense {
            in_dim,
            out_dim,
            weight: uniform_init(rng, &[out_dim, in_dim], bound),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        debug_assert_eq!(input.len(), self.in_dim);
        self.weight
            .data()
            .chunks_exact(self.in_dim)
            .zip(self.bias.data())
            .map(|(row, &b)| b + dot(row, input))
            .collect()
    }

    pub fn backward(
        &self,
        input: &[T],
        grad_out: &[T],
        grad_w: &mut [T],
        grad_b: &mut [T],
        mut grad_in: Option<&mut [T]>,
    ) {
        let w = self.weight.data();
        for (o, &g) in grad_out.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad_b[o] += g;
            axpy(g, input, &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim]);
            if let Some(gi) = grad_in.as_deref_mut() {
                axpy(g, &w[o * self.in_dim..(o + 1) * self.in_dim], gi);
            }
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose forward activation was clipped.
pub fn relu_backward<T: Scalar>(activated: &[T], grad: &mut [T]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight loops over output pixels, independent of im2col.
    fn naive_conv(layer: &Conv2d<f64>, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; layer.out_len()];
        let w = layer.weight.data();
        let k = layer.kernel;
        for oc in 0..layer.out_channels {
            for oy in 0..layer.out_h {
                for ox in 0..layer.out_w {
                    let mut acc = layer.bias.data()[oc];
                    for c in 0..layer.in_channels {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * layer.stride + ki) as isize - layer.pad as isize;
                                let ix = (ox * layer.stride + kj) as isize - layer.pad as isize;
                                if iy < 0 || ix < 0 || iy >= layer.in_h as isize || ix >= layer.in_w as isize {
                                    continue;
                                }
                                let iv = input[(c * layer.in_h + iy as usize) * layer.in_w + ix as usize];
                                acc += w[((oc * layer.in_channels + c) * k + ki) * k + kj] * iv;
                            }
                        }
                    }
                    out[(oc * layer.out_h + oy) * layer.out_w + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = Conv2d::<f64>::new(3, 4, 5, 2, 11, 14, &mut rng, 1.0);
        layer.bias.data_mut().iter_mut().enumerate().for_each(|(i, b)| *b = i as f64 * 0.1);
        let input: Vec<f64> = (0..3 * 11 * 14).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut cols = Vec::new();
        let fast = layer.forward(&input, &mut cols);
        let slow = naive_conv(&layer, &input);
        assert_eq!((layer.out_h, layer.out_w), (6, 7));
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_output_geometry_for_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c1 = Conv2d::<f32>::new(3, 8, 5, 2, 60, 80, &mut rng, 1.0);
        assert_eq!((c1.out_h, c1.out_w), (30, 40));
        let c2 = Conv2d::<f32>::new(8, 16, 5, 2, 30, 40, &mut rng, 1.0);
        assert_eq!(c2.out_len(), 4800);
    }

    #[test]
    fn single_weight_dense_gradient_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = Dense::<f64>::new(1, 1, &mut rng, 1.0);
        let (mut gw, mut gb) = ([0.0], [0.0]);
        layer.backward(&[1.0], &[1.0], &mut gw, &mut gb, None);
        assert_eq!(gw[0], 1.0);
        assert_eq!(gb[0], 1.0);
    }

    #[test]
    fn stable_activations() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) <= 1.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(1000.0f64).is_finite());
        assert!(softplus(-1000.0f64) >= 0.0);
    }
}
