use super::tensor::{Scalar, Tensor};
use super::NnError;

pub const DEFAULT_LR: f64 = 1e-4;

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[&[usize]], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_params(params: &[&Tensor<T>], lr: f64) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes, lr)
    }

    /// Applies one update. Gradients are checked before anything is
    /// modified, so an error leaves parameters and moments untouched.
    pub fn step(&mut self, mut params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.m.len()],
                actual: vec![params.len(), grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            for t in [p.shape(), g.shape()] {
                if t != self.m[i].shape() {
                    return Err(NnError::ShapeMismatch {
                        expected: self.m[i].shape().to_vec(),
                        actual: t.to_vec(),
                    });
                }
            }
            if !g.all_finite() {
                return Err(NnError::NonFiniteGradient(format!("#{i}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::of_f64(self.beta1);
        let b2 = T::of_f64(self.beta2);
        let one = T::one();
        let c1 = T::of_f64(1.0 / (1.0 - self.beta1.powi(t)));
        let c2 = T::of_f64(1.0 / (1.0 - self.beta2.powi(t)));
        let lr = T::of_f64(self.lr);
        let eps = T::of_f64(self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (j, &gj) in g.data().iter().enumerate() {
                md[j] = b1 * md[j] + (one - b1) * gj;
                vd[j] = b2 * vd[j] + (one - b2) * gj * gj;
                let mhat = md[j] * c1;
                let vhat = vd[j] * c2;
                pd[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
