use crate::error::{Error, Result};
use crate::numerics::element::Element;
use crate::numerics::params::ParamStore;

/// Adam with a stepwise-halving learning-rate schedule: the effective rate at
/// a given epoch is `base_lr * 0.5^(epoch / half_period)`.
pub struct AdamState<E> {
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub base_lr: f64,
    pub half_period: usize,
    pub(crate) first_moment: Vec<Vec<E>>,
    pub(crate) second_moment: Vec<Vec<E>>,
}

impl<E: Element> AdamState<E> {
    /// Zero-moment state for the trainable parameters of `store`, with the
    /// usual defaults beta1 0.9, beta2 0.999, epsilon 1e-8.
    pub fn new(store: &ParamStore<E>, base_lr: f64, half_period: usize) -> Self {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (_, p) in store.iter() {
            if p.trainable {
                first.push(vec![E::zero(); p.value.len()]);
                second.push(vec![E::zero(); p.value.len()]);
            }
        }
        AdamState {
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            base_lr,
            half_period,
            first_moment: first,
            second_moment: second,
        }
    }

    pub fn effective_lr(&self, epoch: usize) -> f64 {
        self.base_lr * 0.5f64.powi((epoch / self.half_period.max(1)) as i32)
    }

    /// One Adam update over all trainable parameters. Consumes the gradients
    /// (zeroes them afterwards). Fails if any trainable parameter never
    /// received a gradient.
    pub fn step(&mut self, store: &mut ParamStore<E>, epoch: usize) -> Result<()> {
        let lr = self.effective_lr(epoch);
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (E::from_f64(self.beta1), E::from_f64(self.beta2));
        let one_m_b1 = E::from_f64(1.0 - self.beta1);
        let one_m_b2 = E::from_f64(1.0 - self.beta2);
        let lr_e = E::from_f64(lr);
        let eps = E::from_f64(self.epsilon);
        let (bc1, bc2) = (E::from_f64(bc1), E::from_f64(bc2));

        let mut slot = 0usize;
        let n = store.len();
        for i in 0..n {
            let p = store.get_mut(crate::numerics::params::ParamId(i));
            if !p.trainable {
                continue;
            }
            if !p.grad_set {
                return Err(Error::MissingGradient(p.name.clone()));
            }
            let m = &mut self.first_moment[slot];
            let v = &mut self.second_moment[slot];
            for j in 0..p.value.len() {
                let g = p.grad[j];
                m[j] = b1 * m[j] + one_m_b1 * g;
                v[j] = b2 * v[j] + one_m_b2 * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p.value[j] -= lr_e * m_hat / (v_hat.sqrt() + eps);
            }
            slot += 1;
        }
        store.zero_grads();
        Ok(())
    }
}
