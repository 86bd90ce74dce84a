//! Adam optimizer over [`ParamStore`] slots.

use crate::graph::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Adam with bias correction. Parameters with an all-zero gradient history
/// are left untouched: both moments stay zero, so the update is exactly zero.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: u64,
    targets: Vec<ParamId>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, store: &ParamStore, targets: Vec<ParamId>) -> Self {
        Adam::with_hyper(lr, 0.9, 0.999, 1e-8, store, targets)
    }

    pub fn with_hyper(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        store: &ParamStore,
        targets: Vec<ParamId>,
    ) -> Self {
        let m = targets
            .iter()
            .map(|&id| Tensor::zeros(store.value(id).shape()))
            .collect();
        let v = targets
            .iter()
            .map(|&id| Tensor::zeros(store.value(id).shape()))
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            steps: 0,
            targets,
            m,
            v,
        }
    }

    pub fn targets(&self) -> &[ParamId] {
        &self.targets
    }

    /// Applies one update from the gradients currently in the store. Does not
    /// zero them; callers do that before the next backward pass.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for (slot, &id) in self.targets.iter().enumerate() {
            let grad = store.grad(id).clone();
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            let value = store.value_mut(id).data_mut();
            for j in 0..grad.len() {
                let g = grad.get(j);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                value[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
