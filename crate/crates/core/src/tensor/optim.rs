use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Adam with per-parameter step counts. Only parameters that received a
/// gradient since the last `zero_grads` are updated.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    state: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Adam {
        Adam {
            config,
            state: Vec::new(),
        }
    }

    /// Applies one update using the accumulated gradients scaled by `scale`,
    /// then clears them.
    pub fn step(&mut self, store: &mut ParamStore, scale: f64) {
        if self.state.len() < store.len() {
            self.state.resize(store.len(), Moments::default());
        }
        let c = self.config;
        for id in store.ids().collect::<Vec<ParamId>>() {
            if !store.is_touched(id) {
                continue;
            }
            let st = &mut self.state[id.0];
            let (value, grad) = store.value_and_grad_mut(id);
            if st.m.is_empty() {
                st.m = vec![0.0; value.len()];
                st.v = vec![0.0; value.len()];
            }
            st.t += 1;
            let bc1 = 1.0 - c.beta1.powi(st.t);
            let bc2 = 1.0 - c.beta2.powi(st.t);
            for (((w, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(st.m.iter_mut())
                .zip(st.v.iter_mut())
            {
                let g = g * scale;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *w -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            }
        }
        store.zero_grads();
    }
}

/// Global L2 norm of the accumulated gradients.
pub fn grad_norm(store: &ParamStore) -> f64 {
    store.ids().map(|id| store.grad(id).norm_sq()).sum::<f64>().sqrt()
}
