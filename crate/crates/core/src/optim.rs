//! First-order optimization: Adam with bias correction, plus a
//! reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            lr: T::from_f64_lossy(1e-4),
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            eps: T::from_f64_lossy(1e-8),
        }
    }
}

/// Adam optimizer state over a fixed set of parameter tensors.
///
/// Tensors are addressed by slot index; callers must present the same slot
/// layout (sizes and order) on every step. Moments are kept per slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam<T> {
    pub config: AdamConfig<T>,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig<T>, slot_sizes: &[usize]) -> Self {
        Adam {
            config,
            step: 0,
            first: slot_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: slot_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advances the shared timestep. Call once per optimization step,
    /// before the per-slot updates of that step.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one Adam update to a single tensor slot.
    pub fn update_slot(&mut self, slot: usize, params: &mut [T], grads: &[T]) {
        assert!(self.step > 0, "update_slot called before begin_step");
        let m = &mut self.first[slot];
        let v = &mut self.second[slot];
        assert_eq!(m.len(), params.len(), "adam: slot size mismatch");
        assert_eq!(params.len(), grads.len(), "adam: grad size mismatch");

        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let one = T::one();
        let t = self.step as i32;
        let bias1 = one - beta1.powi(t);
        let bias2 = one - beta2.powi(t);

        for i in 0..params.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (one - beta1) * g;
            v[i] = beta2 * v[i] + (one - beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Reduce-on-plateau schedule: when the observed loss fails to improve on
/// the best seen so far by more than `min_delta` for `patience` consecutive
/// observations, the learning rate is divided by `factor` and the stall
/// counter resets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateauScheduler<T> {
    pub patience: u32,
    pub min_delta: T,
    pub factor: T,
    best: Option<T>,
    stall: u32,
}

impl<T: Scalar> Default for PlateauScheduler<T> {
    fn default() -> Self {
        PlateauScheduler {
            patience: 2,
            min_delta: T::from_f64_lossy(1e-6),
            factor: T::from_f64_lossy(10.0),
            best: None,
            stall: 0,
        }
    }
}

impl<T: Scalar> PlateauScheduler<T> {
    pub fn new(patience: u32, min_delta: T, factor: T) -> Self {
        PlateauScheduler {
            patience,
            min_delta,
            factor,
            best: None,
            stall: 0,
        }
    }

    /// Feeds one loss observation; mutates `lr` in place on plateau.
    /// Returns `true` if the learning rate was reduced.
    pub fn observe(&mut self, loss: T, lr: &mut T) -> bool {
        match self.best {
            None => {
                self.best = Some(loss);
                false
            }
            Some(best) if loss < best - self.min_delta => {
                self.best = Some(loss);
                self.stall = 0;
                false
            }
            Some(_) => {
                self.stall += 1;
                if self.stall >= self.patience {
                    *lr /= self.factor;
                    self.stall = 0;
                    true
                } else {
                    false
                }
            }
        }
    }
}
