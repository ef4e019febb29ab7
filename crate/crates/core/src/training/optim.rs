use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamaxConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One element-wise Adamax step on `param` with gradient `grad`.
/// `step` is the 1-based step count after incrementing.
pub fn adamax_update(
    param: &mut [f64],
    grad: &[f64],
    first_moment: &mut [f64],
    inf_norm: &mut [f64],
    step: u64,
    lr: f64,
    cfg: &AdamaxConfig,
) {
    let corrected = lr / (1.0 - cfg.beta1.powi(step as i32));
    for (((p, g), m), u) in param.iter_mut().zip(grad).zip(first_moment).zip(inf_norm) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *u = (cfg.beta2 * *u).max(g.abs());
        *p -= corrected * *m / (*u + cfg.eps);
    }
}

/// Moment buffers for every parameter of a store.
#[derive(Clone, Debug)]
pub struct Adamax {
    pub config: AdamaxConfig,
    first_moment: Vec<Tensor>,
    inf_norm: Vec<Tensor>,
    step: u64,
}

impl Adamax {
    pub fn new(store: &ParamStore, config: AdamaxConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
                .collect()
        };
        Self {
            config,
            first_moment: zeros(),
            inf_norm: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn inf_norm(&self, index: usize) -> &Tensor {
        &self.inf_norm[index]
    }

    /// Applies the accumulated gradients of every trainable parameter,
    /// using `lr(group)` as the learning rate. A non-finite gradient
    /// anywhere aborts the whole step before anything changes.
    pub fn step(&mut self, store: &mut ParamStore, lr: impl Fn(ParamGroup) -> f64) -> Result<()> {
        for (_, p) in store.iter() {
            if let Some(g) = &p.grad {
                if p.trainable && !g.all_finite() {
                    return Err(Error::NumericDomain {
                        op: "adamax",
                        detail: format!("non-finite gradient for {}", p.name),
                    });
                }
            }
        }
        self.step += 1;
        for (id, p) in store.iter_mut() {
            let (true, Some(grad)) = (p.trainable, &p.grad) else {
                continue;
            };
            let i = id.index();
            adamax_update(
                p.value.data_mut(),
                grad.data(),
                self.first_moment[i].data_mut(),
                self.inf_norm[i].data_mut(),
                self.step,
                lr(p.group),
                &self.config,
            );
        }
        Ok(())
    }
}

/// Per-epoch learning-rate multiplier: linear warm-up from `warm_start`
/// to `peak`, a plateau, then step decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warm_start: f64,
    pub peak: f64,
    pub warm_end_epoch: u32,
    pub plateau_end_epoch: u32,
    pub decay_factor: f64,
    pub decay_period: u32,
    /// Ingested-feature adapters train at `base_lr / lr_divisor`.
    pub lr_divisor: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            base_lr: 7e-4,
            warm_start: 0.5,
            peak: 2.0,
            warm_end_epoch: 4,
            plateau_end_epoch: 10,
            decay_factor: 0.75,
            decay_period: 2,
            lr_divisor: 10.0,
        }
    }
}

impl ScheduleConfig {
    /// Same shape with a larger base rate, for the small desk-preset
    /// models on the synthetic task.
    pub fn desk() -> Self {
        Self {
            base_lr: 2e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.base_lr, self.warm_start, self.peak, self.decay_factor, self.lr_divisor];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("schedule rates and factors must be positive".into()));
        }
        if self.warm_end_epoch > self.plateau_end_epoch || self.decay_period == 0 {
            return Err(Error::Config(
                "schedule epochs must satisfy warm_end <= plateau_end and decay_period >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn multiplier(&self, epoch: i64) -> Result<f64> {
        if epoch < 0 {
            return Err(Error::Contract(format!("negative epoch {epoch}")));
        }
        let (warm, plateau) = (i64::from(self.warm_end_epoch), i64::from(self.plateau_end_epoch));
        Ok(if epoch < warm {
            self.warm_start + (self.peak - self.warm_start) * epoch as f64 / warm as f64
        } else if epoch < plateau {
            self.peak
        } else {
            let decays = (epoch - plateau) / i64::from(self.decay_period) + 1;
            self.peak * self.decay_factor.powi(decays as i32)
        })
    }

    pub fn lr(&self, epoch: i64, group: ParamGroup) -> Result<f64> {
        let base = self.base_lr * self.multiplier(epoch)?;
        Ok(match group {
            ParamGroup::Default => base,
            ParamGroup::Ingested => base / self.lr_divisor,
        })
    }
}

/// Multiplier under the default schedule.
pub fn lr_multiplier(epoch: i64) -> Result<f64> {
    ScheduleConfig::default().multiplier(epoch)
}
