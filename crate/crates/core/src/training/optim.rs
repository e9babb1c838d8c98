use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, PARAM_NAMES};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Adam moments for every parameter, in [`PARAM_NAMES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads[i] = None` leaves parameter `i` untouched.
    pub fn update(&mut self, params: &mut ModelParams, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != PARAM_NAMES.len() {
            return Err(Error::Contract(format!("{} gradients for {} parameters", grads.len(), PARAM_NAMES.len())));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            let Some(g) = &grads[i] else { continue };
            if g.shape() != p.shape() {
                return Err(Error::Contract(format!(
                    "gradient shape {:?} for {} of shape {:?}",
                    g.shape(),
                    PARAM_NAMES[i],
                    p.shape()
                )));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                *w -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moments as named arrays (`adam_m/<param>`, `adam_v/<param>`).
    pub fn arrays(&self) -> Vec<(String, Tensor)> {
        let m = PARAM_NAMES.iter().zip(&self.m).map(|(n, t)| (format!("adam_m/{n}"), t.clone()));
        let v = PARAM_NAMES.iter().zip(&self.v).map(|(n, t)| (format!("adam_v/{n}"), t.clone()));
        m.chain(v).collect()
    }

    /// Rebuilds the state from [`Adam::arrays`] output; `step` is the number
    /// of updates already applied.
    pub fn restore(
        config: AdamConfig,
        model: &ModelConfig,
        step: u64,
        get: impl Fn(&str) -> Option<Tensor>,
    ) -> Result<Self> {
        let shapes = ModelParams::expected_shapes(model);
        let load = |prefix: &str| {
            PARAM_NAMES
                .iter()
                .zip(&shapes)
                .map(|(n, shape)| {
                    let name = format!("{prefix}/{n}");
                    let t = get(&name).ok_or_else(|| Error::Contract(format!("missing optimizer array {name}")))?;
                    if t.shape() != shape.as_slice() {
                        return Err(Error::Contract(format!("{name} has shape {:?}, expected {shape:?}", t.shape())));
                    }
                    Ok(t)
                })
                .collect::<Result<Vec<_>>>()
        };
        let m = load("adam_m")?;
        let v = load("adam_v")?;
        Ok(Self { config, step, m, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = ModelConfig { frames: 2, joints: 1, embed_dim: 2, query_dim: 2, key_dim: 2, value_dim: 2, disc_reduced_dim: 2, ..Default::default() };
        let model = crate::model::Model::init(cfg, 3).unwrap();
        let mut params = model.params().clone();
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let mut grads: Vec<Option<Tensor>> = vec![None; PARAM_NAMES.len()];
        let g = Tensor::filled(params.tensors()[1].shape(), -2.5);
        grads[1] = Some(g);
        adam.update(&mut params, &grads).unwrap();
        for (a, b) in params.tensors()[1].data().iter().zip(before.tensors()[1].data()) {
            // bias-corrected first step is lr · g/|g| (up to eps)
            assert!((a - b - 1e-3).abs() < 1e-9);
        }
        assert_eq!(params.tensors()[0], before.tensors()[0]);
        assert_eq!(adam.step(), 1);
    }
}
