use rand::Rng;

use super::config::{ModelConfig, PeKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Every weight array of the network. Matrices map row vectors:
/// `y = x · W + b` with `W` shaped `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub psi_w1: Tensor,
    pub psi_b1: Tensor,
    pub psi_w2: Tensor,
    pub psi_b2: Tensor,
    pub upsilon: Tensor,
    pub gamma: Tensor,
    pub lambda: Tensor,
    pub pe_table: Tensor,
    pub disc_l1_w: Tensor,
    pub disc_l1_b: Tensor,
    pub disc_w1: Tensor,
    pub disc_b1: Tensor,
    pub disc_w2: Tensor,
    pub disc_b2: Tensor,
    pub disc_w3: Tensor,
    pub disc_b3: Tensor,
    pub disc_out_w: Tensor,
    pub disc_out_b: Tensor,
}

pub const PARAM_NAMES: [&str; 18] = [
    "psi_w1",
    "psi_b1",
    "psi_w2",
    "psi_b2",
    "upsilon",
    "gamma",
    "lambda",
    "pe_table",
    "disc_l1_w",
    "disc_l1_b",
    "disc_w1",
    "disc_b1",
    "disc_w2",
    "disc_b2",
    "disc_w3",
    "disc_b3",
    "disc_out_w",
    "disc_out_b",
];

pub(crate) const PE_INDEX: usize = 7;

/// Sinusoidal encoding of a one-based frame `position`:
/// `[2i] = sin(pos / 10000^(2i/D))`, `[2i+1] = cos(...)` with `pos = position − 1`.
pub fn positional_encoding(position: usize, frames: usize, dim: usize) -> Result<Vec<f64>> {
    if position == 0 || position > frames {
        return Err(Error::Contract(format!(
            "position {position} outside 1..={frames}"
        )));
    }
    let pos = (position - 1) as f64;
    Ok((0..dim)
        .map(|j| {
            let i2 = (j - j % 2) as f64;
            let angle = pos / 10000f64.powf(i2 / dim as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect())
}

/// `F×D` table of [`positional_encoding`] rows.
pub fn pe_table(frames: usize, dim: usize) -> Tensor {
    let data = (1..=frames)
        .flat_map(|p| positional_encoding(p, frames, dim).expect("in range"))
        .collect();
    Tensor::new(vec![frames, dim], data).expect("table shape")
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

impl ModelParams {
    /// Shapes implied by a configuration, in [`PARAM_NAMES`] order.
    pub fn expected_shapes(cfg: &ModelConfig) -> Vec<Vec<usize>> {
        let j3 = cfg.frame_width();
        let d = cfg.embed_dim;
        let flat = cfg.pair_count() * cfg.disc_reduced_dim;
        let [h1, h2, h3] = cfg.disc_widths();
        vec![
            vec![j3, 2 * j3],
            vec![2 * j3],
            vec![2 * j3, d],
            vec![d],
            vec![2 * d, cfg.query_dim],
            vec![2 * d, cfg.key_dim],
            vec![2 * d, cfg.value_dim],
            vec![cfg.frames, d],
            vec![cfg.value_dim, cfg.disc_reduced_dim],
            vec![cfg.disc_reduced_dim],
            vec![flat, h1],
            vec![h1],
            vec![h1, h2],
            vec![h2],
            vec![h2, h3],
            vec![h3],
            vec![h3, 1],
            vec![1],
        ]
    }

    /// Uniform ±sqrt(1/fan_in) initialization; biases use their layer's fan-in.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let shapes = Self::expected_shapes(cfg);
        let mut tensors = Vec::with_capacity(shapes.len());
        let mut fan_in = 1;
        for (i, shape) in shapes.iter().enumerate() {
            if i == PE_INDEX {
                tensors.push(pe_table(cfg.frames, cfg.embed_dim));
                continue;
            }
            if shape.len() == 2 {
                fan_in = shape[0];
            }
            tensors.push(uniform(shape, fan_in, rng));
        }
        Self::from_tensors(cfg, tensors)
    }

    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let shapes = Self::expected_shapes(cfg);
        if tensors.len() != shapes.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter arrays, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in PARAM_NAMES.iter().zip(&shapes).zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Contract(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(Self {
            psi_w1: next(),
            psi_b1: next(),
            psi_w2: next(),
            psi_b2: next(),
            upsilon: next(),
            gamma: next(),
            lambda: next(),
            pe_table: next(),
            disc_l1_w: next(),
            disc_l1_b: next(),
            disc_w1: next(),
            disc_b1: next(),
            disc_w2: next(),
            disc_b2: next(),
            disc_w3: next(),
            disc_b3: next(),
            disc_out_w: next(),
            disc_out_b: next(),
        })
    }

    pub fn tensors(&self) -> [&Tensor; 18] {
        [
            &self.psi_w1,
            &self.psi_b1,
            &self.psi_w2,
            &self.psi_b2,
            &self.upsilon,
            &self.gamma,
            &self.lambda,
            &self.pe_table,
            &self.disc_l1_w,
            &self.disc_l1_b,
            &self.disc_w1,
            &self.disc_b1,
            &self.disc_w2,
            &self.disc_b2,
            &self.disc_w3,
            &self.disc_b3,
            &self.disc_out_w,
            &self.disc_out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 18] {
        [
            &mut self.psi_w1,
            &mut self.psi_b1,
            &mut self.psi_w2,
            &mut self.psi_b2,
            &mut self.upsilon,
            &mut self.gamma,
            &mut self.lambda,
            &mut self.pe_table,
            &mut self.disc_l1_w,
            &mut self.disc_l1_b,
            &mut self.disc_w1,
            &mut self.disc_b1,
            &mut self.disc_w2,
            &mut self.disc_b2,
            &mut self.disc_w3,
            &mut self.disc_b3,
            &mut self.disc_out_w,
            &mut self.disc_out_b,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        PARAM_NAMES.into_iter().zip(self.tensors())
    }

    /// Whether the optimizer updates parameter `index`.
    pub fn is_trainable(cfg: &ModelConfig, index: usize) -> bool {
        index != PE_INDEX || cfg.pe == PeKind::Learned
    }

    pub fn is_discriminator(index: usize) -> bool {
        PARAM_NAMES[index].starts_with("disc_")
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}
