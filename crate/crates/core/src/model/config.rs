use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PeKind {
    /// Fixed sine/cosine table, not trained.
    #[default]
    Sinusoidal,
    /// Table initialized like the sinusoidal one and updated by training.
    Learned,
}

/// Shapes and decision constants of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Frames per sequence (F).
    pub frames: usize,
    /// Joints per skeleton (J).
    pub joints: usize,
    /// Frame embedding width (D).
    pub embed_dim: usize,
    /// Query projection width; must equal `key_dim`.
    pub query_dim: usize,
    pub key_dim: usize,
    /// Value projection width, also the prototype width.
    pub value_dim: usize,
    /// Per-pair width after the discriminator's first layer.
    pub disc_reduced_dim: usize,
    /// Trunk widths; derived from the pair count when absent.
    pub disc_hidden: Option<[usize; 3]>,
    /// Acceptance threshold on the open-set score.
    pub tau: f64,
    /// Weight of the open-set loss.
    pub sigma: f64,
    pub pe: PeKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            joints: 24,
            embed_dim: 64,
            query_dim: 64,
            key_dim: 64,
            value_dim: 64,
            disc_reduced_dim: 16,
            disc_hidden: None,
            tau: 0.5,
            sigma: 1.0,
            pe: PeKind::Sinusoidal,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.frames < 2 {
            return fail(format!("frames must be >= 2, got {}", self.frames));
        }
        let dims = [
            ("joints", self.joints),
            ("embed_dim", self.embed_dim),
            ("query_dim", self.query_dim),
            ("key_dim", self.key_dim),
            ("value_dim", self.value_dim),
            ("disc_reduced_dim", self.disc_reduced_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        if self.query_dim != self.key_dim {
            return fail(format!(
                "query_dim ({}) must equal key_dim ({})",
                self.query_dim, self.key_dim
            ));
        }
        if self.query_dim < 2 {
            // keys and queries are layer-normalized
            return fail("query_dim must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if let Some(h) = self.disc_hidden {
            if h.contains(&0) {
                return fail("disc_hidden widths must be >= 1".into());
            }
        }
        Ok(())
    }

    pub fn pair_count(&self) -> usize {
        self.frames * (self.frames - 1) / 2
    }

    /// `h1 = |Π|·D_r/4, h2 = h1/4, h3 = h1/16`, each floored and at least 4,
    /// unless overridden.
    pub fn disc_widths(&self) -> [usize; 3] {
        self.disc_hidden.unwrap_or_else(|| {
            let h1 = (self.pair_count() * self.disc_reduced_dim / 4).max(4);
            [h1, (h1 / 4).max(4), (h1 / 16).max(4)]
        })
    }

    /// Input width of the frame embedding (J·3).
    pub fn frame_width(&self) -> usize {
        self.joints * 3
    }
}
