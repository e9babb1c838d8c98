//! The differentiable forward pass, recorded on a [`Tape`].

use super::config::ModelConfig;
use super::pairs::PairSet;
use super::params::{ModelParams, PARAM_NAMES};
use crate::tensor::{Result, Tape, Tensor, TensorError, Var};

const PSI_W1: usize = 0;
const PSI_B1: usize = 1;
const PSI_W2: usize = 2;
const PSI_B2: usize = 3;
const UPSILON: usize = 4;
const GAMMA: usize = 5;
const LAMBDA: usize = 6;
const PE: usize = 7;
const DISC_L1_W: usize = 8;
const DISC_L1_B: usize = 9;
const DISC_TRUNK: [(usize, usize); 4] = [(10, 11), (12, 13), (14, 15), (16, 17)];

/// A sequence's pair representations and their three projections.
#[derive(Clone, Copy, Debug)]
pub struct Encoded<'t> {
    /// `|Π|×2D`: row p is `[Ψ(x_p1)+PE(p1), Ψ(x_p2)+PE(p2)]` flattened.
    pub pairs: Var<'t>,
    /// `L(Υ·Q_p)` rows.
    pub queries: Var<'t>,
    /// `L(Γ·S_m)` rows.
    pub keys: Var<'t>,
    /// `Λ·S_m` rows (also `q̃` when the sequence is the query).
    pub values: Var<'t>,
}

/// Detached copy of an [`Encoded`], reusable across tapes.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTensors {
    pub pairs: Tensor,
    pub queries: Tensor,
    pub keys: Tensor,
    pub values: Tensor,
}

impl<'t> Encoded<'t> {
    pub fn detach(&self) -> EncodedTensors {
        EncodedTensors {
            pairs: self.pairs.to_tensor(),
            queries: self.queries.to_tensor(),
            keys: self.keys.to_tensor(),
            values: self.values.to_tensor(),
        }
    }
}

impl EncodedTensors {
    pub fn on_tape<'t>(&self, tape: &'t Tape) -> Encoded<'t> {
        Encoded {
            pairs: tape.constant(self.pairs.clone()),
            queries: tape.constant(self.queries.clone()),
            keys: tape.constant(self.keys.clone()),
            values: tape.constant(self.values.clone()),
        }
    }
}

/// Prototype stack and distance for one (query, class) match.
#[derive(Clone, Copy, Debug)]
pub struct ClassMatch<'t> {
    /// `t^c`: `|Π|×D_Λ`, row p is `t_p^c`.
    pub prototypes: Var<'t>,
    /// Attention weights `|Π|×|Π|`, row p sums to one over support pairs.
    pub attention: Var<'t>,
    /// `T(Q, S^c)`.
    pub distance: Var<'t>,
}

pub struct Network<'t, 'a> {
    cfg: &'a ModelConfig,
    pairs: &'a PairSet,
    vars: Vec<Var<'t>>,
}

impl<'t, 'a> Network<'t, 'a> {
    /// Registers trainable parameters as tracked leaves.
    pub fn track(
        tape: &'t Tape,
        cfg: &'a ModelConfig,
        pairs: &'a PairSet,
        params: &ModelParams,
    ) -> Self {
        let vars = params
            .tensors()
            .into_iter()
            .enumerate()
            .map(|(i, t)| {
                if ModelParams::is_trainable(cfg, i) {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Self { cfg, pairs, vars }
    }

    /// All parameters as constants, for inference.
    pub fn frozen(
        tape: &'t Tape,
        cfg: &'a ModelConfig,
        pairs: &'a PairSet,
        params: &ModelParams,
    ) -> Self {
        let vars = params
            .tensors()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        Self { cfg, pairs, vars }
    }

    /// Wraps vars given in [`PARAM_NAMES`] order.
    pub fn from_vars(cfg: &'a ModelConfig, pairs: &'a PairSet, vars: &[Var<'t>]) -> Self {
        assert_eq!(vars.len(), PARAM_NAMES.len(), "one var per parameter");
        Self {
            cfg,
            pairs,
            vars: vars.to_vec(),
        }
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    pub fn config(&self) -> &ModelConfig {
        self.cfg
    }

    fn tape(&self) -> &'t Tape {
        self.vars[0].tape()
    }

    /// Ψ applied to every row of an `n×(J·3)` matrix: linear, ReLU, linear, ReLU.
    pub fn embed_frames(&self, frames: Var<'t>) -> Result<Var<'t>> {
        let v = &self.vars;
        frames
            .matmul(v[PSI_W1])?
            .add_bias(v[PSI_B1])?
            .relu()
            .matmul(v[PSI_W2])?
            .add_bias(v[PSI_B2])
            .map(|h| h.relu())
    }

    /// Pair matrix from per-frame embeddings (`F×D`): PE is added, then
    /// rows `p1` and `p2` are concatenated for every pair.
    pub fn pair_matrix(&self, embeddings: Var<'t>) -> Result<Var<'t>> {
        let with_pe = embeddings.add(self.vars[PE])?;
        let first = with_pe.gather_rows(self.pairs.first_rows())?;
        let second = with_pe.gather_rows(self.pairs.second_rows())?;
        Var::concat(&[first, second], 1)
    }

    /// Embeds a `F×(J·3)` sequence and projects all of its pairs.
    pub fn encode(&self, sequence: &Tensor) -> Result<Encoded<'t>> {
        let expected = [self.cfg.frames, self.cfg.frame_width()];
        if sequence.shape() != expected {
            return Err(TensorError::Shape {
                op: "encode",
                lhs: expected.to_vec(),
                rhs: sequence.shape().to_vec(),
            });
        }
        let frames = self.tape().constant(sequence.clone());
        let pairs = self.pair_matrix(self.embed_frames(frames)?)?;
        Ok(Encoded {
            pairs,
            queries: pairs.matmul(self.vars[UPSILON])?.layer_norm()?,
            keys: pairs.matmul(self.vars[GAMMA])?.layer_norm()?,
            values: pairs.matmul(self.vars[LAMBDA])?,
        })
    }

    /// Query-specific prototypes of `support` for every query pair, and the
    /// mean prototype-to-query distance.
    pub fn match_class(&self, query: &Encoded<'t>, support: &Encoded<'t>) -> Result<ClassMatch<'t>> {
        let logits = query.queries.matmul(support.keys.t()?)?;
        let attention = logits.softmax(1)?;
        let prototypes = attention.matmul(support.values)?;
        let distance = prototypes.sub(query.values)?.l2_norm()?.mean();
        Ok(ClassMatch {
            prototypes,
            attention,
            distance,
        })
    }

    /// Pre-sigmoid discriminator output for `q̃ − t^c`.
    pub fn disc_logit(&self, query: &Encoded<'t>, prototypes: Var<'t>) -> Result<Var<'t>> {
        let diff = query.values.sub(prototypes)?;
        let reduced = diff
            .matmul(self.vars[DISC_L1_W])?
            .add_bias(self.vars[DISC_L1_B])?
            .relu();
        let width = self.pairs.len() * self.cfg.disc_reduced_dim;
        let mut h = reduced.reshape(&[1, width])?;
        for (layer, &(w, b)) in DISC_TRUNK.iter().enumerate() {
            if layer > 0 {
                h = h.relu();
            }
            h = h.matmul(self.vars[w])?.add_bias(self.vars[b])?;
        }
        h.reshape(&[])
    }
}
