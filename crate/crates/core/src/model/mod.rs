//! The few-shot open-set network: frame embedding, pair representations,
//! cross-attention class prototypes, query–class distance, and the
//! discriminator that accepts or rejects the few-shot choice.

pub mod checkpoint;
mod config;
mod network;
mod pairs;
mod params;

pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, PeKind};
pub use network::{ClassMatch, Encoded, EncodedTensors, Network};
pub use pairs::PairSet;
pub use params::{pe_table, positional_encoding, ModelParams, PARAM_NAMES};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, TensorError};

/// Outcome of open-set classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    /// Index into the support set.
    Accept(usize),
    Reject,
}

/// Source of the accept/reject confidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Confidence {
    /// Learned discriminator on `q̃ − t^{c_FS}`.
    Discriminator,
    /// `exp(−min_c T(Q, S^c))`, the EXP baseline.
    Exp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub outcome: Decision,
    /// Few-shot class choice, also reported when rejected.
    pub class: usize,
    /// Softmax over negative distances.
    pub fs_scores: Vec<f64>,
    /// Confidence that the few-shot choice is right, in [0, 1].
    pub os_score: f64,
    pub distances: Vec<f64>,
}

/// Raw per-query outputs before thresholding.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryScores {
    pub distances: Vec<f64>,
    pub class: usize,
    /// Discriminator score for `class`.
    pub disc_score: f64,
}

/// Index of the smallest distance; ties go to the lowest index.
pub fn argmin(distances: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in distances.iter().enumerate() {
        match best {
            Some((_, b)) if d >= b => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

/// EXP baseline confidence: `exp(−min distance)`.
pub fn exp_confidence(distances: &[f64]) -> f64 {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    (-min).exp()
}

/// Accept iff the score strictly exceeds `tau`.
pub fn decide(class: usize, score: f64, tau: f64) -> Decision {
    if score > tau {
        Decision::Accept(class)
    } else {
        Decision::Reject
    }
}

pub fn softmax_neg(distances: &[f64]) -> Vec<f64> {
    let max = distances.iter().map(|d| -d).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = distances.iter().map(|d| (-d - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Configuration, weights, and the pair index set.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    pairs: PairSet,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let tensors = params.tensors().into_iter().cloned().collect();
        let params = ModelParams::from_tensors(&config, tensors)?;
        let pairs = PairSet::new(config.frames);
        Ok(Self {
            config,
            params,
            pairs,
        })
    }

    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn pairs(&self) -> &PairSet {
        &self.pairs
    }

    pub(crate) fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Network with every weight as a constant.
    pub fn frozen<'t, 'a>(&'a self, tape: &'t Tape) -> Network<'t, 'a> {
        Network::frozen(tape, &self.config, &self.pairs, &self.params)
    }

    /// Network with trainable weights tracked.
    pub fn tracked<'t, 'a>(&'a self, tape: &'t Tape) -> Network<'t, 'a> {
        Network::track(tape, &self.config, &self.pairs, &self.params)
    }

    /// Ψ of a single skeleton given as `J·3` coordinates.
    pub fn embed_frame(&self, frame: &[f64]) -> Result<Vec<f64>> {
        let width = self.config.frame_width();
        if frame.len() != width {
            return Err(TensorError::Shape {
                op: "embed_frame",
                lhs: vec![width],
                rhs: vec![frame.len()],
            }
            .into());
        }
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, width], frame.to_vec())?);
        let out = self.frozen(&tape).embed_frames(x)?;
        let v = out.to_tensor().into_data();
        Ok(v)
    }

    /// `2×D` pair matrix `[e_p1 + PE(p1); e_p2 + PE(p2)]` for one-based
    /// `pair` over `F×D` frame embeddings.
    pub fn pair_representation(&self, embeddings: &Tensor, pair: (usize, usize)) -> Result<Tensor> {
        let (f, d) = (self.config.frames, self.config.embed_dim);
        if embeddings.shape() != [f, d] {
            return Err(TensorError::Shape {
                op: "pair_representation",
                lhs: vec![f, d],
                rhs: embeddings.shape().to_vec(),
            }
            .into());
        }
        let (p1, p2) = pair;
        if !(1 <= p1 && p1 < p2 && p2 <= f) {
            return Err(Error::Contract(format!("({p1}, {p2}) is not a valid pair for F={f}")));
        }
        let pe = self.params.pe_table.data();
        let e = embeddings.data();
        let mut out = Vec::with_capacity(2 * d);
        for p in [p1 - 1, p2 - 1] {
            out.extend((0..d).map(|j| e[p * d + j] + pe[p * d + j]));
        }
        Ok(Tensor::new(vec![2, d], out)?)
    }

    /// `t_p^c` for one query pair (`2×D`) against support pairs (`M×2×D`).
    pub fn attention_prototype(&self, query_pair: &Tensor, support_pairs: &Tensor) -> Result<Vec<f64>> {
        let d2 = 2 * self.config.embed_dim;
        let m = match support_pairs.shape() {
            [m, 2, d] if 2 * d == d2 && *m > 0 => *m,
            s => {
                return Err(TensorError::Shape {
                    op: "attention_prototype",
                    lhs: vec![0, 2, self.config.embed_dim],
                    rhs: s.to_vec(),
                }
                .into())
            }
        };
        if query_pair.len() != d2 {
            return Err(TensorError::Shape {
                op: "attention_prototype",
                lhs: vec![2, self.config.embed_dim],
                rhs: query_pair.shape().to_vec(),
            }
            .into());
        }
        let tape = Tape::new();
        let net = self.frozen(&tape);
        let v = net.vars();
        let q = tape.constant(query_pair.clone().reshape(vec![1, d2])?);
        let s = tape.constant(support_pairs.clone().reshape(vec![m, d2])?);
        let query = Encoded {
            pairs: q,
            queries: q.matmul(v[4])?.layer_norm()?,
            keys: q.matmul(v[5])?.layer_norm()?,
            values: q.matmul(v[6])?,
        };
        let support = Encoded {
            pairs: s,
            queries: s.matmul(v[4])?.layer_norm()?,
            keys: s.matmul(v[5])?.layer_norm()?,
            values: s.matmul(v[6])?,
        };
        let matched = net.match_class(&query, &support)?;
        let out = matched.prototypes.to_tensor().into_data();
        Ok(out)
    }

    /// Pair encodings of an `F×(J·3)` sequence, detached from any tape.
    pub fn encode(&self, sequence: &Tensor) -> Result<EncodedTensors> {
        let tape = Tape::new();
        let enc = self.frozen(&tape).encode(sequence)?;
        Ok(enc.detach())
    }

    /// `T(Q, S^c)`.
    pub fn query_class_distance(&self, query: &Tensor, support: &Tensor) -> Result<f64> {
        let tape = Tape::new();
        let net = self.frozen(&tape);
        let (q, s) = (net.encode(query)?, net.encode(support)?);
        Ok(net.match_class(&q, &s)?.distance.item()?)
    }

    /// Few-shot choice and all distances.
    pub fn fs_classify(&self, query: &Tensor, support: &[Tensor]) -> Result<(usize, Vec<f64>)> {
        let scores = self.score_raw(query, support)?;
        Ok((scores.class, scores.distances))
    }

    /// Discriminator confidence for `query` against support sequence `chosen`.
    pub fn discriminator_score(&self, query: &Tensor, chosen: &Tensor) -> Result<f64> {
        let tape = Tape::new();
        let net = self.frozen(&tape);
        let (q, s) = (net.encode(query)?, net.encode(chosen)?);
        let m = net.match_class(&q, &s)?;
        Ok(net.disc_logit(&q, m.prototypes)?.sigmoid().item()?)
    }

    fn score_raw(&self, query: &Tensor, support: &[Tensor]) -> Result<QueryScores> {
        let q = self.encode(query)?;
        let s = support
            .iter()
            .map(|x| self.encode(x))
            .collect::<Result<Vec<_>>>()?;
        self.score(&q, &s)
    }

    /// Distances to every support class, the few-shot choice, and the
    /// discriminator score for that choice.
    pub fn score(&self, query: &EncodedTensors, support: &[EncodedTensors]) -> Result<QueryScores> {
        if support.is_empty() {
            return Err(Error::Contract("empty support set".into()));
        }
        let tape = Tape::new();
        let net = self.frozen(&tape);
        let q = query.on_tape(&tape);
        let mut distances = Vec::with_capacity(support.len());
        let mut prototypes = Vec::with_capacity(support.len());
        for s in support {
            let m = net.match_class(&q, &s.on_tape(&tape))?;
            distances.push(m.distance.item()?);
            prototypes.push(m.prototypes);
        }
        let class = argmin(&distances).expect("non-empty");
        let disc_score = net.disc_logit(&q, prototypes[class])?.sigmoid().item()?;
        Ok(QueryScores {
            distances,
            class,
            disc_score,
        })
    }

    /// Open-set decision for `query` against a support set of sequences.
    pub fn fsos_classify(
        &self,
        query: &Tensor,
        support: &[Tensor],
        confidence: Confidence,
        tau: f64,
    ) -> Result<Prediction> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Contract(format!("tau {tau} outside [0, 1]")));
        }
        let scores = self.score_raw(query, support)?;
        Ok(predict(&scores, confidence, tau))
    }
}

/// Applies the threshold rule to precomputed scores.
pub fn predict(scores: &QueryScores, confidence: Confidence, tau: f64) -> Prediction {
    let os_score = match confidence {
        Confidence::Discriminator => scores.disc_score,
        Confidence::Exp => exp_confidence(&scores.distances),
    };
    Prediction {
        outcome: decide(scores.class, os_score, tau),
        class: scores.class,
        fs_scores: softmax_neg(&scores.distances),
        os_score,
        distances: scores.distances.clone(),
    }
}
