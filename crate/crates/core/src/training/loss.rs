//! Few-shot and open-set losses over a batch of episodes.
//!
//! `ℓ_FS` is the mean cross-entropy of the softmax over negative distances.
//! `ℓ_OS` adds `BCE(Disc, 1)` for each known query the few-shot head gets
//! right (there are `z` of them), nothing for known queries it gets wrong,
//! and `BCE(Disc, 0)` for `z` freshly sampled unknown queries scored
//! against their own few-shot choice.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::episode::{sample_balanced_negatives, Episode};
use crate::error::{Error, Result};
use crate::model::{argmin, Encoded, Network};
use crate::tensor::{Tensor, Var};

/// Denominator of the open-set loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OsMean {
    /// Mean over contributing terms (positives + negatives).
    #[default]
    Terms,
    /// Sum divided by the number of known queries in the batch.
    Batch,
}

/// What one query added to the open-set loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OsTerm {
    /// Known and few-shot correct: `BCE(score, 1)`.
    Positive { score: f64 },
    /// Known but few-shot wrong: contributes 0.
    Skipped,
    /// Sampled unknown: `BCE(score, 0)`.
    Negative { score: f64 },
}

pub struct BatchLoss<'t> {
    pub loss_fs: Var<'t>,
    pub loss_os: Var<'t>,
    pub total: Var<'t>,
    /// Few-shot correct known queries.
    pub z: usize,
    pub known: usize,
    /// Terms in query order: known queries of each episode, then its negatives.
    pub os_terms: Vec<OsTerm>,
}

struct QueryPass<'t> {
    distances: Var<'t>,
    prototypes: Vec<Var<'t>>,
    encoded: Encoded<'t>,
    choice: usize,
}

fn run_query<'t>(
    net: &Network<'t, '_>,
    support: &[Encoded<'t>],
    query: &Tensor,
) -> Result<QueryPass<'t>> {
    let encoded = net.encode(query)?;
    let mut dists = Vec::with_capacity(support.len());
    let mut prototypes = Vec::with_capacity(support.len());
    for s in support {
        let m = net.match_class(&encoded, s)?;
        dists.push(m.distance);
        prototypes.push(m.prototypes);
    }
    let distances = Var::stack(&dists)?;
    let choice = argmin(distances.value().data()).expect("non-empty support");
    Ok(QueryPass {
        distances,
        prototypes,
        encoded,
        choice,
    })
}

/// Cross-entropy of `softmax(−distances)` against class `target`.
pub fn cross_entropy<'t>(distances: Var<'t>, target: usize) -> Result<Var<'t>> {
    Ok(distances.neg().log_softmax()?.index(target)?.neg())
}

/// Mean few-shot cross-entropy over every known query of the batch.
pub fn loss_fs<'t>(net: &Network<'t, '_>, batch: &[Episode]) -> Result<Var<'t>> {
    Ok(forward::<rand_chacha::ChaCha8Rng>(net, batch, 0.0, OsMean::Terms, None)?.loss_fs)
}

/// Gated open-set loss and the number of few-shot correct known queries.
pub fn loss_os<'t>(
    net: &Network<'t, '_>,
    batch: &[Episode],
    os_mean: OsMean,
    rng: &mut impl Rng,
) -> Result<(Var<'t>, usize)> {
    let out = batch_loss(net, batch, 1.0, os_mean, rng)?;
    Ok((out.loss_os, out.z))
}

/// `ℓ_FS + σ·ℓ_OS`.
pub fn loss_total<'t>(
    net: &Network<'t, '_>,
    batch: &[Episode],
    sigma: f64,
    os_mean: OsMean,
    rng: &mut impl Rng,
) -> Result<Var<'t>> {
    Ok(batch_loss(net, batch, sigma, os_mean, rng)?.total)
}

/// Forward pass of `ℓ_FS`, `ℓ_OS` and `ℓ_FS + σ·ℓ_OS` on one tape.
pub fn batch_loss<'t>(
    net: &Network<'t, '_>,
    batch: &[Episode],
    sigma: f64,
    os_mean: OsMean,
    rng: &mut impl Rng,
) -> Result<BatchLoss<'t>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    forward(net, batch, sigma, os_mean, Some(rng))
}

fn forward<'t, R: Rng>(
    net: &Network<'t, '_>,
    batch: &[Episode],
    sigma: f64,
    os_mean: OsMean,
    mut rng: Option<&mut R>,
) -> Result<BatchLoss<'t>> {
    let with_os = rng.is_some();
    let tape = net.vars()[0].tape();
    let mut fs_terms = Vec::new();
    let mut os_vars = Vec::new();
    let mut os_terms = Vec::new();
    let mut z = 0;
    for episode in batch {
        let support = episode
            .support()
            .iter()
            .map(|s| net.encode(&s.to_matrix()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut z_episode = 0;
        for (query, label) in episode.known_queries() {
            if *label >= episode.way() {
                return Err(Error::Contract(format!("query label {label} outside support")));
            }
            let pass = run_query(net, &support, &query.to_matrix())?;
            fs_terms.push(cross_entropy(pass.distances, *label)?);
            if !with_os {
                continue;
            }
            if pass.choice == *label {
                let logit = net.disc_logit(&pass.encoded, pass.prototypes[*label])?;
                os_terms.push(OsTerm::Positive { score: logit.sigmoid().item()? });
                os_vars.push(logit.bce_with_logits(1.0));
                z_episode += 1;
            } else {
                os_terms.push(OsTerm::Skipped);
            }
        }
        let negatives = match rng.as_deref_mut() {
            Some(r) => sample_balanced_negatives(episode, z_episode, r),
            None => Vec::new(),
        };
        for negative in negatives {
            let pass = run_query(net, &support, &negative.to_matrix())?;
            let logit = net.disc_logit(&pass.encoded, pass.prototypes[pass.choice])?;
            os_terms.push(OsTerm::Negative { score: logit.sigmoid().item()? });
            os_vars.push(logit.bce_with_logits(0.0));
        }
        z += z_episode;
    }
    let known = fs_terms.len();
    if known == 0 {
        return Err(Error::Contract("batch has no known queries".into()));
    }
    let loss_fs = Var::stack(&fs_terms)?.mean();
    let loss_os = if os_vars.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let stacked = Var::stack(&os_vars)?;
        match os_mean {
            OsMean::Terms => stacked.mean(),
            OsMean::Batch => stacked.sum().scale(1.0 / known as f64),
        }
    };
    let total = loss_fs.add(loss_os.scale(sigma))?;
    Ok(BatchLoss {
        loss_fs,
        loss_os,
        total,
        z,
        known,
        os_terms,
    })
}
