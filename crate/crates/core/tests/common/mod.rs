#![allow(dead_code)]

pub mod oracle;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trxos::data::{ClassEntry, DatasetIndex, Expectations, SkeletonSequence, Split, SynthSuite};
use trxos::model::ModelConfig;
use trxos::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small network: F frames, J joints, every width `d`.
pub fn tiny_config(frames: usize, joints: usize, d: usize) -> ModelConfig {
    ModelConfig {
        frames,
        joints,
        embed_dim: d,
        query_dim: d,
        key_dim: d,
        value_dim: d,
        disc_reduced_dim: 2,
        disc_hidden: Some([6, 4, 3]),
        ..Default::default()
    }
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

pub fn random_sequence(cfg: &ModelConfig, rng: &mut impl Rng, class: &str, id: &str) -> Arc<SkeletonSequence> {
    let n = cfg.frames * cfg.joints * 3;
    let mut data: Vec<f64> = (0..n).map(|_| rng.random_range(-0.9..0.9)).collect();
    for t in 0..cfg.frames {
        for c in 0..3 {
            data[t * cfg.joints * 3 + c] = 0.0;
        }
    }
    Arc::new(SkeletonSequence::new(cfg.frames, cfg.joints, data, Some(class.into()), id).unwrap())
}

/// `classes` classes of `per_class` random sequences each, all in `split`.
pub fn random_index(cfg: &ModelConfig, classes: usize, per_class: usize, split: Split, seed: u64) -> DatasetIndex {
    let mut r = rng(seed);
    let entries = (0..classes)
        .map(|c| {
            let name = format!("class{c:02}");
            let seqs = (0..per_class)
                .map(|i| random_sequence(cfg, &mut r, &name, &format!("{name}_{i:03}")))
                .collect();
            ClassEntry::new(name, split, seqs).unwrap()
        })
        .collect();
    DatasetIndex::new(entries).unwrap()
}

pub fn default_expect() -> Expectations {
    Expectations { frames: Some(16), joints: Some(24), pelvis: 0 }
}

pub fn builtin_index(seed: u64) -> DatasetIndex {
    DatasetIndex::from_suite(&SynthSuite::builtin(), seed, &default_expect()).unwrap()
}
