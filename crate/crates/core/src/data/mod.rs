//! Skeleton sequences: preprocessing, files, dataset index, and the
//! synthetic motion generator.

pub mod io;
pub mod preprocess;
mod sequence;
pub mod synth;

pub use io::{load_ntu_style, LoadOptions, LoadReport, Manifest};
pub use preprocess::{
    center_pelvis, subsample_frames, subsample_indices, validate_sequence, Expectations, Violation,
};
pub use sequence::SkeletonSequence;
pub use synth::{generate_synthetic, SynthActionSpec, SynthSuite};

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// One class: its sequences sorted by `source_id`, the first being the
/// exemplar.
#[derive(Clone, Debug)]
pub struct ClassEntry {
    pub name: String,
    pub split: Split,
    sequences: Vec<Arc<SkeletonSequence>>,
}

impl ClassEntry {
    pub fn new(name: String, split: Split, mut sequences: Vec<Arc<SkeletonSequence>>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::Data(format!("class {name} has no sequences")));
        }
        sequences.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        Ok(Self {
            name,
            split,
            sequences,
        })
    }

    pub fn sequences(&self) -> &[Arc<SkeletonSequence>] {
        &self.sequences
    }

    /// The fixed support instance: lexicographically first `source_id`.
    pub fn exemplar(&self) -> &Arc<SkeletonSequence> {
        &self.sequences[0]
    }
}

/// Immutable set of classes, sorted by name.
#[derive(Clone, Debug, Default)]
pub struct DatasetIndex {
    classes: Vec<ClassEntry>,
}

impl DatasetIndex {
    pub fn new(mut classes: Vec<ClassEntry>) -> Result<Self> {
        classes.sort_by(|a, b| a.name.cmp(&b.name));
        let mut seen = HashSet::new();
        for c in &classes {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Data(format!("duplicate class {}", c.name)));
            }
        }
        Ok(Self { classes })
    }

    /// Preprocesses a generated suite in memory, tagging held-out classes
    /// as test and the rest as train.
    pub fn from_suite(suite: &SynthSuite, seed: u64, expect: &Expectations) -> Result<Self> {
        let classes = suite
            .generate(seed)
            .into_iter()
            .map(|(name, seqs)| {
                let split = if suite.is_test(&name) { Split::Test } else { Split::Train };
                let seqs = seqs
                    .iter()
                    .map(|s| preprocess::preprocess(s, expect).map(Arc::new))
                    .collect::<Result<Vec<_>>>()?;
                ClassEntry::new(name, split, seqs)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(classes)
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    /// Classes of one split.
    pub fn split(&self, split: Split) -> DatasetIndex {
        Self {
            classes: self.classes.iter().filter(|c| c.split == split).cloned().collect(),
        }
    }

    pub fn sequence_count(&self) -> usize {
        self.classes.iter().map(|c| c.sequences.len()).sum()
    }
}
