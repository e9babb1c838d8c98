use std::collections::HashSet;
use std::sync::Arc;

use log::warn;
use rand::seq::index;
use rand::Rng;

use crate::data::{DatasetIndex, SkeletonSequence};
use crate::error::{Error, Result};

/// One few-shot task: a support exemplar per class, known queries labelled
/// by support index, and a pool of sequences from other classes.
#[derive(Clone, Debug)]
pub struct Episode {
    support: Vec<Arc<SkeletonSequence>>,
    labels: Vec<String>,
    known_queries: Vec<(Arc<SkeletonSequence>, usize)>,
    unknown_pool: Vec<Arc<SkeletonSequence>>,
}

impl Episode {
    /// Checks: distinct support labels, query labels index the support,
    /// no unknown sequence carries a support label.
    pub fn new(
        support: Vec<Arc<SkeletonSequence>>,
        labels: Vec<String>,
        known_queries: Vec<(Arc<SkeletonSequence>, usize)>,
        unknown_pool: Vec<Arc<SkeletonSequence>>,
    ) -> Result<Self> {
        if support.is_empty() || support.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} support sequences for {} labels",
                support.len(),
                labels.len()
            )));
        }
        let known: HashSet<&str> = labels.iter().map(String::as_str).collect();
        if known.len() != labels.len() {
            return Err(Error::Contract("support labels must be distinct".into()));
        }
        if let Some((_, y)) = known_queries.iter().find(|(_, y)| *y >= labels.len()) {
            return Err(Error::Contract(format!(
                "query label index {y} outside the {}-way support",
                labels.len()
            )));
        }
        if let Some(s) = unknown_pool
            .iter()
            .find(|s| s.class_label.as_deref().is_some_and(|c| known.contains(c)))
        {
            return Err(Error::Contract(format!(
                "unknown pool sequence {} has support label {:?}",
                s.source_id, s.class_label
            )));
        }
        Ok(Self {
            support,
            labels,
            known_queries,
            unknown_pool,
        })
    }

    pub fn way(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[Arc<SkeletonSequence>] {
        &self.support
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn known_queries(&self) -> &[(Arc<SkeletonSequence>, usize)] {
        &self.known_queries
    }

    pub fn unknown_pool(&self) -> &[Arc<SkeletonSequence>] {
        &self.unknown_pool
    }
}

/// Uniform sample of `z` pool sequences without replacement; takes the
/// whole pool when it is smaller than `z`.
pub fn sample_balanced_negatives(
    episode: &Episode,
    z: usize,
    rng: &mut impl Rng,
) -> Vec<Arc<SkeletonSequence>> {
    let pool = episode.unknown_pool();
    if z > pool.len() {
        warn!("unknown pool has {} sequences, {z} negatives requested", pool.len());
    }
    let n = z.min(pool.len());
    index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| Arc::clone(&pool[i]))
        .collect()
}

/// Draws an episode from `data`: `way` random classes with one random
/// support instance each, `queries` known queries from those classes (never
/// the support instance itself), and every sequence of the remaining
/// classes as the unknown pool.
pub fn sample_episode(
    data: &DatasetIndex,
    way: usize,
    queries: usize,
    rng: &mut impl Rng,
) -> Result<Episode> {
    let classes = data.classes();
    if classes.len() < way + 1 {
        return Err(Error::Config(format!(
            "{}-way episodes need at least {} classes (one left over for unknowns), have {}",
            way,
            way + 1,
            classes.len()
        )));
    }
    if let Some(c) = classes.iter().find(|c| c.sequences().len() < 2) {
        return Err(Error::Config(format!(
            "class {} needs at least two sequences for support and query",
            c.name
        )));
    }
    let chosen = index::sample(rng, classes.len(), way).into_vec();
    let mut support = Vec::with_capacity(way);
    let mut support_pick = Vec::with_capacity(way);
    for &c in &chosen {
        let seqs = classes[c].sequences();
        let i = rng.random_range(0..seqs.len());
        support.push(Arc::clone(&seqs[i]));
        support_pick.push(i);
    }
    let mut known = Vec::with_capacity(queries);
    for _ in 0..queries {
        let slot = rng.random_range(0..way);
        let seqs = classes[chosen[slot]].sequences();
        // any instance except the support one
        let mut i = rng.random_range(0..seqs.len() - 1);
        if i >= support_pick[slot] {
            i += 1;
        }
        known.push((Arc::clone(&seqs[i]), slot));
    }
    let unknown_pool = classes
        .iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .flat_map(|(_, c)| c.sequences().iter().cloned())
        .collect();
    let labels = chosen.iter().map(|&c| classes[c].name.clone()).collect();
    Episode::new(support, labels, known, unknown_pool)
}
