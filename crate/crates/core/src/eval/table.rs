use crate::data::DatasetIndex;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{argmin, Model};

/// Distances and discriminator scores of every test query against every
/// class exemplar.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    classes: Vec<String>,
    query_classes: Vec<usize>,
    query_ids: Vec<String>,
    distances: Vec<f64>,
    disc: Vec<f64>,
}

impl ScoreTable {
    /// Queries are all sequences of `test`, class by class; supports are
    /// the class exemplars.
    pub fn build(model: &Model, test: &DatasetIndex) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::Data("no test classes".into()));
        }
        let classes: Vec<String> = test.classes().iter().map(|c| c.name.clone()).collect();
        let mut queries = Vec::new();
        let mut query_classes = Vec::new();
        for (i, c) in test.classes().iter().enumerate() {
            for s in c.sequences() {
                queries.push(s);
                query_classes.push(i);
            }
        }
        let exemplars = exec::map_range(classes.len(), |i| model.encode(&test.classes()[i].exemplar().to_matrix()))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let n = classes.len();
        let rows = exec::map_range(queries.len(), |q| -> Result<Vec<(f64, f64)>> {
            let enc = model.encode(&queries[q].to_matrix())?;
            exemplars
                .iter()
                .map(|e| {
                    let s = model.score(&enc, std::slice::from_ref(e))?;
                    Ok((s.distances[0], s.disc_score))
                })
                .collect()
        });
        let mut distances = Vec::with_capacity(queries.len() * n);
        let mut disc = Vec::with_capacity(queries.len() * n);
        for row in rows {
            for (d, s) in row? {
                distances.push(d);
                disc.push(s);
            }
        }
        Ok(Self {
            classes,
            query_classes,
            query_ids: queries.iter().map(|s| s.source_id.clone()).collect(),
            distances,
            disc,
        })
    }

    /// Class layout only, for predictors that ignore the model.
    pub fn labels_only(test: &DatasetIndex) -> Self {
        let mut query_classes = Vec::new();
        let mut query_ids = Vec::new();
        for (i, c) in test.classes().iter().enumerate() {
            for s in c.sequences() {
                query_classes.push(i);
                query_ids.push(s.source_id.clone());
            }
        }
        Self {
            classes: test.classes().iter().map(|c| c.name.clone()).collect(),
            query_classes,
            query_ids,
            distances: Vec::new(),
            disc: Vec::new(),
        }
    }

    /// False for [`ScoreTable::labels_only`] tables.
    pub fn has_scores(&self) -> bool {
        !self.distances.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn query_count(&self) -> usize {
        self.query_classes.len()
    }

    /// True class index of every query.
    pub fn query_classes(&self) -> &[usize] {
        &self.query_classes
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn distance(&self, query: usize, class: usize) -> f64 {
        self.distances[query * self.classes.len() + class]
    }

    pub fn disc_score(&self, query: usize, class: usize) -> f64 {
        self.disc[query * self.classes.len() + class]
    }

    /// Few-shot choice (support slot) among `support` classes and its
    /// confidence: the discriminator score, or `exp(−distance)` when `exp`.
    pub fn choose(&self, query: usize, support: &[usize], exp: bool) -> (usize, f64) {
        let d: Vec<f64> = support.iter().map(|&c| self.distance(query, c)).collect();
        let slot = argmin(&d).expect("non-empty support");
        let score = if exp { (-d[slot]).exp() } else { self.disc_score(query, support[slot]) };
        (slot, score)
    }
}
