//! Straight-loop reference implementations of the forward pass, written
//! against the raw parameter arrays.

use trxos::model::{ModelConfig, ModelParams};

pub struct Weights<'a> {
    cfg: &'a ModelConfig,
    params: &'a ModelParams,
}

fn mat(params: &ModelParams, name: &str) -> (Vec<usize>, Vec<f64>) {
    let (_, t) = params.named().find(|(n, _)| *n == name).expect("parameter");
    (t.shape().to_vec(), t.data().to_vec())
}

/// `x · W + b` with explicit loops; `W` is `in × out`.
fn linear(x: &[f64], w: &(Vec<usize>, Vec<f64>), b: Option<&(Vec<usize>, Vec<f64>)>) -> Vec<f64> {
    let (rows, cols) = (w.0[0], w.0[1]);
    assert_eq!(x.len(), rows);
    let mut out = vec![0.0; cols];
    for j in 0..cols {
        let mut acc = 0.0;
        for i in 0..rows {
            acc += x[i] * w.1[i * cols + j];
        }
        if let Some(b) = b {
            acc += b.1[j];
        }
        out[j] = acc;
    }
    out
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect()
}

fn layer_norm(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    v.iter().map(|x| (x - mean) / (var + 1e-5).sqrt()).collect()
}

/// Per-pair projections of one sequence.
pub struct Pairs {
    pub queries: Vec<Vec<f64>>,
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

impl<'a> Weights<'a> {
    pub fn new(cfg: &'a ModelConfig, params: &'a ModelParams) -> Self {
        Self { cfg, params }
    }

    pub fn embed_frame(&self, frame: &[f64]) -> Vec<f64> {
        let p = self.params;
        let h = relu(linear(frame, &mat(p, "psi_w1"), Some(&mat(p, "psi_b1"))));
        relu(linear(&h, &mat(p, "psi_w2"), Some(&mat(p, "psi_b2"))))
    }

    /// Projections of one `2·D` pair row.
    pub fn project(&self, pair: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.params;
        (
            layer_norm(&linear(pair, &mat(p, "upsilon"), None)),
            layer_norm(&linear(pair, &mat(p, "gamma"), None)),
            linear(pair, &mat(p, "lambda"), None),
        )
    }

    /// `sequence` is `F·J·3` values, frame-major.
    pub fn encode(&self, sequence: &[f64]) -> Pairs {
        let f = self.cfg.frames;
        let w = self.cfg.joints * 3;
        let d = self.cfg.embed_dim;
        let pe = mat(self.params, "pe_table").1;
        let emb: Vec<Vec<f64>> = (0..f)
            .map(|t| {
                let e = self.embed_frame(&sequence[t * w..(t + 1) * w]);
                (0..d).map(|j| e[j] + pe[t * d + j]).collect()
            })
            .collect();
        let mut out = Pairs { queries: vec![], keys: vec![], values: vec![] };
        for a in 0..f {
            for b in a + 1..f {
                let mut row = emb[a].clone();
                row.extend_from_slice(&emb[b]);
                let (q, k, v) = self.project(&row);
                out.queries.push(q);
                out.keys.push(k);
                out.values.push(v);
            }
        }
        out
    }

    /// Prototype for one query projection against support keys/values.
    pub fn prototype(&self, query: &[f64], keys: &[Vec<f64>], values: &[Vec<f64>]) -> Vec<f64> {
        let logits: Vec<f64> = keys
            .iter()
            .map(|k| query.iter().zip(k).map(|(a, b)| a * b).sum())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let mut out = vec![0.0; values[0].len()];
        for (e, v) in exps.iter().zip(values) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += e / z * x;
            }
        }
        out
    }

    /// Query pair `2·D` against `M` support pairs.
    pub fn attention_prototype(&self, query_pair: &[f64], support_pairs: &[Vec<f64>]) -> Vec<f64> {
        let (q, _, _) = self.project(query_pair);
        let mut keys = vec![];
        let mut values = vec![];
        for s in support_pairs {
            let (_, k, v) = self.project(s);
            keys.push(k);
            values.push(v);
        }
        self.prototype(&q, &keys, &values)
    }

    pub fn prototypes(&self, query: &Pairs, support: &Pairs) -> Vec<Vec<f64>> {
        query
            .queries
            .iter()
            .map(|q| self.prototype(q, &support.keys, &support.values))
            .collect()
    }

    pub fn distance(&self, query: &[f64], support: &[f64]) -> f64 {
        let (q, s) = (self.encode(query), self.encode(support));
        let protos = self.prototypes(&q, &s);
        let total: f64 = protos
            .iter()
            .zip(&q.values)
            .map(|(t, v)| t.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .sum();
        total / protos.len() as f64
    }

    pub fn discriminator_score(&self, query: &[f64], chosen: &[f64]) -> f64 {
        let p = self.params;
        let (q, s) = (self.encode(query), self.encode(chosen));
        let protos = self.prototypes(&q, &s);
        let mut flat = vec![];
        for (v, t) in q.values.iter().zip(&protos) {
            let diff: Vec<f64> = v.iter().zip(t).map(|(a, b)| a - b).collect();
            flat.extend(relu(linear(&diff, &mat(p, "disc_l1_w"), Some(&mat(p, "disc_l1_b")))));
        }
        let mut h = linear(&flat, &mat(p, "disc_w1"), Some(&mat(p, "disc_b1")));
        for (w, b) in [("disc_w2", "disc_b2"), ("disc_w3", "disc_b3"), ("disc_out_w", "disc_out_b")] {
            h = linear(&relu(h), &mat(p, w), Some(&mat(p, b)));
        }
        1.0 / (1.0 + (-h[0]).exp())
    }
}
