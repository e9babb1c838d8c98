//! Open-set evaluation over exemplar-based k-way tasks.
//!
//! Every test sequence is scored once against every class exemplar into a
//! [`ScoreTable`]; a task then picks `k` classes and classifies each query
//! from the table rows of those classes. Known queries are the sequences of
//! the chosen classes, unknown queries everything else.

mod table;

pub use table::ScoreTable;

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::DatasetIndex;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{decide, Decision, Model};
use crate::training::{train_loop, TrainConfig};

/// Fraction of positions where `predictions[i] == targets[i]`; `Reject`
/// matches `Reject`.
pub fn fsos_acc(predictions: &[Decision], targets: &[Decision]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Contract("no queries".into()));
    }
    let hits = predictions.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / targets.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Learned discriminator confidence.
    TrxOs,
    /// `exp(−min distance)` confidence on the same few-shot head.
    Exp,
    /// Uniform draw over the k classes and reject.
    Random,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::TrxOs => "TRX-OS",
            Method::Exp => "EXP",
            Method::Random => "RANDOM",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trx-os" | "trxos" => Ok(Self::TrxOs),
            "exp" => Ok(Self::Exp),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown method `{other}` (trx-os, exp, random)"))),
        }
    }
}

/// One task: chosen class indices (table order) and per-query targets.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTask {
    pub support: Vec<usize>,
    pub targets: Vec<Decision>,
}

impl EvalTask {
    pub fn new(table: &ScoreTable, support: Vec<usize>) -> Self {
        let targets = table
            .query_classes()
            .iter()
            .map(|c| match support.iter().position(|s| s == c) {
                Some(slot) => Decision::Accept(slot),
                None => Decision::Reject,
            })
            .collect();
        Self { support, targets }
    }

    pub fn sample(table: &ScoreTable, k: usize, rng: &mut impl Rng) -> Result<Self> {
        let n = table.classes().len();
        if k == 0 || k >= n {
            return Err(Error::Config(format!(
                "k = {k} needs 1 <= k < {n} test classes so unknown queries exist"
            )));
        }
        Ok(Self::new(table, index::sample(rng, n, k).into_vec()))
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }
}

/// Per-query decisions on a task.
pub fn classify_task(table: &ScoreTable, task: &EvalTask, method: Method, tau: f64, rng: &mut impl Rng) -> Vec<Decision> {
    (0..table.query_count())
        .map(|q| match method {
            Method::Random => {
                let r = rng.random_range(0..=task.k());
                if r == task.k() {
                    Decision::Reject
                } else {
                    Decision::Accept(r)
                }
            }
            Method::TrxOs | Method::Exp => {
                let (slot, score) = table.choose(q, &task.support, method == Method::Exp);
                decide(slot, score, tau)
            }
        })
        .collect()
}

/// Few-shot accuracy over the known queries of a task (open-set decision ignored).
pub fn fs_accuracy(table: &ScoreTable, task: &EvalTask) -> f64 {
    let mut hits = 0;
    let mut known = 0;
    for (q, t) in task.targets.iter().enumerate() {
        if let Decision::Accept(slot) = t {
            known += 1;
            if table.choose(q, &task.support, false).0 == *slot {
                hits += 1;
            }
        }
    }
    hits as f64 / known.max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassRate {
    pub class: String,
    /// Accepted fraction of this class's queries while it was in the support set.
    pub known_accept: f64,
    /// Accepted fraction while it was unknown.
    pub unknown_accept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub method: Method,
    pub k: usize,
    pub mean: f64,
    /// Population standard deviation over repetitions.
    pub std: f64,
    pub accs: Vec<f64>,
    /// Mean few-shot accuracy on known queries; NaN for the random predictor.
    pub fs_acc: f64,
    pub class_rates: Vec<ClassRate>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if xs.iter().all(|x| *x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Generator of repetition `rep`, independent of the other repetitions.
pub fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 + 1);
    rng
}

struct RepOutcome {
    acc: f64,
    fs_acc: f64,
    // per class: (known accepted, known total, unknown accepted, unknown total)
    counts: Vec<[usize; 4]>,
}

fn run_rep(table: &ScoreTable, method: Method, k: usize, tau: f64, rng: &mut ChaCha8Rng) -> Result<RepOutcome> {
    let task = EvalTask::sample(table, k, rng)?;
    let preds = classify_task(table, &task, method, tau, rng);
    let mut counts = vec![[0usize; 4]; table.classes().len()];
    for (q, (p, t)) in preds.iter().zip(&task.targets).enumerate() {
        let c = &mut counts[table.query_classes()[q]];
        let base = if matches!(t, Decision::Accept(_)) { 0 } else { 2 };
        c[base + 1] += 1;
        if matches!(p, Decision::Accept(_)) {
            c[base] += 1;
        }
    }
    Ok(RepOutcome {
        acc: fsos_acc(&preds, &task.targets)?,
        fs_acc: if table.has_scores() { fs_accuracy(table, &task) } else { f64::NAN },
        counts,
    })
}

fn summarize(table: &ScoreTable, method: Method, k: usize, outcomes: Vec<RepOutcome>) -> EvalResult {
    let accs: Vec<f64> = outcomes.iter().map(|o| o.acc).collect();
    let (mean, std) = mean_std(&accs);
    let fs_acc = mean_std(&outcomes.iter().map(|o| o.fs_acc).collect::<Vec<_>>()).0;
    let mut totals = vec![[0usize; 4]; table.classes().len()];
    for o in &outcomes {
        for (t, c) in totals.iter_mut().zip(&o.counts) {
            for i in 0..4 {
                t[i] += c[i];
            }
        }
    }
    let rate = |a: usize, n: usize| if n == 0 { f64::NAN } else { a as f64 / n as f64 };
    let class_rates = table
        .classes()
        .iter()
        .zip(&totals)
        .map(|(name, t)| ClassRate {
            class: name.clone(),
            known_accept: rate(t[0], t[1]),
            unknown_accept: rate(t[2], t[3]),
        })
        .collect();
    EvalResult {
        method,
        k,
        mean,
        std,
        accs,
        fs_acc,
        class_rates,
    }
}

/// `reps` independent tasks on a prebuilt table, scored in parallel.
pub fn run_protocol_on(table: &ScoreTable, method: Method, cfg: &ProtocolConfig) -> Result<EvalResult> {
    if cfg.reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    if method != Method::Random && !table.has_scores() {
        return Err(Error::Contract(format!("{} needs a scored table", method.label())));
    }
    let outcomes = exec::map_range(cfg.reps, |rep| {
        run_rep(table, method, cfg.k, cfg.tau, &mut rep_rng(cfg.seed, rep))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(summarize(table, method, cfg.k, outcomes))
}

/// Evaluates `model` on the classes of `test` (one exemplar each).
pub fn run_protocol(model: &Model, test: &DatasetIndex, method: Method, cfg: &ProtocolConfig) -> Result<EvalResult> {
    if cfg.k >= test.len() {
        return Err(Error::Config(format!(
            "k = {} needs more than k test classes, have {}",
            cfg.k,
            test.len()
        )));
    }
    let table = ScoreTable::build(model, test)?;
    run_protocol_on(&table, method, cfg)
}

/// Full-fidelity variant: trains a fresh model (seed `train.seed + rep`)
/// for each repetition and evaluates it on one task.
pub fn run_protocol_retrained(
    data: &DatasetIndex,
    train: &TrainConfig,
    methods: &[Method],
    cfg: &ProtocolConfig,
) -> Result<Vec<EvalResult>> {
    let test = data.split(crate::data::Split::Test);
    if cfg.k >= test.len() {
        return Err(Error::Config(format!("k = {} needs more than k test classes", cfg.k)));
    }
    let mut per_method: Vec<Vec<RepOutcome>> = methods.iter().map(|_| Vec::new()).collect();
    let mut last_table = None;
    for rep in 0..cfg.reps {
        let mut tc = train.clone();
        tc.seed = train.seed.wrapping_add(rep as u64);
        let (model, _) = train_loop(data, &tc, None)?;
        let table = ScoreTable::build(&model, &test)?;
        for (m, out) in methods.iter().zip(per_method.iter_mut()) {
            out.push(run_rep(&table, *m, cfg.k, cfg.tau, &mut rep_rng(cfg.seed, rep))?);
        }
        last_table = Some(table);
    }
    let table = last_table.ok_or_else(|| Error::Config("reps must be >= 1".into()))?;
    Ok(methods
        .iter()
        .zip(per_method)
        .map(|(m, o)| summarize(&table, *m, cfg.k, o))
        .collect())
}

/// Accept rates with a one-class support: entry `(r, c)` is the fraction of
/// class `c` queries scoring above `tau` against the exemplar of class `r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub rates: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("support");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, row) in self.classes.iter().zip(&self.rates) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn os_confusion_matrix(table: &ScoreTable, tau: f64) -> ConfusionMatrix {
    let n = table.classes().len();
    let mut rates = vec![vec![0.0; n]; n];
    for (r, row) in rates.iter_mut().enumerate() {
        let mut accepted = vec![0usize; n];
        let mut total = vec![0usize; n];
        for q in 0..table.query_count() {
            let c = table.query_classes()[q];
            total[c] += 1;
            if table.disc_score(q, r) > tau {
                accepted[c] += 1;
            }
        }
        for c in 0..n {
            row[c] = accepted[c] as f64 / total[c].max(1) as f64;
        }
    }
    ConfusionMatrix {
        classes: table.classes().to_vec(),
        rates,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub k: usize,
    pub method: &'static str,
    pub mean: f64,
    pub std: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Expected accuracy of a uniform predictor over `k + 1` outcomes on a
/// task: summed over labels, the frequency of each label times the chance
/// `1 / (k + 1)` of predicting it, which is `1 / (k + 1)` for any task.
pub fn random_baseline(task: &EvalTask) -> f64 {
    1.0 / (task.k() as f64 + 1.0)
}

/// TRX-OS, EXP and analytic RANDOM rows for every `k`.
pub fn compare_baseline(
    table: &ScoreTable,
    ks: &[usize],
    reps: usize,
    seed: u64,
    tau: f64,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for &k in ks {
        let cfg = ProtocolConfig { k, reps, seed, tau };
        for method in [Method::TrxOs, Method::Exp] {
            let r = run_protocol_on(table, method, &cfg)?;
            rows.push(ComparisonRow { k, method: method.label(), mean: r.mean, std: r.std, reps, seed });
        }
        let accs = (0..reps)
            .map(|rep| EvalTask::sample(table, k, &mut rep_rng(seed, rep)).map(|t| random_baseline(&t)))
            .collect::<Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&accs);
        rows.push(ComparisonRow { k, method: Method::Random.label(), mean, std, reps, seed });
    }
    Ok(rows)
}

pub const COMPARISON_HEADER: &str = "k,method,mean,std,reps,seed";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.k, r.method, r.mean, r.std, r.reps, r.seed);
    }
    out
}

/// Methods as rows, one `mean ± std` column per k.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.dedup();
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut out = format!("{:<8}", "method");
    for k in &ks {
        let _ = write!(out, " | {:^13}", format!("k={k}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(8 + ks.len() * 16));
    out.push('\n');
    for m in methods {
        let _ = write!(out, "{m:<8}");
        for k in &ks {
            match rows.iter().find(|r| r.k == *k && r.method == m) {
                Some(r) => {
                    let _ = write!(out, " | {:.3} ± {:.3}", r.mean, r.std);
                }
                None => out.push_str(" |              "),
            }
        }
        out.push('\n');
    }
    out
}
