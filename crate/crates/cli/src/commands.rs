use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use trxos::data::io::{read_sequence, write_dataset, SEQ_EXT};
use trxos::data::preprocess::preprocess;
use trxos::data::{load_ntu_style, DatasetIndex, Expectations, LoadOptions, Split, SynthSuite};
use trxos::eval::{
    compare_baseline, comparison_csv, comparison_table, os_confusion_matrix, run_protocol_on,
    run_protocol_retrained, ComparisonRow, EvalResult, Method, ProtocolConfig, ScoreTable,
};
use trxos::model::{Checkpoint, Confidence, Decision, ModelConfig};
use trxos::training::{reports_csv, OsMean, TrainReport, Trainer, REPORT_HEADER};
use trxos::Error;

use crate::args::{ConfusionArgs, EvalArgs, GenDataArgs, InferArgs, TrainArgs, ValidateArgs};
use crate::config::RunConfig;
use crate::CliError;

const CHECKPOINT: &str = "checkpoint.bin";
const TRAIN_LOG: &str = "train_log.csv";

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn expectations(model: &ModelConfig) -> Expectations {
    Expectations {
        frames: Some(model.frames),
        joints: Some(model.joints),
        pelvis: 0,
    }
}

fn load_data(dir: &Path, model: &ModelConfig, default_split: Split) -> Result<DatasetIndex, CliError> {
    let opts = LoadOptions {
        expect: expectations(model),
        default_split,
    };
    let (data, report) = load_ntu_style(dir, &opts)?;
    if !report.errors.is_empty() {
        warn!("{} of {} files skipped", report.errors.len(), report.files_read);
    }
    if data.is_empty() {
        return Err(Error::Data(format!("{}: no usable sequences", dir.display())).into());
    }
    Ok(data)
}

fn check_tau(tau: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(tau)
    } else {
        Err(CliError::Usage(format!("tau {tau} outside [0, 1]")))
    }
}

pub fn gen_data(mut run: RunConfig, a: GenDataArgs) -> Result<(), CliError> {
    let g = &mut run.gen_data;
    g.seed = a.seed.unwrap_or(g.seed);
    g.per_class = a.per_class.or(g.per_class);
    let mut suite = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<SynthSuite>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SynthSuite::builtin(),
    };
    if let Some(n) = g.per_class {
        suite.per_class = n;
    }
    if suite.per_class == 0 || suite.actions.is_empty() {
        return Err(CliError::Usage("suite needs at least one action and one sequence per class".into()));
    }
    let classes: Vec<_> = suite
        .generate(g.seed)
        .into_iter()
        .map(|(name, seqs)| {
            let split = if suite.is_test(&name) { Split::Test } else { Split::Train };
            (name, split, seqs)
        })
        .collect();
    let manifest = write_dataset(&a.out, &classes)?;
    println!(
        "wrote {} classes x {} sequences to {}",
        manifest.classes.len(),
        suite.per_class,
        a.out.display()
    );
    Ok(())
}

fn previous_rows(path: &Path, before: u64) -> Vec<String> {
    let Ok(text) = fs::read_to_string(path) else {
        return Vec::new();
    };
    text.lines()
        .skip(1)
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|s| s < before)
        })
        .map(str::to_string)
        .collect()
}

fn log_text(previous: &[String], reports: &[TrainReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for l in previous {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str(reports_csv(reports).split_once('\n').map_or("", |(_, rows)| rows));
    out
}

pub fn train(mut run: RunConfig, a: TrainArgs) -> Result<(), CliError> {
    let t = &mut run.train;
    t.seed = a.seed.unwrap_or(t.seed);
    t.episodes = a.episodes.unwrap_or(t.episodes);
    t.way = a.way.unwrap_or(t.way);
    t.queries = a.queries.unwrap_or(t.queries);
    t.checkpoint_interval = a.checkpoint_interval.unwrap_or(t.checkpoint_interval);
    t.optimizer.lr = a.lr.unwrap_or(t.optimizer.lr);
    t.model.sigma = a.sigma.unwrap_or(t.model.sigma);
    t.model.tau = a.tau.unwrap_or(t.model.tau);
    if let Some(m) = &a.os_mean {
        t.os_mean = match m.as_str() {
            "terms" => OsMean::Terms,
            "batch" => OsMean::Batch,
            other => return Err(CliError::Usage(format!("unknown os_mean `{other}` (terms, batch)"))),
        };
    }
    t.validate()?;
    let cfg = t.clone();

    let data = load_data(&a.data, &cfg.model, Split::Train)?;
    let train = data.split(Split::Train);
    if let Some(c) = train.classes().iter().find(|c| data.split(Split::Test).class(&c.name).is_some()) {
        return Err(Error::Config(format!("class {} in both splits", c.name)).into());
    }
    if train.len() < cfg.way + 1 {
        return Err(Error::Config(format!(
            "{} training classes; {}-way episodes need at least {}",
            train.len(),
            cfg.way,
            cfg.way + 1
        ))
        .into());
    }

    let ck_path = a.out.join(CHECKPOINT);
    let log_path = a.out.join(TRAIN_LOG);
    let (mut trainer, previous) = if a.resume && ck_path.exists() {
        let ck = Checkpoint::load(&ck_path)?;
        info!("resuming from step {}", ck.step);
        (Trainer::resume(cfg.clone(), &ck)?, previous_rows(&log_path, ck.step))
    } else {
        (Trainer::new(cfg.clone())?, Vec::new())
    };
    run.echo(&a.out)?;
    trainer.run(&train, |ck, reports| {
        ck.save(&ck_path)?;
        fs::write(&log_path, log_text(&previous, reports)).map_err(|e| Error::io(&log_path, e))
    })?;
    if let Some(last) = trainer.reports().last() {
        println!(
            "step {}: loss {:.4} (fs {:.4}, os {:.4}), fs_acc {:.2}",
            last.step + 1,
            last.loss_total,
            last.loss_fs,
            last.loss_os,
            last.fs_acc
        );
    }
    println!("checkpoint: {}", ck_path.display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Ok(Checkpoint::load(path)?)
}

fn class_rates_csv(results: &[EvalResult]) -> String {
    let mut out = String::from("k,method,class,known_accept,unknown_accept\n");
    for r in results {
        for c in &r.class_rates {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k,
                r.method.label(),
                c.class,
                c.known_accept,
                c.unknown_accept
            ));
        }
    }
    out
}

pub fn eval(mut run: RunConfig, a: EvalArgs) -> Result<(), CliError> {
    let e = &mut run.eval;
    e.k = a.k.clone().unwrap_or(e.k.clone());
    e.reps = a.reps.unwrap_or(e.reps);
    e.seed = a.seed.unwrap_or(e.seed);
    e.tau = a.tau.or(e.tau);
    e.methods = a.method.clone().unwrap_or(e.methods.clone());
    e.compare |= a.compare;
    e.retrain_per_rep |= a.retrain_per_rep;
    let e = e.clone();
    if e.k.is_empty() || e.reps == 0 {
        return Err(CliError::Usage("need at least one k and reps >= 1".into()));
    }
    let methods = if e.compare {
        vec![Method::TrxOs, Method::Exp]
    } else {
        e.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?
    };
    let needs_model = methods.iter().any(|m| *m != Method::Random);

    let checkpoint = match (&a.checkpoint, needs_model && !e.retrain_per_rep) {
        (Some(p), _) => Some(load_checkpoint(p)?),
        (None, true) => return Err(CliError::Usage("--checkpoint is required for trx-os and exp".into())),
        (None, false) => None,
    };
    let model_cfg = checkpoint.as_ref().map_or(run.train.model.clone(), |c| c.config.clone());
    let tau = check_tau(e.tau.unwrap_or(model_cfg.tau))?;
    let data = load_data(&a.data, &model_cfg, Split::Test)?;
    let test = data.split(Split::Test);
    if let Some(&k) = e.k.iter().find(|&&k| k == 0 || k >= test.len()) {
        return Err(Error::Config(format!(
            "k = {k} needs 1 <= k < {} (the number of test classes) so unknown queries exist",
            test.len()
        ))
        .into());
    }
    run.echo(&a.out)?;

    let mut results = Vec::new();
    let rows: Vec<ComparisonRow> = if e.retrain_per_rep {
        for &k in &e.k {
            let cfg = ProtocolConfig { k, reps: e.reps, seed: e.seed, tau };
            results.extend(run_protocol_retrained(&data, &run.train, &methods, &cfg)?);
        }
        results.iter().map(|r| row(r, e.reps, e.seed)).collect()
    } else {
        let table = match &checkpoint {
            Some(ck) => ScoreTable::build(&ck.to_model()?, &test)?,
            None => ScoreTable::labels_only(&test),
        };
        for &k in &e.k {
            let cfg = ProtocolConfig { k, reps: e.reps, seed: e.seed, tau };
            for &m in &methods {
                results.push(run_protocol_on(&table, m, &cfg)?);
            }
        }
        if e.compare {
            compare_baseline(&table, &e.k, e.reps, e.seed, tau)?
        } else {
            results.iter().map(|r| row(r, e.reps, e.seed)).collect()
        }
    };
    write(&a.out.join("results.csv"), &comparison_csv(&rows))?;
    write(&a.out.join("per_class.csv"), &class_rates_csv(&results))?;
    let table = comparison_table(&rows);
    if e.compare {
        write(&a.out.join("table.txt"), &table)?;
    }
    print!("{table}");
    Ok(())
}

fn row(r: &EvalResult, reps: usize, seed: u64) -> ComparisonRow {
    ComparisonRow {
        k: r.k,
        method: r.method.label(),
        mean: r.mean,
        std: r.std,
        reps,
        seed,
    }
}

pub fn confusion(mut run: RunConfig, a: ConfusionArgs) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    run.confusion.tau = Some(check_tau(a.tau.or(run.confusion.tau).unwrap_or(ck.config.tau))?);
    let data = load_data(&a.data, &ck.config, Split::Test)?;
    let test = data.split(Split::Test);
    if test.is_empty() {
        return Err(Error::Data("no test classes".into()).into());
    }
    run.echo(&a.out)?;
    let table = ScoreTable::build(&ck.to_model()?, &test)?;
    let matrix = os_confusion_matrix(&table, run.confusion.tau.unwrap_or(ck.config.tau));
    let csv = matrix.to_csv();
    write(&a.out.join("confusion.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn seq_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == SEQ_EXT))
        .collect();
    files.sort();
    Ok(files)
}

pub fn infer(mut run: RunConfig, a: InferArgs) -> Result<(), CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let tau = check_tau(a.tau.or(run.infer.tau).unwrap_or(ck.config.tau))?;
    run.infer.tau = Some(tau);
    let confidence = match a.confidence.as_deref().or(run.infer.confidence.as_deref()).unwrap_or("disc") {
        "disc" => Confidence::Discriminator,
        "exp" => Confidence::Exp,
        other => return Err(CliError::Usage(format!("unknown confidence `{other}` (disc, exp)"))),
    };
    let expect = expectations(&ck.config);
    let mut names = Vec::new();
    let mut support = Vec::new();
    for path in seq_files(&a.support)? {
        let seq = preprocess(&read_sequence(&path)?, &expect)?;
        let name = seq.class_label.clone().unwrap_or_else(|| {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        });
        names.push(name);
        support.push(seq.to_matrix());
    }
    if support.is_empty() {
        return Err(Error::Data(format!("{}: no support sequences", a.support.display())).into());
    }
    let query = preprocess(&read_sequence(&a.query)?, &expect)?;
    let model = ck.to_model()?;
    let p = model.fsos_classify(&query.to_matrix(), &support, confidence, tau)?;

    let width = names.iter().map(String::len).max().unwrap_or(5).max(8);
    println!("{:<width$}  {:>8}  {:>10}", "class", "fs_score", "distance");
    for (i, n) in names.iter().enumerate() {
        let mark = if i == p.class { " *" } else { "" };
        println!("{n:<width$}  {:>8.4}  {:>10.4}{mark}", p.fs_scores[i], p.distances[i]);
    }
    println!("{:<width$}  {:>8.4}", "os_score", p.os_score);
    match p.outcome {
        Decision::Accept(c) => println!("decision: accept {} (os_score > tau = {tau})", names[c]),
        Decision::Reject => println!("decision: reject (os_score <= tau = {tau})"),
    }
    Ok(())
}

pub fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let opts = LoadOptions {
        expect: Expectations {
            frames: Some(a.frames),
            joints: Some(a.joints),
            pelvis: 0,
        },
        default_split: Split::Train,
    };
    let (data, report) = load_ntu_style(&a.data, &opts)?;
    for (path, msg) in &report.errors {
        println!("FAIL {}: {msg}", path.display());
    }
    for c in &report.excluded_classes {
        println!("EXCLUDED class {c}");
    }
    println!(
        "{} files, {} valid, {} invalid; {} classes",
        report.files_read,
        report.files_read - report.errors.len(),
        report.errors.len(),
        data.len()
    );
    if report.errors.is_empty() && report.excluded_classes.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!("{} invalid files", report.errors.len())).into())
    }
}
