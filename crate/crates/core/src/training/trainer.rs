use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{sample_episode, Episode};
use super::loss::{batch_loss, OsMean};
use super::optim::{Adam, AdamConfig};
use crate::data::DatasetIndex;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Model, ModelConfig, ModelParams};
use crate::tensor::{Tape, Tensor};

/// Everything a training run reads; stored as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Optimizer steps to run.
    pub episodes: u64,
    /// Classes per episode (K).
    pub way: usize,
    /// Known queries per episode (Q).
    pub queries: usize,
    pub episodes_per_batch: usize,
    /// Steps between checkpoints; 0 saves only at the end.
    pub checkpoint_interval: u64,
    pub os_mean: OsMean,
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 2000,
            way: 3,
            queries: 4,
            episodes_per_batch: 1,
            checkpoint_interval: 500,
            os_mean: OsMean::Terms,
            model: ModelConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.way < 1 || self.queries < 1 || self.episodes_per_batch < 1 {
            return Err(Error::Config("way, queries and episodes_per_batch must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub step: u64,
    pub loss_fs: f64,
    pub loss_os: f64,
    pub loss_total: f64,
    pub z: usize,
    pub fs_acc: f64,
}

pub const REPORT_HEADER: &str = "step,loss_fs,loss_os,loss_total,z,fs_acc";

pub fn reports_csv(reports: &[TrainReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.step, r.loss_fs, r.loss_os, r.loss_total, r.z, r.fs_acc);
    }
    out
}

/// One forward/backward/update cycle. `step` is the index recorded in the
/// report.
pub fn train_step(
    model: &mut Model,
    batch: &[Episode],
    optimizer: &mut Adam,
    config: &TrainConfig,
    step: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport> {
    let (report, grads) = {
        let tape = Tape::new();
        let net = model.tracked(&tape);
        let out = batch_loss(&net, batch, model.config().sigma, config.os_mean, rng)?;
        let fs_correct = out
            .os_terms
            .iter()
            .filter(|t| matches!(t, super::loss::OsTerm::Positive { .. }))
            .count();
        let report = TrainReport {
            step,
            loss_fs: out.loss_fs.item()?,
            loss_os: out.loss_os.item()?,
            loss_total: out.total.item()?,
            z: out.z,
            fs_acc: fs_correct as f64 / out.known as f64,
        };
        if !report.loss_total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step}: loss_fs={} loss_os={} z={}",
                report.loss_fs, report.loss_os, report.z
            )));
        }
        let g = tape.backward(out.total)?;
        let grads: Vec<Option<Tensor>> = net
            .vars()
            .iter()
            .map(|&v| v.is_tracked().then(|| g.wrt(v)))
            .collect();
        if let Some(i) = grads.iter().position(|g| g.as_ref().is_some_and(|g| !g.is_finite())) {
            return Err(Error::Numeric(format!(
                "non-finite gradient for {} at step {step}",
                crate::model::PARAM_NAMES[i]
            )));
        }
        (report, grads)
    };
    optimizer.update(model.params_mut(), &grads)?;
    Ok(report)
}

/// Generator for step `step`: independent of how many steps ran before, so
/// a resumed run draws the same episodes as an uninterrupted one.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step + 1);
    rng
}

/// Model, optimizer and report history of a run in progress.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    model: Model,
    optimizer: Adam,
    reports: Vec<TrainReport>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::init(config.model.clone(), config.seed)?;
        let optimizer = Adam::new(config.optimizer, model.params());
        Ok(Self {
            config,
            model,
            optimizer,
            reports: Vec::new(),
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(config: TrainConfig, checkpoint: &Checkpoint) -> Result<Self> {
        config.validate()?;
        if checkpoint.config != config.model {
            return Err(Error::Config("checkpoint model config differs from the run config".into()));
        }
        let model = checkpoint.to_model()?;
        let optimizer = Adam::restore(config.optimizer, &config.model, checkpoint.step, |n| {
            checkpoint.get(n).cloned()
        })?;
        Ok(Self {
            config,
            model,
            optimizer,
            reports: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    /// Steps completed, including those before a resume.
    pub fn step(&self) -> u64 {
        self.optimizer.step()
    }

    /// Reports of steps run by this instance.
    pub fn reports(&self) -> &[TrainReport] {
        &self.reports
    }

    /// Weights plus optimizer moments.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model, self.step());
        ck.arrays.extend(self.optimizer.arrays());
        ck
    }

    /// Runs steps until `config.episodes` have completed, calling `on_checkpoint`
    /// every `checkpoint_interval` steps and once at the end with the
    /// checkpoint and this instance's reports so far.
    pub fn run(
        &mut self,
        train: &DatasetIndex,
        mut on_checkpoint: impl FnMut(&Checkpoint, &[TrainReport]) -> Result<()>,
    ) -> Result<()> {
        let cfg = self.config.clone();
        if train.len() < cfg.way + 1 {
            return Err(Error::Config(format!(
                "{} training classes; {}-way episodes need at least {}",
                train.len(),
                cfg.way,
                cfg.way + 1
            )));
        }
        while self.step() < cfg.episodes {
            let step = self.step();
            let mut rng = step_rng(cfg.seed, step);
            let batch = (0..cfg.episodes_per_batch)
                .map(|_| sample_episode(train, cfg.way, cfg.queries, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let report = train_step(&mut self.model, &batch, &mut self.optimizer, &cfg, step, &mut rng)?;
            if (step + 1) % 100 == 0 {
                info!(
                    "step {} loss {:.4} (fs {:.4}, os {:.4}) z {} fs_acc {:.2}",
                    step + 1,
                    report.loss_total,
                    report.loss_fs,
                    report.loss_os,
                    report.z,
                    report.fs_acc
                );
            }
            self.reports.push(report);
            let done = self.step();
            if cfg.checkpoint_interval > 0 && done % cfg.checkpoint_interval == 0 && done < cfg.episodes {
                on_checkpoint(&self.checkpoint(), &self.reports)?;
            }
        }
        on_checkpoint(&self.checkpoint(), &self.reports)
    }
}

/// Trains on the train split of `data`, writing `checkpoint.bin` and
/// `train_log.csv` into `out_dir` when given.
pub fn train_loop(
    data: &DatasetIndex,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(Model, Vec<TrainReport>)> {
    let train = data.split(crate::data::Split::Train);
    let test = data.split(crate::data::Split::Test);
    if let Some(c) = train.classes().iter().find(|c| test.class(&c.name).is_some()) {
        return Err(Error::Config(format!("class {} is in both train and test", c.name)));
    }
    let mut trainer = Trainer::new(config.clone())?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    trainer.run(&train, |ck, _| match out_dir {
        Some(dir) => ck.save(&dir.join("checkpoint.bin")),
        None => Ok(()),
    })?;
    if let Some(dir) = out_dir {
        let path = dir.join("train_log.csv");
        fs::write(&path, reports_csv(trainer.reports())).map_err(|e| Error::io(&path, e))?;
    }
    let reports = trainer.reports().to_vec();
    Ok((trainer.into_model(), reports))
}

/// Indices of trainable parameters in the discriminator.
pub fn discriminator_params(cfg: &ModelConfig) -> Vec<usize> {
    (0..crate::model::PARAM_NAMES.len())
        .filter(|&i| ModelParams::is_discriminator(i) && ModelParams::is_trainable(cfg, i))
        .collect()
}
