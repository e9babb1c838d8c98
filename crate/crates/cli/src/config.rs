use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trxos::training::TrainConfig;

use crate::CliError;

/// Contents of the `--config` file; every section is optional and command
/// line flags override what it sets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gen_data: GenSettings,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub confusion: ConfusionSettings,
    pub infer: InferSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSettings {
    pub seed: u64,
    /// Overrides the suite's sequences per class.
    pub per_class: Option<usize>,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self { seed: 0, per_class: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub k: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Defaults to the checkpoint's τ.
    pub tau: Option<f64>,
    pub methods: Vec<String>,
    pub compare: bool,
    pub retrain_per_rep: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            k: vec![3],
            reps: 100,
            seed: 0,
            tau: None,
            methods: vec!["trx-os".into()],
            compare: false,
            retrain_per_rep: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfusionSettings {
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSettings {
    pub tau: Option<f64>,
    pub confidence: Option<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Core(trxos::Error::io(path, e)))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Writes the resolved configuration as `config.toml` in `dir`.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| trxos::Error::io(dir, e))?;
        let path = dir.join("config.toml");
        let text = toml::to_string(self).map_err(|e| CliError::Usage(e.to_string()))?;
        fs::write(&path, text).map_err(|e| trxos::Error::io(&path, e))?;
        Ok(())
    }
}
