//! Root run configuration, read from one JSON file and overridden by flags.

use std::path::{Path, PathBuf};

use qtmine_core::highlight::DEFAULT_SENTENCE_TEMPLATE;
use qtmine_core::model::ModelConfig;
use qtmine_core::qt::{Aggregation, DEFAULT_EFFICACY_TARGET, DEFAULT_RANK_TEMPLATE, DEFAULT_SIDE_EFFECT_TEMPLATE};
use qtmine_core::tokenizer::DEFAULT_VOCAB_SIZE;
use qtmine_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::load_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub trials: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub approvals: Option<PathBuf>,
    pub analogies: Option<PathBuf>,
    pub model_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            trials: None,
            aliases: None,
            approvals: None,
            analogies: None,
            model_dir: "model".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Templates {
    pub rank: String,
    pub side_effect: String,
    pub sentence: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            rank: DEFAULT_RANK_TEMPLATE.into(),
            side_effect: DEFAULT_SIDE_EFFECT_TEMPLATE.into(),
            sentence: DEFAULT_SENTENCE_TEMPLATE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Targets {
    pub efficacy: String,
    pub side_effect: String,
}

impl Default for Targets {
    fn default() -> Self {
        Targets { efficacy: DEFAULT_EFFICACY_TARGET.into(), side_effect: "nausea".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KshotSettings {
    pub k: usize,
    pub train: TrainConfig,
}

impl Default for KshotSettings {
    fn default() -> Self {
        KshotSettings {
            k: 5,
            train: TrainConfig { steps: 100, batch_size: 8, learning_rate: 5e-4, eval_every: 0, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcSettings {
    pub years: Vec<i32>,
    pub retrain: bool,
}

impl Default for FcSettings {
    fn default() -> Self {
        FcSettings { years: (2005..=2016).collect(), retrain: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every stochastic component; replaces the seeds inside the
    /// nested training configurations.
    pub seed: u64,
    pub paths: Paths,
    pub vocab_size: usize,
    /// `vocab_size` here is ignored; the trained vocabulary decides it.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub kshot: KshotSettings,
    pub templates: Templates,
    pub targets: Targets,
    pub aggregation: Aggregation,
    pub fc: FcSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            vocab_size: DEFAULT_VOCAB_SIZE,
            model: ModelConfig::desk(DEFAULT_VOCAB_SIZE),
            train: TrainConfig::default(),
            kshot: KshotSettings::default(),
            templates: Templates::default(),
            targets: Targets::default(),
            aggregation: Aggregation::Arithmetic,
            fc: FcSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        load_json(path)
    }

    /// Copies the root seed into the nested training configurations.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.kshot.train.seed = self.seed;
    }

    /// The path in `slot`, which must be configured and exist.
    pub fn require(&self, slot: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let path = slot.clone().ok_or_else(|| Error::Config(format!("no {name} path configured (use --{name})")))?;
        if !path.exists() {
            return Err(Error::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not found"),
            });
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "train": {"steps": 5}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.steps, 5);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.templates.rank, DEFAULT_RANK_TEMPLATE);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#).is_err());
    }
}
