//! Line-based `key = value` run configuration.
//!
//! `#` starts a comment, blank lines are skipped, unknown keys are errors.
//! The `SSAN_SEED` environment variable overrides the configured seed.

use std::path::Path;

use crate::data::{CorpusSpec, Task, DEFAULT_DEPTH_RATIOS};
use crate::error::{Error, Result};
use crate::model::{HeadKind, ModelConfig, TrainOptions};
use crate::tree::ScoreVariant;

/// Every tunable of the pipeline with its default.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Option<Task>,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub positive_rate: f64,
    pub wrd_min_distance: usize,
    pub depth_ratios: [f64; 7],
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub selector_layer: Option<usize>,
    pub tau: f64,
    pub tau_anneal_to: Option<f64>,
    pub scale_energies: bool,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Analysis/extraction layer; None falls back to the selector layer
    /// (or layer 1 for the baseline).
    pub layer: Option<usize>,
    /// Attention head for analyses; None averages heads.
    pub head: Option<usize>,
    pub score_variant: ScoreVariant,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: None,
            vocab: 200,
            min_len: 8,
            max_len: 20,
            train_size: 10_000,
            dev_size: 1_000,
            test_size: 1_000,
            positive_rate: 0.5,
            wrd_min_distance: 1,
            depth_ratios: DEFAULT_DEPTH_RATIOS,
            d_model: 64,
            n_heads: 4,
            n_layers: 4,
            ffn_dim: 256,
            selector_layer: None,
            tau: 0.5,
            tau_anneal_to: None,
            scale_energies: false,
            dropout: 0.0,
            epochs: 2,
            lr: 1e-3,
            batch_size: 32,
            seed: 0,
            layer: None,
            head: None,
            score_variant: ScoreVariant::GeometricMean,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        for (line_idx, raw_line) in text.lines().enumerate() {
            let line_no = line_idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            config
                .apply(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
        }
        config.apply_env_overrides()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    /// Defaults plus environment overrides; used when no config file is given.
    pub fn from_env() -> Result<RunConfig> {
        let mut config = RunConfig::default();
        config.apply_env_overrides()?;
        Ok(config)
    }

    fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(value) = std::env::var("SSAN_SEED") {
            self.seed = value.parse().map_err(|_| {
                Error::Config(format!("SSAN_SEED must be an unsigned integer, got {value:?}"))
            })?;
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value {value:?} for {what}"));
        match key {
            "task" => {
                self.task = Some(Task::parse(value).ok_or_else(|| bad("task"))?);
            }
            "vocab" => self.vocab = value.parse().map_err(|_| bad(key))?,
            "min_len" => self.min_len = value.parse().map_err(|_| bad(key))?,
            "max_len" => self.max_len = value.parse().map_err(|_| bad(key))?,
            "train_size" => self.train_size = value.parse().map_err(|_| bad(key))?,
            "dev_size" => self.dev_size = value.parse().map_err(|_| bad(key))?,
            "test_size" => self.test_size = value.parse().map_err(|_| bad(key))?,
            "positive_rate" => self.positive_rate = value.parse().map_err(|_| bad(key))?,
            "wrd_min_distance" => self.wrd_min_distance = value.parse().map_err(|_| bad(key))?,
            "depth_ratios" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(key))?;
                if parts.len() != 7 {
                    return Err(Error::Config(
                        "depth_ratios needs 7 comma-separated percentages".into(),
                    ));
                }
                let total: f64 = parts.iter().sum();
                if total <= 0.0 {
                    return Err(bad(key));
                }
                let mut ratios = [0.0; 7];
                for (r, p) in ratios.iter_mut().zip(parts.iter()) {
                    *r = p / total;
                }
                self.depth_ratios = ratios;
            }
            "d_model" => self.d_model = value.parse().map_err(|_| bad(key))?,
            "n_heads" => self.n_heads = value.parse().map_err(|_| bad(key))?,
            "n_layers" => self.n_layers = value.parse().map_err(|_| bad(key))?,
            "ffn_dim" => self.ffn_dim = value.parse().map_err(|_| bad(key))?,
            "selector_layer" => {
                self.selector_layer = match value {
                    "none" => None,
                    other => Some(other.parse().map_err(|_| bad(key))?),
                };
            }
            "tau" => self.tau = value.parse().map_err(|_| bad(key))?,
            "tau_anneal_to" => {
                self.tau_anneal_to = match value {
                    "none" => None,
                    other => Some(other.parse().map_err(|_| bad(key))?),
                };
            }
            "scale_energies" => self.scale_energies = parse_bool(value).ok_or_else(|| bad(key))?,
            "dropout" => self.dropout = value.parse().map_err(|_| bad(key))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad(key))?,
            "lr" => self.lr = value.parse().map_err(|_| bad(key))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "layer" => {
                self.layer = match value {
                    "none" => None,
                    other => Some(other.parse().map_err(|_| bad(key))?),
                };
            }
            "head" => {
                self.head = match value {
                    "mean" => None,
                    other => Some(other.parse().map_err(|_| bad(key))?),
                };
            }
            "score_variant" => {
                self.score_variant = match value {
                    "geometric" => ScoreVariant::GeometricMean,
                    "product" => ScoreVariant::RawProduct,
                    _ => return Err(bad(key)),
                };
            }
            unknown => {
                return Err(Error::Config(format!("unknown config key {unknown:?}")));
            }
        }
        Ok(())
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            vocab_size: self.vocab,
            min_len: self.min_len,
            max_len: self.max_len,
            train: self.train_size,
            dev: self.dev_size,
            test: self.test_size,
            seed: self.seed,
            positive_rate: self.positive_rate,
            wrd_min_distance: self.wrd_min_distance,
            depth_ratios: self.depth_ratios,
        }
    }

    /// Concrete model config for a dataset: vocab and max_len come from the
    /// data, head and class names from the task.
    pub fn model_config(
        &self,
        head: HeadKind,
        class_names: Option<Vec<String>>,
        vocab_size: usize,
        max_len: usize,
    ) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            ffn_dim: self.ffn_dim,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            selector_layer: self.selector_layer,
            tau: self.tau,
            tau_anneal_to: self.tau_anneal_to,
            max_len,
            head,
            class_names,
            seed: self.seed,
            dropout: self.dropout,
            scale_energies: self.scale_energies,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}
