//! The declarative run config: one TOML file captures everything a
//! training or prediction run needs, so an experiment is reproducible
//! from a single artifact plus the data files it names.
//!
//! ```toml
//! language = "english"
//! preset = "english-roberta-base"   # or an inline [hyperparams] table
//! train = "data/en_train.csv"       # paths resolve relative to this file
//! dev = "data/en_dev.csv"
//! test = "data/en_test.csv"
//! output_dir = "runs/en"
//! seed = 42                         # optional; beats the preset's seed
//!
//! [overrides]                       # optional sparse hyperparameter edits
//! num_epochs = 3
//! ```
//!
//! `tokenizer_dir` (vocab.json + merges.txt) and `backbone_dir` (saved
//! encoder weights) are optional; without them a run uses the built-in
//! character tokenizer and a freshly initialized backbone, which is the
//! self-contained mode the fixture tests run in.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use hopespeech::classifier::BackboneConfig;
use hopespeech::{BackboneSource, HyperParams, TokenizerHandle};

/// Environment variable that redirects all run outputs, taking
/// precedence over the config's `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "HOPESPEECH_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    English,
    German,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::English => "english",
            Language::German => "german",
        }
    }
}

/// Raw file schema; unknown keys are rejected to catch typos.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    language: Language,
    preset: Option<String>,
    hyperparams: Option<toml::Table>,
    overrides: Option<toml::Table>,
    train: Option<PathBuf>,
    dev: Option<PathBuf>,
    test: Option<PathBuf>,
    output_dir: PathBuf,
    seed: Option<i64>,
    tokenizer_dir: Option<PathBuf>,
    backbone_dir: Option<PathBuf>,
}

/// A parsed and resolved run config: hyperparameters merged, relative
/// paths anchored at the config file, environment override applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub language: Language,
    /// Preset name the hyperparameters came from, if any (manifest
    /// bookkeeping; "inline" otherwise).
    pub preset: Option<String>,
    pub params: HyperParams,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub tokenizer_dir: Option<PathBuf>,
    pub backbone_dir: Option<PathBuf>,
}

fn anchor(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Merges the hyperparameter sources: preset or inline table, then
/// sparse `[overrides]`, then the top-level `seed`. Every merge result
/// must still deserialize and validate as a full parameter set.
fn resolve_params(file: &RunConfigFile) -> Result<HyperParams> {
    let mut table = match (&file.preset, &file.hyperparams) {
        (Some(name), None) => {
            let params = HyperParams::preset(name)?;
            toml::Table::try_from(&params).expect("params serialize to a table")
        }
        (None, Some(inline)) => inline.clone(),
        (Some(_), Some(_)) => {
            bail!("config sets both 'preset' and '[hyperparams]'; pick one source")
        }
        (None, None) => {
            bail!("config needs either 'preset' or an inline [hyperparams] table")
        }
    };
    if let Some(overrides) = &file.overrides {
        for (key, value) in overrides {
            table.insert(key.clone(), value.clone());
        }
    }
    let mut params: HyperParams = table
        .try_into()
        .context("hyperparameters (after overrides) do not form a valid set")?;
    if let Some(seed) = file.seed {
        params.seed = seed;
    }
    params.validate()?;
    Ok(params)
}

impl RunConfig {
    /// Loads and resolves a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading run config {}", path.display()))?;
        let file: RunConfigFile = toml::from_str(&raw)
            .with_context(|| format!("parsing run config {}", path.display()))?;
        let params = resolve_params(&file)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let output_dir = match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) => PathBuf::from(dir),
            None => anchor(&base, file.output_dir),
        };
        Ok(RunConfig {
            language: file.language,
            preset: file.preset,
            params,
            train: file.train.map(|p| anchor(&base, p)),
            dev: file.dev.map(|p| anchor(&base, p)),
            test: file.test.map(|p| anchor(&base, p)),
            output_dir,
            tokenizer_dir: file.tokenizer_dir.map(|p| anchor(&base, p)),
            backbone_dir: file.backbone_dir.map(|p| anchor(&base, p)),
        })
    }

    /// The run's tokenizer: a subword vocabulary from `tokenizer_dir`,
    /// or the built-in character tokenizer when none is configured.
    pub fn tokenizer(&self) -> Result<TokenizerHandle> {
        match &self.tokenizer_dir {
            Some(dir) => {
                let id = dir
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or("tokenizer")
                    .to_string();
                Ok(TokenizerHandle::from_dir(id, dir)?)
            }
            None => Ok(TokenizerHandle::toy()),
        }
    }

    /// Where the encoder comes from: a saved directory, or fresh
    /// parameters shaped by the hyperparameters over the tokenizer's
    /// vocabulary.
    pub fn backbone_source(&self, tokenizer: &TokenizerHandle) -> BackboneSource {
        match &self.backbone_dir {
            Some(dir) => BackboneSource::Dir(dir.clone()),
            None => BackboneSource::Fresh(BackboneConfig {
                architecture: self.params.model_architecture.clone(),
                vocab_size: tokenizer.vocab_size(),
                hidden_size: self.params.hidden_size,
                max_positions: self.params.max_sequence_length,
                num_layers: self.params.num_layers,
                num_heads: self.params.num_attention_heads,
                intermediate_size: self.params.intermediate_size,
            }),
        }
    }

    /// The run's best-checkpoint directory.
    pub fn checkpoint_dir(&self) -> PathBuf {
        self.output_dir.join("checkpoint")
    }
}
