//! Run configuration: parsing, validation, and materialization of defaults.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ginx_core::eval::{threshold_grid, RemovalMode, Truncation};
use ginx_core::explain::{ExplainerConfig, ExplainerId};
use ginx_core::gnn::TrainConfig;
use ginx_core::synthgen::DatasetSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("config: {0}")]
    Syntax(String),
}

fn field_error(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_owned(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[serde(rename = "ba_2motifs")]
    Ba2motifs,
    BaHouseGrid,
}

impl Preset {
    pub fn spec(self) -> DatasetSpec {
        match self {
            Preset::Ba2motifs => DatasetSpec::ba_2motifs(),
            Preset::BaHouseGrid => DatasetSpec::ba_house_grid(),
        }
    }
}

/// Either a generator preset with optional overrides, or a dataset file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub preset: Option<Preset>,
    pub path: Option<PathBuf>,
    pub num_graphs: Option<usize>,
    pub base_nodes: Option<usize>,
    pub ba_attach: Option<usize>,
    pub motifs_min: Option<usize>,
    pub motifs_max: Option<usize>,
    pub gen_seed: Option<u64>,
    pub split_seed: Option<u64>,
}

impl DatasetConfig {
    fn has_overrides(&self) -> bool {
        self.num_graphs.is_some()
            || self.base_nodes.is_some()
            || self.ba_attach.is_some()
            || self.motifs_min.is_some()
            || self.motifs_max.is_some()
            || self.gen_seed.is_some()
            || self.split_seed.is_some()
    }

    /// Generator recipe, or `None` when the dataset is loaded from a file.
    pub fn spec(&self) -> Option<DatasetSpec> {
        let base = self.preset?.spec();
        Some(DatasetSpec {
            num_graphs: self.num_graphs.unwrap_or(base.num_graphs),
            base_nodes: self.base_nodes.unwrap_or(base.base_nodes),
            ba_attach: self.ba_attach.unwrap_or(base.ba_attach),
            motifs_min: self.motifs_min.unwrap_or(base.motifs_min),
            motifs_max: self.motifs_max.unwrap_or(base.motifs_max),
            gen_seed: self.gen_seed.unwrap_or(base.gen_seed),
            split_seed: self.split_seed.unwrap_or(base.split_seed),
            ..base
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    /// Seeds parameter initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 32, layers: 3, init_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub modes: Vec<RemovalMode>,
    /// Degradation levels; the undegraded `t = 0` point is always added.
    pub thresholds: Vec<f64>,
    /// Fine-tuning seeds; each also seeds the random fill of short masks.
    pub seeds: Vec<u64>,
    /// False evaluates the pretrained model without fine-tuning.
    pub finetune: bool,
    pub fidelity_truncation: Truncation,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            modes: vec![RemovalMode::Hard],
            thresholds: threshold_grid(false, false),
            seeds: (0..5).collect(),
            finetune: true,
            fidelity_truncation: Truncation::TopK(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub explainers: Vec<ExplainerId>,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub explainer: ExplainerConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: None,
            explainers: vec![ExplainerId::Truth, ExplainerId::Inverse, ExplainerId::Random],
            dataset: DatasetConfig { preset: Some(Preset::BaHouseGrid), ..DatasetConfig::default() },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            explainer: ExplainerConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

/// Command-line adjustments applied before materialization.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    /// Added to every seed in the config.
    pub seed_offset: u64,
    pub no_finetune: bool,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let msg = e.into_inner().message().trim().to_owned();
            if field == "." {
                ConfigError::Syntax(msg)
            } else {
                field_error(&field, msg)
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    /// Applies `ov`, fills every default, resolves the output directory, and
    /// validates the result. `default_out` is used when neither `ov.out` nor
    /// `output_dir` is set.
    pub fn materialize(mut self, ov: &Overrides, default_out: &Path) -> Result<Self, ConfigError> {
        if let Some(out) = &ov.out {
            self.output_dir = Some(out.clone());
        }
        if self.output_dir.is_none() {
            self.output_dir = Some(default_out.to_owned());
        }
        if ov.no_finetune {
            self.evaluation.finetune = false;
        }
        let k = ov.seed_offset;
        if k != 0 {
            self.model.init_seed = self.model.init_seed.wrapping_add(k);
            self.train.seed = self.train.seed.wrapping_add(k);
            self.explainer.seed = self.explainer.seed.wrapping_add(k);
            for s in &mut self.evaluation.seeds {
                *s = s.wrapping_add(k);
            }
        }
        let d = &mut self.dataset;
        match (d.preset, &d.path) {
            (Some(_), Some(_)) => return Err(field_error("dataset", "set either `preset` or `path`, not both")),
            (None, None) => return Err(field_error("dataset", "set `preset` or `path`")),
            (None, Some(p)) => {
                if d.has_overrides() {
                    return Err(field_error("dataset", "generator overrides need a `preset`"));
                }
                if !p.is_file() {
                    return Err(field_error("dataset.path", format!("no dataset file at {}", p.display())));
                }
            }
            (Some(_), None) => {
                let spec = d.spec().expect("preset present");
                spec.validate().map_err(|e| field_error("dataset", e.to_string()))?;
                d.num_graphs = Some(spec.num_graphs);
                d.base_nodes = Some(spec.base_nodes);
                d.ba_attach = Some(spec.ba_attach);
                d.motifs_min = Some(spec.motifs_min);
                d.motifs_max = Some(spec.motifs_max);
                d.gen_seed = Some(spec.gen_seed);
                d.split_seed = Some(spec.split_seed);
            }
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.explainers.is_empty() {
            return Err(field_error("explainers", "list at least one explainer"));
        }
        if self.explainers.iter().collect::<HashSet<_>>().len() != self.explainers.len() {
            return Err(field_error("explainers", "explainers must be distinct"));
        }
        if self.model.hidden == 0 || self.model.layers == 0 {
            return Err(field_error("model", "hidden and layers must be positive"));
        }
        self.train.validate().map_err(|e| field_error("train", e.to_string()))?;
        self.explainer.validate().map_err(|e| field_error("explainer", e.to_string()))?;
        let ev = &self.evaluation;
        if ev.seeds.is_empty() {
            return Err(field_error("evaluation.seeds", "list at least one seed"));
        }
        if ev.seeds.iter().collect::<HashSet<_>>().len() != ev.seeds.len() {
            return Err(field_error("evaluation.seeds", "seeds must be distinct"));
        }
        if ev.modes.is_empty() {
            return Err(field_error("evaluation.modes", "list at least one removal mode"));
        }
        if ev.modes.iter().collect::<HashSet<_>>().len() != ev.modes.len() {
            return Err(field_error("evaluation.modes", "modes must be distinct"));
        }
        if ev.thresholds.is_empty() {
            return Err(field_error("evaluation.thresholds", "list at least one threshold"));
        }
        if ev.thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(field_error("evaluation.thresholds", "thresholds must lie in (0, 1]"));
        }
        if ev.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field_error("evaluation.thresholds", "thresholds must be strictly increasing"));
        }
        match ev.fidelity_truncation {
            Truncation::TopK(0) => return Err(field_error("evaluation.fidelity_truncation", "k must be positive")),
            Truncation::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(field_error("evaluation.fidelity_truncation", "fraction must lie in (0, 1]"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        self.output_dir.as_deref().unwrap_or(Path::new("."))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of everything that affects results; the output directory is excluded.
    pub fn hash(&self) -> String {
        let keyed = RunConfig { output_dir: None, ..self.clone() };
        short_hash(keyed.to_toml().as_bytes())
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
