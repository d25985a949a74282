//! Output-directory layout, artifact records, and atomic file writes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ginx_core::eval::{FidelityReport, GinxCurve, RemovalMode};
use ginx_core::gnn::{ModelDims, TrainHistory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Paths of every artifact under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_owned() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.txt")
    }
    pub fn dataset_meta(&self) -> PathBuf {
        self.root.join("dataset.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("model.ckpt")
    }
    pub fn train_meta(&self) -> PathBuf {
        self.root.join("train.json")
    }
    pub fn masks_dir(&self) -> PathBuf {
        self.root.join("masks")
    }
    pub fn masks(&self, explainer: &str) -> PathBuf {
        self.masks_dir().join(format!("{explainer}.txt"))
    }
    pub fn mask_meta(&self, explainer: &str) -> PathBuf {
        self.masks_dir().join(format!("{explainer}.json"))
    }
    pub fn curves_dir(&self) -> PathBuf {
        self.root.join("curves")
    }
    pub fn curve(&self, explainer: &str, mode: RemovalMode, finetuned: bool) -> PathBuf {
        self.curves_dir().join(format!("{}.json", curve_stem(explainer, mode, finetuned)))
    }
    pub fn results_csv(&self, finetuned: bool) -> PathBuf {
        self.root.join(if finetuned { "results.csv" } else { "results_frozen.csv" })
    }
    pub fn fidelity_dir(&self) -> PathBuf {
        self.root.join("fidelity")
    }
    pub fn fidelity(&self, explainer: &str, mode: RemovalMode) -> PathBuf {
        self.fidelity_dir().join(format!("{explainer}-{mode}.json"))
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
    pub fn report_table(&self) -> PathBuf {
        self.root.join("report.tsv")
    }
    pub fn plot_dir(&self) -> PathBuf {
        self.root.join("plot")
    }
}

pub fn curve_stem(explainer: &str, mode: RemovalMode, finetuned: bool) -> String {
    if finetuned {
        format!("{explainer}-{mode}")
    } else {
        format!("{explainer}-{mode}-frozen")
    }
}

/// Provenance carried by every JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub dataset_hash: String,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub stamp: Stamp,
    pub name: String,
    pub graphs: usize,
    pub classes: usize,
    /// Mean nonzero fraction of the ground-truth masks, when present.
    pub truth_fraction: Option<f64>,
    pub optimal_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub stamp: Stamp,
    pub dims: ModelDims,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub stamp: Stamp,
    pub explainer: String,
    pub critical_threshold: f64,
    /// Over the test split; absent without ground truth.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveArtifact {
    pub stamp: Stamp,
    pub dataset: String,
    pub explainer: String,
    pub edgerank: Option<f64>,
    pub curve: GinxCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityArtifact {
    pub stamp: Stamp,
    pub explainer: String,
    pub report: FidelityReport,
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |source| CliError::Io { path: path.to_owned(), source };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reads an artifact that `command` produces, naming that command if it is missing.
pub fn read_json<T: DeserializeOwned>(path: &Path, command: &'static str) -> Result<T, CliError> {
    let text = read_required(path, command)?;
    serde_json::from_slice(&text).map_err(|e| CliError::Corrupt { path: path.to_owned(), msg: e.to_string() })
}

pub fn read_required(path: &Path, command: &'static str) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact { path: path.to_owned(), command });
    }
    fs::read(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

/// JSON files directly inside `dir`, sorted by name; empty if `dir` is absent.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let io = |source| CliError::Io { path: dir.to_owned(), source };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}
