//! The pipeline stages behind each subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ginx_core::eval::{
    critical_threshold, edgerank, fidelity_suite, ginx_eval, ginx_no_finetune, optimal_threshold, threshold_grid, GinxCurve,
    GinxPlan, RemovalMode,
};
use ginx_core::explain::{explain_dataset, ExplainerId, MaskFile};
use ginx_core::gnn::{load_checkpoint_expecting, save_checkpoint, train, GnnModel, ModelDims};
use ginx_core::graph::{Dataset, EdgeMask, Split};
use ginx_core::synthgen::{build_dataset, load_dataset, read_dataset, write_dataset};
use log::{info, warn};

use crate::artifacts::{
    read_json, read_required, write_atomic, write_json, CurveArtifact, DatasetMeta, FidelityArtifact, Layout, MaskMeta, Stamp,
    TrainMeta, CODE_VERSION,
};
use crate::config::{short_hash, RunConfig};
use crate::CliError;

/// A materialized config together with its hash and output layout.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub hash: String,
    pub layout: Layout,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Self {
        let hash = cfg.hash();
        let layout = Layout::new(cfg.out_dir());
        Self { cfg, hash, layout }
    }

    fn stamp(&self, dataset_hash: &str) -> Stamp {
        Stamp { config_hash: self.hash.clone(), dataset_hash: dataset_hash.to_owned(), code_version: CODE_VERSION.to_owned() }
    }

    fn write_config(&self) -> Result<(), CliError> {
        let text = format!("# config {}\n{}", self.hash, self.cfg.to_toml());
        write_atomic(&self.layout.config(), text.as_bytes())
    }

    /// Loads the generated dataset and the hash of its file.
    fn dataset(&self) -> Result<(Dataset, String), CliError> {
        let bytes = read_required(&self.layout.dataset(), "gen-data")?;
        let d = read_dataset(bytes.as_slice())?;
        Ok((d, short_hash(&bytes)))
    }

    fn model(&self, d: &Dataset, dataset_hash: &str) -> Result<GnnModel, CliError> {
        let meta: TrainMeta = read_json(&self.layout.train_meta(), "train")?;
        check_dataset(&self.layout.train_meta(), &meta.stamp, dataset_hash)?;
        let path = self.layout.checkpoint();
        if !path.exists() {
            return Err(CliError::MissingArtifact { path, command: "train" });
        }
        Ok(load_checkpoint_expecting(&path, &self.dims(d))?)
    }

    fn masks(&self, id: ExplainerId, d: &Dataset, dataset_hash: &str) -> Result<Vec<EdgeMask>, CliError> {
        let meta_path = self.layout.mask_meta(id.as_str());
        let meta: MaskMeta = read_json(&meta_path, "explain")?;
        check_dataset(&meta_path, &meta.stamp, dataset_hash)?;
        let path = self.layout.masks(id.as_str());
        let bytes = read_required(&path, "explain")?;
        Ok(MaskFile::read(bytes.as_slice())?.to_masks(d)?)
    }

    fn dims(&self, d: &Dataset) -> ModelDims {
        let (node_dim, edge_dim) = d.feature_dims();
        let classes = d.graphs.iter().map(|g| g.label + 1).max().unwrap_or(2).max(2);
        ModelDims { node_dim, edge_dim, hidden: self.cfg.model.hidden, layers: self.cfg.model.layers, classes }
    }
}

fn check_dataset(path: &Path, stamp: &Stamp, dataset_hash: &str) -> Result<(), CliError> {
    if stamp.dataset_hash != dataset_hash {
        return Err(CliError::DatasetMismatch {
            path: path.to_owned(),
            expected: dataset_hash.to_owned(),
            found: stamp.dataset_hash.clone(),
        });
    }
    Ok(())
}

/// Generates or loads the dataset and writes it in canonical form.
pub fn gen_data(ctx: &Context) -> Result<DatasetMeta, CliError> {
    let d = match (ctx.cfg.dataset.spec(), &ctx.cfg.dataset.path) {
        (Some(spec), _) => build_dataset(&spec)?,
        (None, Some(path)) => load_dataset(path)?,
        (None, None) => unreachable!("materialized config names a dataset source"),
    };
    d.validate()?;
    let mut bytes = Vec::new();
    write_dataset(&d, &mut bytes)?;
    let dataset_hash = short_hash(&bytes);
    ctx.write_config()?;
    write_atomic(&ctx.layout.dataset(), &bytes)?;
    let truth_fraction = match &d.truth_masks {
        Some(masks) => {
            let graphs: Vec<_> = d.graphs.iter().collect();
            Some(critical_threshold(&graphs, &masks.iter().collect::<Vec<_>>())?)
        }
        None => None,
    };
    let meta = DatasetMeta {
        stamp: ctx.stamp(&dataset_hash),
        name: d.name.clone(),
        graphs: d.len(),
        classes: ctx.dims(&d).classes,
        truth_fraction,
        optimal_threshold: truth_fraction.map(optimal_threshold),
    };
    write_json(&ctx.layout.dataset_meta(), &meta)?;
    info!("dataset {} with {} graphs written to {}", d.name, d.len(), ctx.layout.dataset().display());
    Ok(meta)
}

/// Pretrains the classifier and writes its checkpoint and history.
pub fn train_model(ctx: &Context) -> Result<TrainMeta, CliError> {
    let (d, dataset_hash) = ctx.dataset()?;
    let dims = ctx.dims(&d);
    let (model, history) = train(GnnModel::new(dims, ctx.cfg.model.init_seed), &d, &ctx.cfg.train)?;
    ctx.write_config()?;
    let path = ctx.layout.checkpoint();
    let tmp = path.with_extension("ckpt.tmp");
    save_checkpoint(&model, &tmp)?;
    fs::rename(&tmp, &path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    info!(
        "trained for {} epochs, chose epoch {}, test accuracy {:?}",
        history.train_loss.len(),
        history.chosen_epoch,
        history.test_accuracy
    );
    let meta = TrainMeta { stamp: ctx.stamp(&dataset_hash), dims, history };
    write_json(&ctx.layout.train_meta(), &meta)?;
    Ok(meta)
}

/// Runs every configured explainer over the whole dataset.
pub fn explain(ctx: &Context) -> Result<Vec<MaskMeta>, CliError> {
    let (d, dataset_hash) = ctx.dataset()?;
    let model = if ctx.cfg.explainers.iter().any(|id| id.needs_model()) { Some(ctx.model(&d, &dataset_hash)?) } else { None };
    ctx.write_config()?;
    let graphs: Vec<_> = d.graphs.iter().collect();
    let test = d.indices(Split::Test);
    let mut metas = Vec::new();
    for &id in &ctx.cfg.explainers {
        info!("explaining {} graphs with {id}", d.len());
        let masks = explain_dataset(id, model.as_ref(), &d, &ctx.cfg.explainer)?;
        let file = MaskFile::from_masks(id.as_str(), &ctx.hash, &d, &masks)?;
        write_atomic(&ctx.layout.masks(id.as_str()), file.to_text().as_bytes())?;
        let auc = match &d.truth_masks {
            Some(truth) => {
                let g: Vec<_> = test.iter().map(|&i| &d.graphs[i]).collect();
                let m: Vec<_> = test.iter().map(|&i| &masks[i]).collect();
                let t: Vec<_> = test.iter().map(|&i| &truth[i]).collect();
                match ginx_core::eval::auc_score(&g, &m, &t) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        warn!("{id}: AUC undefined: {e}");
                        None
                    }
                }
            }
            None => None,
        };
        let meta = MaskMeta {
            stamp: ctx.stamp(&dataset_hash),
            explainer: id.as_str().to_owned(),
            critical_threshold: critical_threshold(&graphs, &masks.iter().collect::<Vec<_>>())?,
            auc,
        };
        write_json(&ctx.layout.mask_meta(id.as_str()), &meta)?;
        metas.push(meta);
    }
    Ok(metas)
}

/// Computes the GInX curve of every (explainer, mode) pair and writes the
/// curve artifacts and the results table.
pub fn ginx(ctx: &Context) -> Result<Vec<CurveArtifact>, CliError> {
    let (d, dataset_hash) = ctx.dataset()?;
    let model = ctx.model(&d, &dataset_hash)?;
    let ev = &ctx.cfg.evaluation;
    let masks: Vec<Vec<EdgeMask>> =
        ctx.cfg.explainers.iter().map(|&id| ctx.masks(id, &d, &dataset_hash)).collect::<Result<_, _>>()?;
    ctx.write_config()?;
    let thresholds: Vec<f64> = ev.thresholds.clone();
    let baseline = if ev.finetune {
        info!("fine-tuning undegraded baseline over {} seeds", ev.seeds.len());
        let plan = GinxPlan { mode: RemovalMode::Hard, thresholds: vec![0.0], seeds: ev.seeds.clone() };
        Some(ginx_eval("baseline", &model, &d, &masks[0], &plan, &ctx.cfg.train)?)
    } else {
        None
    };
    let mut artifacts = Vec::new();
    for &mode in &ev.modes {
        for (&id, m) in ctx.cfg.explainers.iter().zip(&masks) {
            let label = id.as_str();
            let curve = match &baseline {
                Some(base) => {
                    info!("GInX {label} {mode}: {} thresholds x {} seeds", thresholds.len(), ev.seeds.len());
                    let plan = GinxPlan { mode, thresholds: thresholds.clone(), seeds: ev.seeds.clone() };
                    let mut c = ginx_eval(label, &model, &d, m, &plan, &ctx.cfg.train)?;
                    c.merge_cells(&base.cells, &base.failures);
                    c
                }
                None => {
                    let mut all = vec![0.0];
                    all.extend(&thresholds);
                    let plan = GinxPlan { mode, thresholds: all, seeds: ev.seeds.clone() };
                    ginx_no_finetune(label, &model, &d, m, &plan)?
                }
            };
            if curve.is_partial() {
                warn!("{label} {mode}: curve is partial ({} failed cells)", curve.failures.len());
            }
            let rank = has_edgerank_grid(&curve).then(|| edgerank(&curve)).transpose()?;
            let artifact = CurveArtifact {
                stamp: ctx.stamp(&dataset_hash),
                dataset: d.name.clone(),
                explainer: label.to_owned(),
                edgerank: rank,
                curve,
            };
            write_json(&ctx.layout.curve(label, mode, artifact.curve.finetuned), &artifact)?;
            artifacts.push(artifact);
        }
    }
    write_atomic(&ctx.layout.results_csv(ev.finetune), results_csv(&artifacts).as_bytes())?;
    Ok(artifacts)
}

fn has_edgerank_grid(c: &GinxCurve) -> bool {
    threshold_grid(true, false).into_iter().all(|t| c.mean(t).is_some())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One row per (curve, threshold, seed) cell.
pub fn results_csv(artifacts: &[CurveArtifact]) -> String {
    let mut s = String::from("dataset,explainer,mode,t,seed,test_accuracy,ginx\n");
    for a in artifacts {
        for c in &a.curve.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                csv_field(&a.dataset),
                csv_field(&a.explainer),
                a.curve.mode,
                c.t,
                c.seed,
                c.test_accuracy,
                c.ginx
            );
        }
    }
    s
}

/// Fidelity suite of every (explainer, mode) pair on the pretrained model.
pub fn fidelity(ctx: &Context) -> Result<Vec<FidelityArtifact>, CliError> {
    let (d, dataset_hash) = ctx.dataset()?;
    let model = ctx.model(&d, &dataset_hash)?;
    ctx.write_config()?;
    let mut out = Vec::new();
    for &id in &ctx.cfg.explainers {
        let masks = ctx.masks(id, &d, &dataset_hash)?;
        for &mode in &ctx.cfg.evaluation.modes {
            let report = fidelity_suite(&model, &d, &masks, mode, ctx.cfg.evaluation.fidelity_truncation)?;
            let artifact = FidelityArtifact { stamp: ctx.stamp(&dataset_hash), explainer: id.as_str().to_owned(), report };
            write_json(&ctx.layout.fidelity(id.as_str(), mode), &artifact)?;
            out.push(artifact);
        }
    }
    Ok(out)
}

/// Every stage in order, ending with the report.
pub fn run_all(ctx: &Context) -> Result<String, CliError> {
    gen_data(ctx)?;
    train_model(ctx)?;
    explain(ctx)?;
    ginx(ctx)?;
    fidelity(ctx)?;
    crate::report::report(ctx)
}
