//! Merges the JSON artifacts of an output directory into one comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ginx_core::eval::{FidelityReport, RemovalMode, ThresholdStat};
use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    curve_stem, json_files, read_json, write_atomic, write_json, CurveArtifact, DatasetMeta, FidelityArtifact, MaskMeta, Stamp,
    CODE_VERSION,
};
use crate::commands::Context;
use crate::plotdata::{emit_curve, emit_plotdata};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub explainer: String,
    pub mode: RemovalMode,
    pub finetuned: bool,
    pub edgerank: Option<f64>,
    /// Mean GInX at the dataset's optimal threshold.
    pub ginx_at_optimal: Option<f64>,
    pub partial: bool,
    pub stats: Vec<ThresholdStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSummary {
    pub explainer: String,
    pub critical_threshold: Option<f64>,
    pub auc: Option<f64>,
    pub fidelity: Vec<FidelityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub code_version: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub dataset: Option<String>,
    pub truth_fraction: Option<f64>,
    pub optimal_threshold: Option<f64>,
    /// Grouped by mode and fine-tuning, each group ranked by EdgeRank.
    pub curves: Vec<CurveSummary>,
    pub explainers: Vec<ExplainerSummary>,
}

/// Checks that every artifact was computed on the same dataset.
struct HashGuard {
    expected: Option<(PathBuf, String)>,
}

impl HashGuard {
    fn check(&mut self, path: &Path, stamp: &Stamp, config_hash: &str) -> Result<(), CliError> {
        if stamp.config_hash != config_hash {
            warn!("{} was produced under config {}, current config is {config_hash}", path.display(), stamp.config_hash);
        }
        match &self.expected {
            None => {
                self.expected = Some((path.to_owned(), stamp.dataset_hash.clone()));
                Ok(())
            }
            Some((_, h)) if *h == stamp.dataset_hash => Ok(()),
            Some((_, h)) => Err(CliError::DatasetMismatch {
                path: path.to_owned(),
                expected: h.clone(),
                found: stamp.dataset_hash.clone(),
            }),
        }
    }
}

fn read_all<T: DeserializeOwned>(dir: &Path, command: &'static str) -> Result<Vec<(PathBuf, T)>, CliError> {
    json_files(dir)?.into_iter().map(|p| read_json(&p, command).map(|v| (p, v))).collect()
}

fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.4}"))
}

/// Writes `summary.json`, `report.tsv`, and the plot tables; returns the table.
pub fn report(ctx: &Context) -> Result<String, CliError> {
    let layout = &ctx.layout;
    let curves: Vec<(PathBuf, CurveArtifact)> = read_all(&layout.curves_dir(), "ginx-eval")?;
    let fidelity: Vec<(PathBuf, FidelityArtifact)> = read_all(&layout.fidelity_dir(), "fidelity")?;
    if curves.is_empty() && fidelity.is_empty() {
        return Err(CliError::NothingToReport(layout.root.clone()));
    }
    let masks: Vec<(PathBuf, MaskMeta)> = read_all(&layout.masks_dir(), "explain")?;
    let dataset: Option<DatasetMeta> =
        if layout.dataset_meta().exists() { Some(read_json(&layout.dataset_meta(), "gen-data")?) } else { None };

    let mut guard = HashGuard { expected: None };
    if let Some(m) = &dataset {
        guard.check(&layout.dataset_meta(), &m.stamp, &ctx.hash)?;
    }
    for (p, a) in &curves {
        guard.check(p, &a.stamp, &ctx.hash)?;
    }
    for (p, a) in &fidelity {
        guard.check(p, &a.stamp, &ctx.hash)?;
    }
    for (p, a) in &masks {
        guard.check(p, &a.stamp, &ctx.hash)?;
    }
    let dataset_hash = guard.expected.map(|(_, h)| h).unwrap_or_default();
    let optimal = dataset.as_ref().and_then(|m| m.optimal_threshold);
    let dataset_name = dataset.as_ref().map(|m| m.name.clone()).or_else(|| curves.first().map(|(_, a)| a.dataset.clone()));

    let mut rows: Vec<CurveSummary> = curves
        .iter()
        .map(|(_, a)| CurveSummary {
            explainer: a.explainer.clone(),
            mode: a.curve.mode,
            finetuned: a.curve.finetuned,
            edgerank: a.edgerank,
            ginx_at_optimal: optimal.and_then(|t| a.curve.mean(t)),
            partial: a.curve.is_partial(),
            stats: a.curve.stats(),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.mode
            .cmp(&b.mode)
            .then(b.finetuned.cmp(&a.finetuned))
            .then(b.edgerank.unwrap_or(f64::NEG_INFINITY).total_cmp(&a.edgerank.unwrap_or(f64::NEG_INFINITY)))
            .then(a.explainer.cmp(&b.explainer))
    });

    let mut by_explainer: BTreeMap<String, ExplainerSummary> = BTreeMap::new();
    let blank = |id: &str| ExplainerSummary { explainer: id.to_owned(), critical_threshold: None, auc: None, fidelity: Vec::new() };
    for (_, m) in &masks {
        let e = by_explainer.entry(m.explainer.clone()).or_insert_with(|| blank(&m.explainer));
        e.critical_threshold = Some(m.critical_threshold);
        e.auc = m.auc;
    }
    for (_, f) in &fidelity {
        by_explainer.entry(f.explainer.clone()).or_insert_with(|| blank(&f.explainer)).fidelity.push(f.report.clone());
    }

    let summary = Summary {
        code_version: CODE_VERSION.to_owned(),
        config_hash: ctx.hash.clone(),
        dataset_hash,
        dataset: dataset_name.clone(),
        truth_fraction: dataset.as_ref().and_then(|m| m.truth_fraction),
        optimal_threshold: optimal,
        curves: rows,
        explainers: by_explainer.into_values().collect(),
    };
    write_json(&layout.summary(), &summary)?;

    let table = comparison_table(&summary);
    write_atomic(&layout.report_table(), table.as_bytes())?;

    let name = dataset_name.unwrap_or_else(|| "dataset".to_owned());
    let mut groups: BTreeMap<(RemovalMode, bool), Vec<&CurveArtifact>> = BTreeMap::new();
    for (_, a) in &curves {
        groups.entry((a.curve.mode, a.curve.finetuned)).or_default().push(a);
        let stem = curve_stem(&a.explainer, a.curve.mode, a.curve.finetuned);
        let path = layout.plot_dir().join("curves").join(format!("{stem}.tsv"));
        write_atomic(&path, emit_curve(&a.curve, &ctx.hash).as_bytes())?;
    }
    for ((mode, finetuned), list) in groups {
        let refs: Vec<_> = list.iter().map(|a| &a.curve).collect();
        let stem = curve_stem(&slug(&name), mode, finetuned);
        write_atomic(&layout.plot_dir().join(format!("{stem}.tsv")), emit_plotdata(&name, &refs, &ctx.hash).as_bytes())?;
    }
    Ok(table)
}

/// Tab-separated table with one row per curve, then one per explainer.
pub fn comparison_table(s: &Summary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "# dataset {}; config {}", s.dataset.as_deref().unwrap_or("NA"), s.config_hash);
    if let Some(opt_t) = s.optimal_threshold {
        let _ = writeln!(t, "# optimal threshold {opt_t} (truth nonzero fraction {})", opt(s.truth_fraction));
    }
    t.push_str("explainer\tmode\tfinetuned\tedgerank\tginx_at_optimal\tpartial\n");
    for r in &s.curves {
        let _ = writeln!(
            t,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.explainer,
            r.mode,
            r.finetuned,
            opt(r.edgerank),
            opt(r.ginx_at_optimal),
            r.partial
        );
    }
    if !s.explainers.is_empty() {
        t.push_str("\nexplainer\tauc\tcritical_threshold\tmode\tfaithfulness\tfid_plus_prob\tfid_plus_acc\n");
        for e in &s.explainers {
            if e.fidelity.is_empty() {
                let _ = writeln!(t, "{}\t{}\t{}\tNA\tNA\tNA\tNA", e.explainer, opt(e.auc), opt(e.critical_threshold));
            }
            for f in &e.fidelity {
                let _ = writeln!(
                    t,
                    "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                    e.explainer,
                    opt(e.auc),
                    opt(e.critical_threshold),
                    f.mode,
                    f.faithfulness,
                    f.fid_plus_prob,
                    f.fid_plus_acc
                );
            }
        }
    }
    t
}
