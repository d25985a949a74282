use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{degrade_dataset, fill_rng, remove_selected, select_edges, EvalError, RemovalMode};
use crate::gnn::{fine_tune, test_accuracy, GnnModel, TrainConfig};
use crate::graph::{Dataset, EdgeMask, Split};

/// `0.1, 0.2, ..., 0.9`, optionally preceded by 0 and followed by 1.
pub fn threshold_grid(with_zero: bool, with_one: bool) -> Vec<f64> {
    let lo = if with_zero { 0 } else { 1 };
    let hi = if with_one { 10 } else { 9 };
    (lo..=hi).map(|k| k as f64 / 10.0).collect()
}

/// The evaluation grid of one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinxPlan {
    pub mode: RemovalMode,
    pub thresholds: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// One (threshold, seed) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinxCell {
    pub t: f64,
    pub seed: u64,
    pub test_accuracy: f64,
    /// `1 - test_accuracy`.
    pub ginx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinxFailure {
    pub t: f64,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStat {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinxCurve {
    pub label: String,
    pub mode: RemovalMode,
    /// False for the frozen-model diagnostic.
    pub finetuned: bool,
    pub thresholds: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Ordered by threshold, then seed.
    pub cells: Vec<GinxCell>,
    pub failures: Vec<GinxFailure>,
}

impl GinxCurve {
    /// True when any (threshold, seed) cell failed.
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn values_at(&self, t: f64) -> Vec<f64> {
        self.cells.iter().filter(|c| c.t == t).map(|c| c.ginx).collect()
    }

    /// Mean and standard error of the mean over the seeds that succeeded at `t`.
    pub fn stat(&self, t: f64) -> Option<ThresholdStat> {
        let v = self.values_at(t);
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let stderr = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        Some(ThresholdStat { t, mean, stderr, seeds: v.len() })
    }

    pub fn mean(&self, t: f64) -> Option<f64> {
        self.stat(t).map(|s| s.mean)
    }

    pub fn stats(&self) -> Vec<ThresholdStat> {
        self.thresholds.iter().filter_map(|&t| self.stat(t)).collect()
    }

    /// Adds cells computed elsewhere (such as a shared undegraded baseline) and
    /// re-sorts by threshold then seed.
    pub fn merge_cells(&mut self, cells: &[GinxCell], failures: &[GinxFailure]) {
        self.cells.extend_from_slice(cells);
        self.failures.extend_from_slice(failures);
        for c in cells {
            if !self.thresholds.contains(&c.t) {
                self.thresholds.push(c.t);
            }
        }
        self.thresholds.sort_by(f64::total_cmp);
        self.cells.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.seed.cmp(&b.seed)));
        self.failures.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.seed.cmp(&b.seed)));
    }
}

/// Test accuracy after fine-tuning `pretrained` on `degraded` with shuffling seed `seed`.
pub fn finetune_accuracy(pretrained: &GnnModel, degraded: &Dataset, seed: u64, cfg: &TrainConfig) -> Result<f64, EvalError> {
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let (_, history) = fine_tune(pretrained, degraded, &cfg)?;
    history.test_accuracy.ok_or(EvalError::EmptySplit(Split::Test))
}

/// GInX curve: for each threshold and seed, fine-tune the pretrained model (never
/// a previous threshold's model) on the dataset with each graph's top-`t` edges
/// removed and record `1 - test accuracy`. Cells run in parallel; a failed cell
/// is logged, recorded, and left out of the statistics.
pub fn ginx_eval(
    label: &str,
    pretrained: &GnnModel,
    d: &Dataset,
    masks: &[EdgeMask],
    plan: &GinxPlan,
    cfg: &TrainConfig,
) -> Result<GinxCurve, EvalError> {
    let mode = plan.mode;
    if masks.len() != d.len() {
        return Err(EvalError::MaskCount { masks: masks.len(), graphs: d.len() });
    }
    let grid: Vec<(f64, u64)> = plan.thresholds.iter().flat_map(|&t| plan.seeds.iter().map(move |&s| (t, s))).collect();
    let outcomes: Vec<Result<f64, EvalError>> = grid
        .par_iter()
        .map(|&(t, seed)| {
            let degraded = degrade_dataset(d, masks, mode, t, seed)?;
            finetune_accuracy(pretrained, &degraded, seed, cfg)
        })
        .collect();
    let mut curve = GinxCurve {
        label: label.to_owned(),
        mode,
        finetuned: true,
        thresholds: plan.thresholds.clone(),
        seeds: plan.seeds.clone(),
        cells: Vec::new(),
        failures: Vec::new(),
    };
    for ((t, seed), outcome) in grid.into_iter().zip(outcomes) {
        match outcome {
            Ok(acc) => curve.cells.push(GinxCell { t, seed, test_accuracy: acc, ginx: 1.0 - acc }),
            Err(e @ (EvalError::Gnn(_) | EvalError::EmptySplit(_))) => {
                warn!("{label} {mode} t={t} seed={seed}: {e}; cell excluded");
                curve.failures.push(GinxFailure { t, seed, reason: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(curve)
}

/// Frozen-model counterpart of [`ginx_eval`]: same degraded test graphs, no fine-tuning.
pub fn ginx_no_finetune(
    label: &str,
    pretrained: &GnnModel,
    d: &Dataset,
    masks: &[EdgeMask],
    plan: &GinxPlan,
) -> Result<GinxCurve, EvalError> {
    let mode = plan.mode;
    if masks.len() != d.len() {
        return Err(EvalError::MaskCount { masks: masks.len(), graphs: d.len() });
    }
    let test = d.indices(Split::Test);
    if test.is_empty() {
        return Err(EvalError::EmptySplit(Split::Test));
    }
    let mut cells = Vec::new();
    for &t in &plan.thresholds {
        for &seed in &plan.seeds {
            let mut graphs = Vec::with_capacity(test.len());
            for &i in &test {
                let g = &d.graphs[i];
                let sel = select_edges(g, &masks[i], t, &mut fill_rng(seed, i))
                    .map_err(|source| EvalError::AtGraph { graph: i, source })?;
                graphs.push(remove_selected(g, &sel, mode)?);
            }
            let splits = vec![Split::Test; graphs.len()];
            let degraded = Dataset { name: d.name.clone(), graphs, splits, truth_masks: None };
            let acc = test_accuracy(pretrained, &degraded, Split::Test)?;
            cells.push(GinxCell { t, seed, test_accuracy: acc, ginx: 1.0 - acc });
        }
    }
    Ok(GinxCurve {
        label: label.to_owned(),
        mode,
        finetuned: false,
        thresholds: plan.thresholds.clone(),
        seeds: plan.seeds.clone(),
        cells,
        failures: Vec::new(),
    })
}

/// `sum_{t=0}^{0.8} (1 - t) * (G(t + 0.1) - G(t))` over per-threshold means `G(0), ..., G(0.9)`.
pub fn edgerank_from_means(means: &[f64; 10]) -> f64 {
    (0..9).map(|k| (1.0 - k as f64 / 10.0) * (means[k + 1] - means[k])).sum()
}

/// EdgeRank of a curve holding thresholds 0 through 0.9.
pub fn edgerank(curve: &GinxCurve) -> Result<f64, EvalError> {
    let mut means = [0.0; 10];
    for (k, t) in threshold_grid(true, false).into_iter().enumerate() {
        means[k] = curve.mean(t).ok_or(EvalError::MissingThreshold(t))?;
    }
    Ok(edgerank_from_means(&means))
}
