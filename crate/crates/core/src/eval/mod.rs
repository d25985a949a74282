//! Removal-based evaluation: hard and soft edge removal, fidelity and
//! faithfulness, AUC against ground truth, GInX curves from fine-tuning on
//! degraded data, EdgeRank, and sparsity thresholds.

mod ginx;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{GnnError, GnnModel};
use crate::graph::{count_for_fraction, graph_rng, nonzero_fraction, rank_edges, Dataset, EdgeMask, Graph, GraphError, Split};

pub use ginx::{
    edgerank, edgerank_from_means, finetune_accuracy, ginx_eval, ginx_no_finetune, threshold_grid, GinxCell, GinxCurve,
    GinxFailure, GinxPlan, ThresholdStat,
};


#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{masks} masks supplied for {graphs} graphs")]
    MaskCount { masks: usize, graphs: usize },
    #[error("dataset has no ground-truth masks")]
    MissingTruth,
    #[error("split `{}` is empty", .0.as_str())]
    EmptySplit(Split),
    #[error("curve has no value at threshold {0}")]
    MissingThreshold(f64),
    #[error("no graph with edges to measure")]
    NoEdges,
    #[error("AUC needs both positive and negative truth labels ({positives} positives, {negatives} negatives)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("unknown removal mode `{0}`")]
    UnknownMode(String),
    #[error("graph {graph}: {source}")]
    AtGraph {
        graph: usize,
        #[source]
        source: GraphError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    /// Delete edges and the nodes they leave isolated.
    Hard,
    /// Zero edge weights, keeping every node and edge.
    Soft,
}

impl RemovalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalMode::Hard => "hard",
            RemovalMode::Soft => "soft",
        }
    }
}

impl fmt::Display for RemovalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RemovalMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(RemovalMode::Hard),
            "soft" => Ok(RemovalMode::Soft),
            _ => Err(EvalError::UnknownMode(s.to_owned())),
        }
    }
}

/// Offsets the removal seed so random fill never shares a stream with the random explainer.
const FILL_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Random stream for the fill of graph `index` under run seed `seed`.
pub fn fill_rng(seed: u64, index: usize) -> rand_chacha::ChaCha8Rng {
    graph_rng(seed ^ FILL_STREAM_SALT, index)
}

/// Undirected edges removed at fraction `t`: the `ceil(t * E)` highest-valued
/// edges among those with a nonzero mask (ties by lowest index), topped up with
/// uniformly drawn zero-mask edges when too few are nonzero.
pub fn select_edges<R: Rng + ?Sized>(g: &Graph, mask: &EdgeMask, t: f64, rng: &mut R) -> Result<Vec<usize>, GraphError> {
    let pairs = g.edge_pairs()?;
    let values = mask.undirected_values(&pairs)?;
    let k = count_for_fraction(t, values.len())?;
    let mut chosen: Vec<usize> = rank_edges(&values).into_iter().filter(|&u| values[u] != 0.0).take(k).collect();
    if chosen.len() < k {
        let zeros: Vec<usize> = (0..values.len()).filter(|&u| values[u] == 0.0).collect();
        let fill = sample(rng, zeros.len(), k - chosen.len());
        chosen.extend(fill.into_iter().map(|i| zeros[i]));
    }
    Ok(chosen)
}

/// Applies `mode` to the undirected edges in `selected`.
pub fn remove_selected(g: &Graph, selected: &[usize], mode: RemovalMode) -> Result<Graph, GraphError> {
    let pairs = g.edge_pairs()?;
    let mut drop = vec![false; g.num_edges()];
    for &u in selected {
        for d in pairs.directed(u) {
            drop[d] = true;
        }
    }
    Ok(match mode {
        RemovalMode::Soft => {
            let mut out = g.clone();
            for (w, &gone) in out.edge_weights.iter_mut().zip(&drop) {
                if gone {
                    *w = 0.0;
                }
            }
            out
        }
        RemovalMode::Hard => delete_edges(g, &drop),
    })
}

/// Deletes flagged directed edges and any node whose last edge was deleted.
/// At least one node survives so the model can still be evaluated.
fn delete_edges(g: &Graph, drop: &[bool]) -> Graph {
    let before = g.degrees();
    let mut after = vec![0usize; g.num_nodes];
    for (e, &(s, _)) in g.edges.iter().enumerate() {
        if !drop[e] {
            after[s] += 1;
        }
    }
    let mut keep: Vec<bool> = (0..g.num_nodes).map(|i| after[i] > 0 || before[i] == 0).collect();
    if g.num_nodes > 0 && !keep.iter().any(|&k| k) {
        keep[0] = true;
    }
    let mut new_index = vec![usize::MAX; g.num_nodes];
    let kept_nodes: Vec<usize> = (0..g.num_nodes).filter(|&i| keep[i]).collect();
    for (j, &i) in kept_nodes.iter().enumerate() {
        new_index[i] = j;
    }
    let kept_edges: Vec<usize> = (0..g.num_edges()).filter(|&e| !drop[e]).collect();
    Graph {
        num_nodes: kept_nodes.len(),
        edges: kept_edges.iter().map(|&e| (new_index[g.edges[e].0], new_index[g.edges[e].1])).collect(),
        node_features: g.node_features.select_rows(&kept_nodes),
        edge_features: g.edge_features.select_rows(&kept_edges),
        edge_weights: kept_edges.iter().map(|&e| g.edge_weights[e]).collect(),
        label: g.label,
    }
}

/// Structurally deletes the top-`t` edges of `mask`.
pub fn hard_remove<R: Rng + ?Sized>(g: &Graph, mask: &EdgeMask, t: f64, rng: &mut R) -> Result<Graph, GraphError> {
    remove_selected(g, &select_edges(g, mask, t, rng)?, RemovalMode::Hard)
}

/// Zeroes the weights of the top-`t` edges of `mask`.
pub fn soft_remove<R: Rng + ?Sized>(g: &Graph, mask: &EdgeMask, t: f64, rng: &mut R) -> Result<Graph, GraphError> {
    remove_selected(g, &select_edges(g, mask, t, rng)?, RemovalMode::Soft)
}

fn check_alignment(d: &Dataset, masks: &[EdgeMask]) -> Result<(), EvalError> {
    if masks.len() != d.len() {
        return Err(EvalError::MaskCount { masks: masks.len(), graphs: d.len() });
    }
    Ok(())
}

/// Every graph of `d` with its top-`t` edges removed; fill randomness comes
/// from `(seed, graph index)`. Truth masks are dropped.
pub fn degrade_dataset(d: &Dataset, masks: &[EdgeMask], mode: RemovalMode, t: f64, seed: u64) -> Result<Dataset, EvalError> {
    check_alignment(d, masks)?;
    let graphs = d
        .graphs
        .iter()
        .zip(masks)
        .enumerate()
        .map(|(i, (g, m))| {
            select_edges(g, m, t, &mut fill_rng(seed, i))
                .and_then(|sel| remove_selected(g, &sel, mode))
                .map_err(|source| EvalError::AtGraph { graph: i, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(d.with_graphs(graphs))
}

/// How much of a mask counts as the explanation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Truncation {
    /// Every edge with a nonzero mask value.
    Nonzero,
    /// The `k` highest-valued nonzero edges.
    TopK(usize),
    /// The `ceil(t * E)` highest-valued nonzero edges.
    Fraction(f64),
}

/// Undirected edges forming the explanation under `trunc`.
pub fn explanation_edges(g: &Graph, mask: &EdgeMask, trunc: Truncation) -> Result<Vec<usize>, GraphError> {
    let pairs = g.edge_pairs()?;
    let values = mask.undirected_values(&pairs)?;
    let limit = match trunc {
        Truncation::Nonzero => values.len(),
        Truncation::TopK(k) => k,
        Truncation::Fraction(t) => count_for_fraction(t, values.len())?,
    };
    Ok(rank_edges(&values).into_iter().filter(|&u| values[u] != 0.0).take(limit).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fid_minus_prob: f64,
    pub fid_minus_acc: f64,
    pub fid_plus_prob: f64,
    pub fid_plus_acc: f64,
    /// `1 - fid_minus_prob`.
    pub faithfulness: f64,
    pub mode: RemovalMode,
    pub truncation: Truncation,
    pub graphs: usize,
}

/// Fidelity over the test split. `fid-` compares the original graph with the
/// explanation alone, `fid+` with the graph minus the explanation; the prob forms
/// use the true-class probability, the acc forms the correctness indicator.
pub fn fidelity_suite(
    model: &GnnModel,
    d: &Dataset,
    masks: &[EdgeMask],
    mode: RemovalMode,
    truncation: Truncation,
) -> Result<FidelityReport, EvalError> {
    check_alignment(d, masks)?;
    let test = d.indices(Split::Test);
    if test.is_empty() {
        return Err(EvalError::EmptySplit(Split::Test));
    }
    let mut sums = [0.0f64; 4];
    for &i in &test {
        let g = &d.graphs[i];
        let y = g.label;
        let expl = explanation_edges(g, &masks[i], truncation).map_err(|source| EvalError::AtGraph { graph: i, source })?;
        let mut in_expl = vec![false; g.edge_pairs()?.num_undirected()];
        for &u in &expl {
            in_expl[u] = true;
        }
        let rest: Vec<usize> = (0..in_expl.len()).filter(|&u| !in_expl[u]).collect();
        let only = remove_selected(g, &rest, mode)?;
        let without = remove_selected(g, &expl, mode)?;
        let p = model.probabilities(g)?;
        let p_only = model.probabilities(&only)?;
        let p_without = model.probabilities(&without)?;
        let correct = |probs: &[f64]| (crate::gnn::argmax(probs) == y) as u8 as f64;
        sums[0] += (p[y] - p_only[y]).abs();
        sums[1] += (correct(&p) - correct(&p_only)).abs();
        sums[2] += (p[y] - p_without[y]).abs();
        sums[3] += (correct(&p) - correct(&p_without)).abs();
    }
    let n = test.len() as f64;
    let [fmp, fma, fpp, fpa] = sums.map(|s| s / n);
    Ok(FidelityReport {
        fid_minus_prob: fmp,
        fid_minus_acc: fma,
        fid_plus_prob: fpp,
        fid_plus_acc: fpa,
        faithfulness: 1.0 - fmp,
        mode,
        truncation,
        graphs: test.len(),
    })
}

/// ROC AUC of mask values against binary truth (truth value > 0), pooled over
/// the undirected edges of `graphs`, with tied scores given their mean rank.
pub fn auc_score(graphs: &[&Graph], masks: &[&EdgeMask], truth: &[&EdgeMask]) -> Result<f64, EvalError> {
    if masks.len() != graphs.len() || truth.len() != graphs.len() {
        return Err(EvalError::MaskCount { masks: masks.len().min(truth.len()), graphs: graphs.len() });
    }
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for ((g, m), t) in graphs.iter().zip(masks).zip(truth) {
        let pairs = g.edge_pairs()?;
        let mv = m.undirected_values(&pairs)?;
        let tv = t.undirected_values(&pairs)?;
        scored.extend(mv.into_iter().zip(tv).map(|(s, l)| (s, l > 0.0)));
    }
    auc_from_scores(&scored)
}

/// Mann-Whitney form of the ROC AUC with midranks for ties.
pub fn auc_from_scores(scored: &[(f64, bool)]) -> Result<f64, EvalError> {
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateLabels { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| scored[k].1).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// Mean nonzero undirected-edge fraction over graphs that have edges.
pub fn critical_threshold(graphs: &[&Graph], masks: &[&EdgeMask]) -> Result<f64, EvalError> {
    if masks.len() != graphs.len() {
        return Err(EvalError::MaskCount { masks: masks.len(), graphs: graphs.len() });
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (g, m) in graphs.iter().zip(masks) {
        let pairs = g.edge_pairs()?;
        if pairs.num_undirected() == 0 {
            continue;
        }
        total += nonzero_fraction(m, &pairs)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(EvalError::NoEdges);
    }
    Ok(total / counted as f64)
}

/// Smallest value of the 0.1 grid (0.1 to 1.0) at or above `truth_fraction`.
pub fn optimal_threshold(truth_fraction: f64) -> f64 {
    let k = (truth_fraction * 10.0 - 1e-9).ceil().clamp(1.0, 10.0);
    k / 10.0
}
