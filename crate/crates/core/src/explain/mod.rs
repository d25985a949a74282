//! Edge-importance explainers: three baselines that ignore the model and five
//! model-based methods. Every explainer returns one value in [0, 1] per
//! directed edge with both directions of an undirected edge equal.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{cross_entropy, Adam, GnnError, GnnModel, Wants};
use crate::graph::{graph_rng, normalize_mask, Dataset, EdgeMask, EdgePairs, Graph, GraphError};

mod format;
#[cfg(test)]
mod tests;

pub use format::{MaskFile, MaskFormatError, MASK_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerId {
    Random,
    Truth,
    Inverse,
    Occlusion,
    Saliency,
    IntegratedGradients,
    Gradcam,
    Gnnexplainer,
}

impl ExplainerId {
    pub const ALL: [ExplainerId; 8] = [
        ExplainerId::Random,
        ExplainerId::Truth,
        ExplainerId::Inverse,
        ExplainerId::Occlusion,
        ExplainerId::Saliency,
        ExplainerId::IntegratedGradients,
        ExplainerId::Gradcam,
        ExplainerId::Gnnexplainer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExplainerId::Random => "random",
            ExplainerId::Truth => "truth",
            ExplainerId::Inverse => "inverse",
            ExplainerId::Occlusion => "occlusion",
            ExplainerId::Saliency => "saliency",
            ExplainerId::IntegratedGradients => "integrated_gradients",
            ExplainerId::Gradcam => "gradcam",
            ExplainerId::Gnnexplainer => "gnnexplainer",
        }
    }

    pub fn needs_truth(self) -> bool {
        matches!(self, ExplainerId::Truth | ExplainerId::Inverse)
    }

    pub fn needs_model(self) -> bool {
        !matches!(self, ExplainerId::Random | ExplainerId::Truth | ExplainerId::Inverse)
    }
}

impl fmt::Display for ExplainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplainerId {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExplainerId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| ExplainError::Unknown(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    /// Seeds the random baseline and mask initialization, per graph index.
    pub seed: u64,
    pub ig_steps: usize,
    pub gnnex_epochs: usize,
    pub gnnex_lr: f64,
    pub gnnex_size_coeff: f64,
    pub gnnex_entropy_coeff: f64,
    /// Standard deviation of the initial mask logits.
    pub gnnex_init_std: f64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            ig_steps: 64,
            gnnex_epochs: 100,
            gnnex_lr: 0.01,
            gnnex_size_coeff: 0.005,
            gnnex_entropy_coeff: 1.0,
            gnnex_init_std: 0.1,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        let fail = |m: &str| Err(ExplainError::Config(m.to_owned()));
        if self.ig_steps < 2 {
            return fail("ig_steps must be at least 2");
        }
        if !(self.gnnex_lr > 0.0) {
            return fail("gnnex_lr must be positive");
        }
        if !(self.gnnex_size_coeff >= 0.0) || !(self.gnnex_entropy_coeff >= 0.0) {
            return fail("gnnexplainer coefficients must be nonnegative");
        }
        if !(self.gnnex_init_std >= 0.0) {
            return fail("gnnex_init_std must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("unknown explainer `{0}`")]
    Unknown(String),
    #[error("explainer `{0}` needs ground-truth masks, which this dataset lacks")]
    MissingTruth(ExplainerId),
    #[error("explainer `{0}` needs a trained model")]
    MissingModel(ExplainerId),
    #[error("invalid explainer config: {0}")]
    Config(String),
    #[error("mask optimization produced a non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("graph {graph}: {source}")]
    AtGraph {
        graph: usize,
        #[source]
        source: Box<ExplainError>,
    },
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Uniform [0, 1] value per undirected edge, shared by both directions.
pub fn explain_random<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Result<EdgeMask, ExplainError> {
    let pairs = g.edge_pairs()?;
    let values: Vec<f64> = (0..pairs.num_undirected()).map(|_| rng.random::<f64>()).collect();
    Ok(EdgeMask::new(pairs.expand(&values)))
}

pub fn explain_truth(truth: &EdgeMask) -> EdgeMask {
    truth.clone()
}

pub fn explain_inverse(truth: &EdgeMask) -> EdgeMask {
    truth.inverted()
}

/// Drop in predicted-class probability when an undirected edge's weight is zeroed.
pub fn occlusion_scores(model: &GnnModel, g: &Graph) -> Result<Vec<f64>, ExplainError> {
    let pairs = g.edge_pairs()?;
    let probs = model.probabilities(g)?;
    let class = crate::gnn::argmax(&probs);
    let mut probe = g.clone();
    let mut scores = Vec::with_capacity(pairs.num_undirected());
    for u in 0..pairs.num_undirected() {
        let [a, b] = pairs.directed(u);
        probe.edge_weights[a] = 0.0;
        probe.edge_weights[b] = 0.0;
        scores.push(probs[class] - model.probabilities(&probe)?[class]);
        probe.edge_weights[a] = g.edge_weights[a];
        probe.edge_weights[b] = g.edge_weights[b];
    }
    Ok(scores)
}

/// Derivative of the predicted-class logit with respect to each undirected
/// edge weight (both directions move together).
fn undirected_weight_grads(model: &GnnModel, g: &Graph, pairs: &EdgePairs, class: usize) -> Result<Vec<f64>, ExplainError> {
    let directed = crate::gnn::edge_weight_grads(model, g, class)?;
    Ok((0..pairs.num_undirected())
        .map(|u| {
            let [a, b] = pairs.directed(u);
            directed[a] + directed[b]
        })
        .collect())
}

/// `|d logit_yhat / d w_e|` per undirected edge.
pub fn saliency_scores(model: &GnnModel, g: &Graph) -> Result<Vec<f64>, ExplainError> {
    let pairs = g.edge_pairs()?;
    let class = model.predict(g)?;
    Ok(undirected_weight_grads(model, g, &pairs, class)?.into_iter().map(f64::abs).collect())
}

/// Signed integrated-gradients attributions per undirected edge against the
/// all-zero weight baseline, midpoint rule with `steps` points.
pub fn ig_attributions(model: &GnnModel, g: &Graph, steps: usize) -> Result<Vec<f64>, ExplainError> {
    if steps < 2 {
        return Err(ExplainError::Config("ig_steps must be at least 2".into()));
    }
    let pairs = g.edge_pairs()?;
    let class = model.predict(g)?;
    let mut sum = vec![0.0; pairs.num_undirected()];
    let mut scaled = g.clone();
    for k in 1..=steps {
        let alpha = (k as f64 - 0.5) / steps as f64;
        for (s, w) in scaled.edge_weights.iter_mut().zip(&g.edge_weights) {
            *s = alpha * w;
        }
        for (acc, d) in sum.iter_mut().zip(undirected_weight_grads(model, &scaled, &pairs, class)?) {
            *acc += d;
        }
    }
    Ok((0..pairs.num_undirected())
        .map(|u| g.edge_weights[pairs.directed(u)[0]] * sum[u] / steps as f64)
        .collect())
}

/// `ReLU(<d logit_yhat / d h_i, h_i>)` on final-layer node embeddings.
pub fn gradcam_node_scores(model: &GnnModel, g: &Graph) -> Result<Vec<f64>, ExplainError> {
    let tape = model.tape(g)?;
    let class = crate::gnn::argmax(tape.logits());
    let grad = tape.node_embedding_grad(&crate::gnn::one_hot(class, model.dims().classes));
    let h = model.dims().hidden;
    Ok(tape
        .node_embeddings()
        .chunks_exact(h)
        .zip(grad.chunks_exact(h))
        .map(|(e, d)| e.iter().zip(d).map(|(a, b)| a * b).sum::<f64>().max(0.0))
        .collect())
}

/// Edge score: mean of its endpoint node scores.
pub fn gradcam_edge_scores(model: &GnnModel, g: &Graph) -> Result<Vec<f64>, ExplainError> {
    let pairs = g.edge_pairs()?;
    let nodes = gradcam_node_scores(model, g)?;
    Ok((0..pairs.num_undirected())
        .map(|u| {
            let (s, t) = g.edges[pairs.directed(u)[0]];
            0.5 * (nodes[s] + nodes[t])
        })
        .collect())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Soft mask `sigmoid(m)` per undirected edge, with `m` fit by Adam to keep the
/// predicted class under the masked weights while penalizing mask size and entropy.
pub fn gnnexplainer_mask<R: Rng + ?Sized>(
    model: &GnnModel,
    g: &Graph,
    cfg: &ExplainerConfig,
    rng: &mut R,
) -> Result<Vec<f64>, ExplainError> {
    cfg.validate()?;
    let pairs = g.edge_pairs()?;
    let u = pairs.num_undirected();
    let class = model.predict(g)?;
    let init = Normal::new(0.0, cfg.gnnex_init_std).map_err(|e| ExplainError::Config(e.to_string()))?;
    let mut logits: Vec<f64> = (0..u).map(|_| init.sample(rng)).collect();
    if u == 0 {
        return Ok(logits);
    }
    let mut adam = Adam::new(u, cfg.gnnex_lr, 0.9, 0.999, 1e-8);
    for epoch in 1..=cfg.gnnex_epochs {
        let (loss, grad) = gnnexplainer_objective(model, g, &pairs, class, &logits, cfg)?;
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(ExplainError::NonFinite { epoch });
        }
        adam.step(&mut logits, &grad);
    }
    Ok(logits.into_iter().map(sigmoid).collect())
}

/// GNNExplainer loss and its gradient with respect to the mask logits.
pub(crate) fn gnnexplainer_objective(
    model: &GnnModel,
    g: &Graph,
    pairs: &EdgePairs,
    class: usize,
    logits: &[f64],
    cfg: &ExplainerConfig,
) -> Result<(f64, Vec<f64>), ExplainError> {
    let u = logits.len();
    let sig: Vec<f64> = logits.iter().map(|&m| sigmoid(m)).collect();
    let mut masked = g.clone();
    for (d, w) in masked.edge_weights.iter_mut().enumerate() {
        *w = g.edge_weights[d] * sig[pairs.undirected_of(d)];
    }
    let tape = model.tape(&masked)?;
    let (ce, dl) = cross_entropy(tape.logits(), class, model.dims().classes)?;
    let dw = tape.backward(&dl, Wants { params: false, edge_weights: true }).edge_weights.unwrap();
    let mut loss = ce;
    let mut grad = vec![0.0; u];
    for k in 0..u {
        let p = sig[k].clamp(1e-12, 1.0 - 1e-12);
        let dsig = sig[k] * (1.0 - sig[k]);
        let [a, b] = pairs.directed(k);
        let dce = dw[a] * g.edge_weights[a] + dw[b] * g.edge_weights[b];
        let entropy = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        loss += cfg.gnnex_size_coeff * sig[k] + cfg.gnnex_entropy_coeff * entropy / u as f64;
        let dentropy = ((1.0 - p) / p).ln();
        grad[k] = (dce + cfg.gnnex_size_coeff + cfg.gnnex_entropy_coeff * dentropy / u as f64) * dsig;
    }
    Ok((loss, grad))
}

fn normalized(pairs: &EdgePairs, scores: &[f64]) -> Result<EdgeMask, ExplainError> {
    Ok(EdgeMask::new(pairs.expand(&normalize_mask(&EdgeMask::new(scores.to_vec()))?.values)))
}

/// What an explainer may consult for one graph.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub graph: &'a Graph,
    /// Position of the graph in its dataset; keys the graph's random stream.
    pub index: usize,
    pub truth: Option<&'a EdgeMask>,
}

/// Runs explainer `id` on one graph and returns its normalized mask.
pub fn explain(
    id: ExplainerId,
    model: Option<&GnnModel>,
    target: Target<'_>,
    cfg: &ExplainerConfig,
) -> Result<EdgeMask, ExplainError> {
    let g = target.graph;
    let truth = || target.truth.ok_or(ExplainError::MissingTruth(id));
    let model = || model.ok_or(ExplainError::MissingModel(id));
    let pairs = g.edge_pairs()?;
    match id {
        ExplainerId::Random => explain_random(g, &mut graph_rng(cfg.seed, target.index)),
        ExplainerId::Truth => Ok(explain_truth(truth()?)),
        ExplainerId::Inverse => Ok(explain_inverse(truth()?)),
        ExplainerId::Occlusion => normalized(&pairs, &occlusion_scores(model()?, g)?),
        ExplainerId::Saliency => normalized(&pairs, &saliency_scores(model()?, g)?),
        ExplainerId::IntegratedGradients => {
            let a = ig_attributions(model()?, g, cfg.ig_steps)?;
            normalized(&pairs, &a.iter().map(|v| v.abs()).collect::<Vec<_>>())
        }
        ExplainerId::Gradcam => normalized(&pairs, &gradcam_edge_scores(model()?, g)?),
        ExplainerId::Gnnexplainer => {
            let m = gnnexplainer_mask(model()?, g, cfg, &mut graph_rng(cfg.seed, target.index))?;
            normalized(&pairs, &m)
        }
    }
}

/// Explains every graph of `d` in parallel; results keep dataset order.
pub fn explain_dataset(
    id: ExplainerId,
    model: Option<&GnnModel>,
    d: &Dataset,
    cfg: &ExplainerConfig,
) -> Result<Vec<EdgeMask>, ExplainError> {
    cfg.validate()?;
    if id.needs_truth() && d.truth_masks.is_none() {
        return Err(ExplainError::MissingTruth(id));
    }
    if id.needs_model() && model.is_none() {
        return Err(ExplainError::MissingModel(id));
    }
    d.graphs
        .par_iter()
        .enumerate()
        .map(|(index, graph)| {
            let truth = d.truth_masks.as_ref().map(|t| &t[index]);
            explain(id, model, Target { graph, index, truth }, cfg)
                .map_err(|e| ExplainError::AtGraph { graph: index, source: Box::new(e) })
        })
        .collect()
}

