//! Edge-weight-aware GIN classifier with exact reverse-mode gradients.
//!
//! Each of the message-passing layers computes
//!
//! ```text
//! m_ij = ReLU(h_j + a * w_ij + b)             (a, b: per-layer affine map of the edge weight)
//! h_i' = ReLU(W2 ReLU(W1 (h_i + sum_j m_ij) + b1) + b2)
//! ```
//!
//! followed by a per-dimension max over nodes and an affine classifier. All
//! parameters live in one flat vector; [`ParamLayout`] names the blocks.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointError};
pub use train::{fine_tune, test_accuracy, train, Adam, TrainConfig, TrainHistory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Split};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("model expects {expected} node features, graph has {found}")]
    NodeDim { expected: usize, found: usize },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("split `{}` is empty", .0.as_str())]
    EmptySplit(Split),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("parameter vector has {found} entries, layout needs {expected}")]
    ParamCount { expected: usize, found: usize },
    #[error("invalid training config: {0}")]
    Config(String),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub node_dim: usize,
    pub edge_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
}

impl ModelDims {
    /// Three layers, width 32, two classes.
    pub fn standard(node_dim: usize, edge_dim: usize) -> Self {
        Self { node_dim, edge_dim, hidden: 32, layers: 3, classes: 2 }
    }
}

/// Offsets of one message-passing layer's parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerBlocks {
    pub d_in: usize,
    /// Edge-weight slope, `d_in`.
    pub edge_w: usize,
    /// Edge-weight intercept, `d_in`.
    pub edge_b: usize,
    /// `d_in x hidden`, row-major.
    pub w1: usize,
    pub b1: usize,
    /// `hidden x hidden`, row-major.
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub layers: Vec<LayerBlocks>,
    /// `hidden x classes`, row-major.
    pub cls_w: usize,
    pub cls_b: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(dims: &ModelDims) -> Self {
        let h = dims.hidden;
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let mut layers = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let d_in = if l == 0 { dims.node_dim } else { h };
            layers.push(LayerBlocks {
                d_in,
                edge_w: take(d_in),
                edge_b: take(d_in),
                w1: take(d_in * h),
                b1: take(h),
                w2: take(h * h),
                b2: take(h),
            });
        }
        let cls_w = take(h * dims.classes);
        let cls_b = take(dims.classes);
        Self { layers, cls_w, cls_b, total: off }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    dims: ModelDims,
    layout: ParamLayout,
    params: Vec<f64>,
}

impl GnnModel {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`; edge-weight maps start at zero.
    pub fn new(dims: ModelDims, seed: u64) -> Self {
        let layout = ParamLayout::new(&dims);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = dims.hidden;
        let mut fill = |params: &mut [f64], start: usize, len: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for p in &mut params[start..start + len] {
                *p = rng.random_range(-bound..bound);
            }
        };
        for lb in &layout.layers {
            fill(&mut params, lb.w1, lb.d_in * h, lb.d_in);
            fill(&mut params, lb.b1, h, lb.d_in);
            fill(&mut params, lb.w2, h * h, h);
            fill(&mut params, lb.b2, h, h);
        }
        fill(&mut params, layout.cls_w, h * dims.classes, h);
        fill(&mut params, layout.cls_b, dims.classes, h);
        Self { dims, layout, params }
    }

    pub fn from_params(dims: ModelDims, params: Vec<f64>) -> Result<Self, GnnError> {
        let layout = ParamLayout::new(&dims);
        if params.len() != layout.total {
            return Err(GnnError::ParamCount { expected: layout.total, found: params.len() });
        }
        Ok(Self { dims, layout, params })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check(&self, g: &Graph) -> Result<(), GnnError> {
        if g.node_dim() != self.dims.node_dim {
            return Err(GnnError::NodeDim { expected: self.dims.node_dim, found: g.node_dim() });
        }
        if g.num_nodes == 0 {
            return Err(GnnError::EmptyGraph);
        }
        Ok(())
    }

    /// Runs the network and keeps every intermediate needed for backpropagation.
    pub fn tape<'a>(&'a self, g: &'a Graph) -> Result<Tape<'a>, GnnError> {
        self.check(g)?;
        let n = g.num_nodes;
        let h = self.dims.hidden;
        let p = &self.params;
        let mut layers = Vec::with_capacity(self.dims.layers);
        let mut input = g.node_features.as_slice().to_vec();
        for lb in &self.layout.layers {
            let d = lb.d_in;
            let mut z = input.clone();
            let (ew, eb) = (&p[lb.edge_w..lb.edge_w + d], &p[lb.edge_b..lb.edge_b + d]);
            for (e, &(src, dst)) in g.edges.iter().enumerate() {
                let w = g.edge_weights[e];
                let hs = &input[src * d..(src + 1) * d];
                let zd = &mut z[dst * d..(dst + 1) * d];
                for k in 0..d {
                    zd[k] += (hs[k] + ew[k] * w + eb[k]).max(0.0);
                }
            }
            let mut u1 = broadcast_rows(&p[lb.b1..lb.b1 + h], n);
            gemm(n, d, h, &z, d, 1, &p[lb.w1..], h, 1, &mut u1, h, 1);
            let a1: Vec<f64> = u1.iter().map(|v| v.max(0.0)).collect();
            let mut u2 = broadcast_rows(&p[lb.b2..lb.b2 + h], n);
            gemm(n, h, h, &a1, h, 1, &p[lb.w2..], h, 1, &mut u2, h, 1);
            let out: Vec<f64> = u2.iter().map(|v| v.max(0.0)).collect();
            layers.push(LayerCache { input, z, u1, a1, u2 });
            input = out;
        }
        let out = input;
        let mut readout = vec![f64::NEG_INFINITY; h];
        for row in out.chunks_exact(h) {
            for (r, &v) in readout.iter_mut().zip(row) {
                if v > *r {
                    *r = v;
                }
            }
        }
        let c = self.dims.classes;
        let mut logits = p[self.layout.cls_b..self.layout.cls_b + c].to_vec();
        gemm(1, h, c, &readout, h, 1, &p[self.layout.cls_w..], c, 1, &mut logits, c, 1);
        Ok(Tape { model: self, graph: g, layers, out, readout, logits })
    }

    pub fn logits(&self, g: &Graph) -> Result<Vec<f64>, GnnError> {
        Ok(self.tape(g)?.logits)
    }

    pub fn probabilities(&self, g: &Graph) -> Result<Vec<f64>, GnnError> {
        Ok(softmax(&self.logits(g)?))
    }

    /// Most probable class; ties go to the lower class index.
    pub fn predict(&self, g: &Graph) -> Result<usize, GnnError> {
        Ok(argmax(&self.logits(g)?))
    }

    /// Post-pooling, pre-classifier graph vector of width `hidden`.
    pub fn readout_embedding(&self, g: &Graph) -> Result<Vec<f64>, GnnError> {
        Ok(self.tape(g)?.readout)
    }
}

struct LayerCache {
    input: Vec<f64>,
    z: Vec<f64>,
    u1: Vec<f64>,
    a1: Vec<f64>,
    u2: Vec<f64>,
}

/// Forward pass of one graph with cached activations.
pub struct Tape<'a> {
    model: &'a GnnModel,
    graph: &'a Graph,
    layers: Vec<LayerCache>,
    out: Vec<f64>,
    readout: Vec<f64>,
    logits: Vec<f64>,
}

/// Which gradients a backward pass should produce.
#[derive(Debug, Clone, Copy, Default)]
pub struct Wants {
    pub params: bool,
    pub edge_weights: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub params: Option<Vec<f64>>,
    pub edge_weights: Option<Vec<f64>>,
}

impl Tape<'_> {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn readout(&self) -> &[f64] {
        &self.readout
    }

    /// Final-layer node embeddings, `num_nodes x hidden`.
    pub fn node_embeddings(&self) -> &[f64] {
        &self.out
    }

    /// Gradient of `dlogits . logits` with respect to the final node embeddings.
    /// The max readout splits a dimension's gradient evenly between tied nodes.
    pub fn node_embedding_grad(&self, dlogits: &[f64]) -> Vec<f64> {
        let h = self.model.dims.hidden;
        let c = self.model.dims.classes;
        let p = &self.model.params;
        let wc = &p[self.model.layout.cls_w..self.model.layout.cls_w + h * c];
        let mut dr = vec![0.0; h];
        gemm(1, c, h, dlogits, c, 1, wc, 1, c, &mut dr, h, 1);
        let mut ties = vec![0usize; h];
        for row in self.out.chunks_exact(h) {
            for k in 0..h {
                if row[k] == self.readout[k] {
                    ties[k] += 1;
                }
            }
        }
        let mut dout = vec![0.0; self.out.len()];
        for (row, drow) in self.out.chunks_exact(h).zip(dout.chunks_exact_mut(h)) {
            for k in 0..h {
                if row[k] == self.readout[k] {
                    drow[k] = dr[k] / ties[k] as f64;
                }
            }
        }
        dout
    }

    /// Backpropagates `dlogits` (the gradient of some scalar with respect to the logits).
    pub fn backward(&self, dlogits: &[f64], wants: Wants) -> Gradients {
        let model = self.model;
        let g = self.graph;
        let h = model.dims.hidden;
        let c = model.dims.classes;
        let n = g.num_nodes;
        let p = &model.params;
        let mut dparams = wants.params.then(|| vec![0.0; model.layout.total]);
        let mut dweights = wants.edge_weights.then(|| vec![0.0; g.edges.len()]);

        if let Some(dp) = dparams.as_mut() {
            let cw = model.layout.cls_w;
            gemm(h, 1, c, &self.readout, 1, 1, dlogits, c, 1, &mut dp[cw..cw + h * c], c, 1);
            for (db, &dl) in dp[model.layout.cls_b..].iter_mut().zip(dlogits) {
                *db += dl;
            }
        }
        let mut dout = self.node_embedding_grad(dlogits);

        for (l, (lb, cache)) in model.layout.layers.iter().zip(&self.layers).enumerate().rev() {
            let d = lb.d_in;
            let mut du2 = dout;
            for (g2, &u) in du2.iter_mut().zip(&cache.u2) {
                if u <= 0.0 {
                    *g2 = 0.0;
                }
            }
            let mut da1 = vec![0.0; n * h];
            gemm(n, h, h, &du2, h, 1, &p[lb.w2..], 1, h, &mut da1, h, 1);
            let mut du1 = da1;
            for (g1, &u) in du1.iter_mut().zip(&cache.u1) {
                if u <= 0.0 {
                    *g1 = 0.0;
                }
            }
            let mut dz = vec![0.0; n * d];
            gemm(n, h, d, &du1, h, 1, &p[lb.w1..], 1, h, &mut dz, d, 1);
            if let Some(dp) = dparams.as_mut() {
                gemm(h, n, h, &cache.a1, 1, h, &du2, h, 1, &mut dp[lb.w2..lb.w2 + h * h], h, 1);
                gemm(d, n, h, &cache.z, 1, d, &du1, h, 1, &mut dp[lb.w1..lb.w1 + d * h], h, 1);
                add_column_sums(&mut dp[lb.b2..lb.b2 + h], &du2, h);
                add_column_sums(&mut dp[lb.b1..lb.b1 + h], &du1, h);
            }

            let need_input_grad = l > 0;
            if !(need_input_grad || dparams.is_some() || dweights.is_some()) {
                break;
            }
            let ew = &p[lb.edge_w..lb.edge_w + d];
            let eb = &p[lb.edge_b..lb.edge_b + d];
            let mut dh = dz.clone();
            let mut dew = vec![0.0; d];
            let mut deb = vec![0.0; d];
            for (e, &(src, dst)) in g.edges.iter().enumerate() {
                let w = g.edge_weights[e];
                let hs = &cache.input[src * d..(src + 1) * d];
                let gz = &dz[dst * d..(dst + 1) * d];
                let mut dw = 0.0;
                for k in 0..d {
                    if hs[k] + ew[k] * w + eb[k] > 0.0 {
                        let gk = gz[k];
                        dh[src * d + k] += gk;
                        dew[k] += gk * w;
                        deb[k] += gk;
                        dw += gk * ew[k];
                    }
                }
                if let Some(dws) = dweights.as_mut() {
                    dws[e] += dw;
                }
            }
            if let Some(dp) = dparams.as_mut() {
                for k in 0..d {
                    dp[lb.edge_w + k] += dew[k];
                    dp[lb.edge_b + k] += deb[k];
                }
            }
            dout = dh;
        }
        Gradients { params: dparams, edge_weights: dweights }
    }
}

/// Mean cross-entropy over `graphs` and its exact gradient with respect to every parameter.
/// Accumulation runs in batch order.
pub fn loss_and_param_grads(model: &GnnModel, graphs: &[&Graph]) -> Result<(f64, Vec<f64>), GnnError> {
    if graphs.is_empty() {
        return Err(GnnError::EmptyBatch);
    }
    let scale = 1.0 / graphs.len() as f64;
    let mut grads = vec![0.0; model.layout.total];
    let mut loss = 0.0;
    for g in graphs {
        let tape = model.tape(g)?;
        let (l, mut dl) = cross_entropy(tape.logits(), g.label, model.dims.classes)?;
        loss += l * scale;
        dl.iter_mut().for_each(|v| *v *= scale);
        let gp = tape.backward(&dl, Wants { params: true, edge_weights: false }).params.unwrap();
        for (a, b) in grads.iter_mut().zip(gp) {
            *a += b;
        }
    }
    Ok((loss, grads))
}

/// Exact derivative of `logit_class` with respect to every directed edge weight.
pub fn edge_weight_grads(model: &GnnModel, g: &Graph, class: usize) -> Result<Vec<f64>, GnnError> {
    let tape = model.tape(g)?;
    let dl = one_hot(class, model.dims.classes);
    Ok(tape.backward(&dl, Wants { params: false, edge_weights: true }).edge_weights.unwrap())
}

/// Cross-entropy of `target` under `softmax(logits)` and its gradient.
pub fn cross_entropy(logits: &[f64], target: usize, classes: usize) -> Result<(f64, Vec<f64>), GnnError> {
    if target >= classes {
        return Err(GnnError::Label { label: target, classes });
    }
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[target];
    let mut grad = probs;
    grad[target] -= 1.0;
    Ok((loss, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

fn broadcast_rows(row: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len() * n);
    for _ in 0..n {
        out.extend_from_slice(row);
    }
    out
}

fn add_column_sums(acc: &mut [f64], m: &[f64], cols: usize) {
    for row in m.chunks_exact(cols) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// `c += a * b` for an `m x k` by `k x n` product with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, k, rsa, csa) < a.len());
    assert!(last(k, n, rsb, csb) < b.len());
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
