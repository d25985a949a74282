//! Graphs, edge masks, datasets and the mask algebra shared by every other module.
//!
//! Undirected edges are stored as two directed edges with identical weights and
//! features. Every fraction in this crate (sparsification level, sparsity,
//! thresholds) counts undirected edges: a directed pair is one unit.

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when turning a fraction of a count into an integer, so that
/// `0.3 * 10` selects three edges rather than four.
const COUNT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("mask has {mask} entries but the graph has {edges} directed edges")]
    MaskLength { mask: usize, edges: usize },
    #[error("directed edge {edge} ({src}, {dst}) has no reverse edge")]
    MissingReverse { edge: usize, src: usize, dst: usize },
    #[error("sparsity of an empty mask is undefined")]
    EmptyMask,
    #[error("mask value {value} at edge {edge} is not finite")]
    NonFinite { edge: usize, value: f64 },
}

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match its shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { rows: rows.len(), cols: self.cols, data }
    }
}

/// A graph with node/edge features, per-edge weights and a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub num_nodes: usize,
    /// Directed `(source, target)` pairs; undirected edges appear in both directions.
    pub edges: Vec<(usize, usize)>,
    pub node_features: Matrix,
    pub edge_features: Matrix,
    pub edge_weights: Vec<f64>,
    pub label: usize,
}

impl Graph {
    /// Builds a graph from undirected pairs. Undirected edge `k` becomes the
    /// directed edges `2k` (as given) and `2k + 1` (reversed). Per-undirected-edge
    /// features are duplicated onto both directions; all weights are 1.
    pub fn from_undirected(
        num_nodes: usize,
        pairs: &[(usize, usize)],
        node_features: Matrix,
        undirected_edge_features: Matrix,
        label: usize,
    ) -> Self {
        assert_eq!(undirected_edge_features.rows(), pairs.len());
        let mut edges = Vec::with_capacity(2 * pairs.len());
        let mut feats = Vec::with_capacity(2 * undirected_edge_features.as_slice().len());
        for (k, &(i, j)) in pairs.iter().enumerate() {
            edges.push((i, j));
            edges.push((j, i));
            feats.extend_from_slice(undirected_edge_features.row(k));
            feats.extend_from_slice(undirected_edge_features.row(k));
        }
        let d_e = undirected_edge_features.cols();
        Self {
            num_nodes,
            edge_weights: vec![1.0; edges.len()],
            edge_features: Matrix::from_vec(edges.len(), d_e, feats),
            edges,
            node_features,
            label,
        }
    }

    /// Undirected graph with constant unit node and edge features.
    pub fn with_unit_features(num_nodes: usize, pairs: &[(usize, usize)], label: usize) -> Self {
        Self::from_undirected(
            num_nodes,
            pairs,
            Matrix::filled(num_nodes, 1, 1.0),
            Matrix::filled(pairs.len(), 1, 1.0),
            label,
        )
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_features.cols()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(_, dst) in &self.edges {
            deg[dst] += 1;
        }
        deg
    }

    pub fn edge_pairs(&self) -> Result<EdgePairs, GraphError> {
        EdgePairs::from_graph(self)
    }

    /// Copy with nodes relabelled so that old node `v` becomes `perm[v]`.
    /// Edge order is preserved.
    pub fn permute_nodes(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes);
        let mut inverse = vec![0; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        Graph {
            num_nodes: self.num_nodes,
            edges: self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect(),
            node_features: self.node_features.select_rows(&inverse),
            edge_features: self.edge_features.clone(),
            edge_weights: self.edge_weights.clone(),
            label: self.label,
        }
    }
}

/// Pairing between undirected edges and their two directed copies.
///
/// Undirected edges are numbered in order of first appearance in the directed
/// edge list; for graphs built with [`Graph::from_undirected`] undirected edge
/// `k` is directed edges `2k` and `2k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePairs {
    pairs: Vec<[usize; 2]>,
    undirected_of: Vec<usize>,
}

impl EdgePairs {
    /// Pairing for the interleaved layout `[2k, 2k + 1]`.
    pub fn interleaved(undirected: usize) -> Self {
        Self {
            pairs: (0..undirected).map(|k| [2 * k, 2 * k + 1]).collect(),
            undirected_of: (0..2 * undirected).map(|e| e / 2).collect(),
        }
    }

    pub fn from_graph(g: &Graph) -> Result<Self, GraphError> {
        let interleaved = g.edges.len().is_multiple_of(2)
            && g.edges.chunks_exact(2).all(|c| c[0] == (c[1].1, c[1].0) && c[0].0 != c[0].1);
        if interleaved {
            return Ok(Self::interleaved(g.edges.len() / 2));
        }
        let index: HashMap<(usize, usize), usize> =
            g.edges.iter().enumerate().map(|(e, &p)| (p, e)).collect();
        let mut undirected_of = vec![usize::MAX; g.edges.len()];
        let mut pairs = Vec::with_capacity(g.edges.len() / 2);
        for (e, &(s, d)) in g.edges.iter().enumerate() {
            if undirected_of[e] != usize::MAX {
                continue;
            }
            let rev = *index
                .get(&(d, s))
                .ok_or(GraphError::MissingReverse { edge: e, src: s, dst: d })?;
            let k = pairs.len();
            undirected_of[e] = k;
            undirected_of[rev] = k;
            pairs.push([e, rev]);
        }
        Ok(Self { pairs, undirected_of })
    }

    pub fn num_undirected(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_directed(&self) -> usize {
        self.undirected_of.len()
    }

    pub fn directed(&self, undirected: usize) -> [usize; 2] {
        self.pairs[undirected]
    }

    pub fn undirected_of(&self, directed: usize) -> usize {
        self.undirected_of[directed]
    }

    /// Expands per-undirected values onto directed edges.
    pub fn expand(&self, undirected_values: &[f64]) -> Vec<f64> {
        self.undirected_of.iter().map(|&k| undirected_values[k]).collect()
    }
}

/// Per-directed-edge importance scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMask {
    pub values: Vec<f64>,
}

impl EdgeMask {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self { values: vec![value; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One value per undirected edge: the larger of the two directions.
    pub fn undirected_values(&self, pairs: &EdgePairs) -> Result<Vec<f64>, GraphError> {
        if self.values.len() != pairs.num_directed() {
            return Err(GraphError::MaskLength {
                mask: self.values.len(),
                edges: pairs.num_directed(),
            });
        }
        Ok(pairs
            .pairs
            .iter()
            .map(|&[a, b]| self.values[a].max(self.values[b]))
            .collect())
    }

    /// Elementwise `1 - v`.
    pub fn inverted(&self) -> EdgeMask {
        EdgeMask::new(self.values.iter().map(|v| 1.0 - v).collect())
    }
}

/// Random stream owned by one graph of a run: a pure function of `(seed, index)`.
pub fn graph_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Number of undirected edges selected by fraction `t` of `total`: `ceil(t * total)`.
pub fn count_for_fraction(t: f64, total: usize) -> Result<usize, GraphError> {
    check_fraction(t)?;
    let k = (t * total as f64 - COUNT_EPS).ceil().max(0.0) as usize;
    Ok(k.min(total))
}

pub(crate) fn check_fraction(t: f64) -> Result<(), GraphError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(GraphError::InvalidFraction(t))
    }
}

/// Undirected edge indices ordered by decreasing value, ties by lowest index.
pub fn rank_edges(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Keeps the `ceil(t * E)` highest-valued undirected edges and zeroes the rest.
pub fn sparsify_mask(mask: &EdgeMask, pairs: &EdgePairs, t: f64) -> Result<EdgeMask, GraphError> {
    let values = mask.undirected_values(pairs)?;
    let k = count_for_fraction(t, values.len())?;
    let mut kept = vec![0.0; values.len()];
    for &u in rank_edges(&values).iter().take(k) {
        kept[u] = values[u];
    }
    Ok(EdgeMask::new(pairs.expand(&kept)))
}

/// Fraction of undirected edges whose mask value is exactly zero.
pub fn mask_sparsity(mask: &EdgeMask, pairs: &EdgePairs) -> Result<f64, GraphError> {
    let values = mask.undirected_values(pairs)?;
    if values.is_empty() {
        return Err(GraphError::EmptyMask);
    }
    let zeros = values.iter().filter(|&&v| v == 0.0).count();
    Ok(zeros as f64 / values.len() as f64)
}

/// Fraction of undirected edges with a nonzero mask value.
pub fn nonzero_fraction(mask: &EdgeMask, pairs: &EdgePairs) -> Result<f64, GraphError> {
    mask_sparsity(mask, pairs).map(|s| 1.0 - s)
}

/// Gives both directions of every undirected edge the larger of their two values.
pub fn symmetrize_mask(mask: &EdgeMask, g: &Graph) -> Result<EdgeMask, GraphError> {
    if mask.len() != g.num_edges() {
        return Err(GraphError::MaskLength { mask: mask.len(), edges: g.num_edges() });
    }
    let pairs = g.edge_pairs()?;
    let values = mask.undirected_values(&pairs)?;
    Ok(EdgeMask::new(pairs.expand(&values)))
}

/// Min-max normalization to [0, 1]; a constant mask becomes 0.5 everywhere.
pub fn normalize_mask(mask: &EdgeMask) -> Result<EdgeMask, GraphError> {
    if let Some((edge, &value)) = mask.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(GraphError::NonFinite { edge, value });
    }
    let lo = mask.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mask.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mask.is_empty() || hi - lo <= 0.0 {
        return Ok(EdgeMask::constant(mask.len(), 0.5));
    }
    let span = hi - lo;
    Ok(EdgeMask::new(mask.values.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()))
}

/// A single invariant violation found by [`validate_graph`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EndpointOutOfRange { edge: usize, node: usize, num_nodes: usize },
    SelfLoop { edge: usize, node: usize },
    DuplicateEdge { edge: usize, first: usize },
    MissingReverse { edge: usize },
    AsymmetricWeight { edge: usize, reverse: usize },
    AsymmetricFeatures { edge: usize, reverse: usize },
    WeightOutOfRange { edge: usize, value: f64 },
    NodeFeatureRows { expected: usize, found: usize },
    EdgeFeatureRows { expected: usize, found: usize },
    WeightCount { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EndpointOutOfRange { edge, node, num_nodes } => {
                write!(f, "edge {edge}: endpoint {node} out of range for {num_nodes} nodes")
            }
            Violation::SelfLoop { edge, node } => write!(f, "edge {edge}: self-loop on node {node}"),
            Violation::DuplicateEdge { edge, first } => {
                write!(f, "edge {edge}: duplicate of edge {first}")
            }
            Violation::MissingReverse { edge } => write!(f, "edge {edge}: reverse edge missing"),
            Violation::AsymmetricWeight { edge, reverse } => {
                write!(f, "edge {edge}: weight differs from reverse edge {reverse}")
            }
            Violation::AsymmetricFeatures { edge, reverse } => {
                write!(f, "edge {edge}: features differ from reverse edge {reverse}")
            }
            Violation::WeightOutOfRange { edge, value } => {
                write!(f, "edge {edge}: weight {value} outside [0, 1]")
            }
            Violation::NodeFeatureRows { expected, found } => {
                write!(f, "node feature matrix has {found} rows, expected {expected}")
            }
            Violation::EdgeFeatureRows { expected, found } => {
                write!(f, "edge feature matrix has {found} rows, expected {expected}")
            }
            Violation::WeightCount { expected, found } => {
                write!(f, "{found} edge weights, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant of a graph and lists each violation.
pub fn validate_graph(g: &Graph) -> ValidationReport {
    let mut v = Vec::new();
    let e = g.edges.len();
    if g.node_features.rows() != g.num_nodes {
        v.push(Violation::NodeFeatureRows { expected: g.num_nodes, found: g.node_features.rows() });
    }
    if g.edge_features.rows() != e {
        v.push(Violation::EdgeFeatureRows { expected: e, found: g.edge_features.rows() });
    }
    if g.edge_weights.len() != e {
        v.push(Violation::WeightCount { expected: e, found: g.edge_weights.len() });
    }
    let mut seen: HashMap<(usize, usize), usize> = HashMap::with_capacity(e);
    for (idx, &(s, d)) in g.edges.iter().enumerate() {
        for node in [s, d] {
            if node >= g.num_nodes {
                v.push(Violation::EndpointOutOfRange { edge: idx, node, num_nodes: g.num_nodes });
            }
        }
        if s == d {
            v.push(Violation::SelfLoop { edge: idx, node: s });
        }
        if let Some(&first) = seen.get(&(s, d)) {
            v.push(Violation::DuplicateEdge { edge: idx, first });
        } else {
            seen.insert((s, d), idx);
        }
        if let Some(&w) = g.edge_weights.get(idx) {
            if !(0.0..=1.0).contains(&w) {
                v.push(Violation::WeightOutOfRange { edge: idx, value: w });
            }
        }
    }
    let feats_ok = g.edge_features.rows() == e;
    for (idx, &(s, d)) in g.edges.iter().enumerate() {
        match seen.get(&(d, s)) {
            None => v.push(Violation::MissingReverse { edge: idx }),
            Some(&rev) => {
                if let (Some(a), Some(b)) = (g.edge_weights.get(idx), g.edge_weights.get(rev)) {
                    if a != b {
                        v.push(Violation::AsymmetricWeight { edge: idx, reverse: rev });
                    }
                }
                if feats_ok && g.edge_features.row(idx) != g.edge_features.row(rev) {
                    v.push(Violation::AsymmetricFeatures { edge: idx, reverse: rev });
                }
            }
        }
    }
    ValidationReport { violations: v }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset has {graphs} graphs but {splits} split tags")]
    SplitCount { graphs: usize, splits: usize },
    #[error("dataset has {graphs} graphs but {masks} truth masks")]
    TruthCount { graphs: usize, masks: usize },
    #[error("graph {graph}: {violation}")]
    InvalidGraph { graph: usize, violation: Violation },
    #[error("graph {graph}: truth mask has {mask} entries, graph has {edges} edges")]
    TruthAlignment { graph: usize, mask: usize, edges: usize },
    #[error("graph {graph}: feature dims ({d_n}, {d_e}) differ from graph 0 ({ref_n}, {ref_e})")]
    FeatureDims { graph: usize, d_n: usize, d_e: usize, ref_n: usize, ref_e: usize },
}

/// Graphs with split tags and optional ground-truth masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub splits: Vec<Split>,
    pub truth_masks: Option<Vec<EdgeMask>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Indices of graphs in the given split, in dataset order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_graphs(&self, split: Split) -> Vec<&Graph> {
        self.indices(split).into_iter().map(|i| &self.graphs[i]).collect()
    }

    /// `(d_n, d_e)` of the first graph, or `(0, 0)` when empty.
    pub fn feature_dims(&self) -> (usize, usize) {
        self.graphs.first().map_or((0, 0), |g| (g.node_dim(), g.edge_dim()))
    }

    /// Same splits and truth masks, different graphs.
    pub fn with_graphs(&self, graphs: Vec<Graph>) -> Dataset {
        assert_eq!(graphs.len(), self.graphs.len());
        Dataset {
            name: self.name.clone(),
            graphs,
            splits: self.splits.clone(),
            truth_masks: None,
        }
    }

    /// Checks graph invariants, feature-dimension uniformity and mask alignment.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.splits.len() != self.graphs.len() {
            return Err(DatasetError::SplitCount { graphs: self.graphs.len(), splits: self.splits.len() });
        }
        let (ref_n, ref_e) = self.feature_dims();
        for (i, g) in self.graphs.iter().enumerate() {
            if let Some(violation) = validate_graph(g).violations.into_iter().next() {
                return Err(DatasetError::InvalidGraph { graph: i, violation });
            }
            if g.node_dim() != ref_n || g.edge_dim() != ref_e {
                return Err(DatasetError::FeatureDims {
                    graph: i,
                    d_n: g.node_dim(),
                    d_e: g.edge_dim(),
                    ref_n,
                    ref_e,
                });
            }
        }
        if let Some(masks) = &self.truth_masks {
            if masks.len() != self.graphs.len() {
                return Err(DatasetError::TruthCount { graphs: self.graphs.len(), masks: masks.len() });
            }
            for (i, (m, g)) in masks.iter().zip(&self.graphs).enumerate() {
                if m.len() != g.num_edges() {
                    return Err(DatasetError::TruthAlignment { graph: i, mask: m.len(), edges: g.num_edges() });
                }
            }
        }
        Ok(())
    }
}
