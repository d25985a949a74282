//! Synthetic graph-classification datasets with planted motifs.
//!
//! A Barabási–Albert base graph receives one or more copies of a class motif,
//! each joined to the base by a single bridge edge. The motif's internal edges
//! form the ground-truth explanation; bridges are not part of it.

mod format;

pub use format::{load_dataset, read_dataset, save_dataset, write_dataset, FormatError, FORMAT_VERSION};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Dataset, EdgeMask, Graph, Matrix, Split};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotifKind {
    /// 4-cycle with an apex joined to two adjacent cycle nodes.
    House,
    Cycle5,
    Grid3x3,
}

impl MotifKind {
    pub fn num_nodes(self) -> usize {
        match self {
            MotifKind::House | MotifKind::Cycle5 => 5,
            MotifKind::Grid3x3 => 9,
        }
    }

    /// Internal undirected edges over local node ids `0..num_nodes()`.
    pub fn edges(self) -> Vec<(usize, usize)> {
        match self {
            MotifKind::House => vec![(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)],
            MotifKind::Cycle5 => (0..5).map(|i| (i, (i + 1) % 5)).collect(),
            MotifKind::Grid3x3 => {
                let mut e = Vec::with_capacity(12);
                for r in 0..3 {
                    for c in 0..3 {
                        let v = r * 3 + c;
                        if c < 2 {
                            e.push((v, v + 1));
                        }
                        if r < 2 {
                            e.push((v, v + 3));
                        }
                    }
                }
                e
            }
        }
    }
}

/// Barabási–Albert graph with unit features.
///
/// Starts from a clique on `m` nodes; every later node attaches to `m` distinct
/// existing nodes sampled proportionally to their current degree (to all of them
/// when no more than `m` exist). The undirected edge count is `C(m,2) + m(n-m)`.
pub fn gen_ba<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Graph, SynthError> {
    if m == 0 || n <= m {
        return Err(SynthError::InvalidSpec(format!(
            "Barabási–Albert graph needs n > m >= 1, got n={n}, m={m}"
        )));
    }
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2 + m * (n - m));
    // each node appears once per incident edge
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * pairs.capacity());
    for i in 0..m {
        for j in (i + 1)..m {
            pairs.push((i, j));
            endpoints.extend([i, j]);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for v in m..n {
        targets.clear();
        if v <= m || endpoints.is_empty() {
            targets.extend(0..v);
        } else {
            while targets.len() < m {
                let t = endpoints[rng.random_range(0..endpoints.len())];
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
        }
        for &t in &targets {
            pairs.push((v, t));
            endpoints.extend([v, t]);
        }
    }
    Ok(Graph::with_unit_features(n, &pairs, 0))
}

/// Result of planting a motif into a graph.
#[derive(Debug, Clone)]
pub struct MotifAttachment {
    pub graph: Graph,
    /// Undirected edge indices (in `graph`) of the motif's internal edges.
    pub truth_edges: Vec<usize>,
}

/// Appends a motif with fresh node ids and one bridge edge from a uniformly
/// chosen motif node to a uniformly chosen node among the first `anchor_nodes`
/// nodes of `g`. Expects `g` in the interleaved layout of
/// [`Graph::from_undirected`], which the result keeps.
pub fn attach_motif<R: Rng + ?Sized>(
    g: &Graph,
    kind: MotifKind,
    anchor_nodes: usize,
    rng: &mut R,
) -> MotifAttachment {
    assert!(anchor_nodes > 0 && anchor_nodes <= g.num_nodes, "attach_motif needs a nonempty anchor range");
    let offset = g.num_nodes;
    let mut pairs: Vec<(usize, usize)> = g.edges.iter().step_by(2).copied().collect();
    let first_motif_edge = pairs.len();
    pairs.extend(kind.edges().into_iter().map(|(a, b)| (offset + a, offset + b)));
    let truth_edges = (first_motif_edge..pairs.len()).collect();
    let motif_node = offset + rng.random_range(0..kind.num_nodes());
    let anchor = rng.random_range(0..anchor_nodes);
    pairs.push((motif_node, anchor));

    let n = offset + kind.num_nodes();
    let d_n = g.node_dim();
    let d_e = g.edge_dim();
    let mut x = g.node_features.as_slice().to_vec();
    x.resize(n * d_n, 1.0);
    let mut ef: Vec<f64> = g.edge_features.as_slice().chunks(d_e.max(1)).step_by(2).flatten().copied().collect();
    ef.resize(pairs.len() * d_e, 1.0);
    let graph = Graph::from_undirected(n, &pairs, Matrix::from_vec(n, d_n, x), Matrix::from_vec(pairs.len(), d_e, ef), g.label);
    MotifAttachment { graph, truth_edges }
}

/// Recipe for a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub num_graphs: usize,
    pub base_nodes: usize,
    pub ba_attach: usize,
    pub motifs_min: usize,
    pub motifs_max: usize,
    /// Motif kind planted for each class label, indexed by label.
    pub class_motifs: Vec<MotifKind>,
    pub gen_seed: u64,
    pub split_seed: u64,
}

impl DatasetSpec {
    /// 1,000 graphs: 20-node BA tree plus one house (label 0) or 5-cycle (label 1).
    pub fn ba_2motifs() -> Self {
        Self {
            name: "BA-2Motifs".into(),
            num_graphs: 1000,
            base_nodes: 20,
            ba_attach: 1,
            motifs_min: 1,
            motifs_max: 1,
            class_motifs: vec![MotifKind::House, MotifKind::Cycle5],
            gen_seed: 0,
            split_seed: 0,
        }
    }

    /// 2,000 graphs: 80-node BA base plus 2–5 houses (label 0) or 3×3 grids (label 1).
    pub fn ba_house_grid() -> Self {
        Self {
            name: "BA-HouseGrid".into(),
            num_graphs: 2000,
            base_nodes: 80,
            ba_attach: 5,
            motifs_min: 2,
            motifs_max: 5,
            class_motifs: vec![MotifKind::House, MotifKind::Grid3x3],
            gen_seed: 0,
            split_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let classes = self.class_motifs.len();
        let fail = |msg: String| Err(SynthError::InvalidSpec(msg));
        if classes < 2 {
            return fail(format!("need at least two classes, got {classes}"));
        }
        if self.num_graphs == 0 {
            return fail("num_graphs must be positive".into());
        }
        if !self.num_graphs.is_multiple_of(classes) {
            return fail(format!(
                "{} graphs cannot be split exactly evenly over {classes} classes",
                self.num_graphs
            ));
        }
        if self.ba_attach == 0 || self.base_nodes <= self.ba_attach {
            return fail(format!(
                "base graph needs base_nodes > ba_attach >= 1, got {} and {}",
                self.base_nodes, self.ba_attach
            ));
        }
        if self.motifs_min == 0 || self.motifs_min > self.motifs_max {
            return fail(format!(
                "motif count range {}..={} is empty or allows zero motifs",
                self.motifs_min, self.motifs_max
            ));
        }
        Ok(())
    }
}

/// Generates one graph with its truth mask. Pure function of `(spec, index)`.
pub fn generate_graph(spec: &DatasetSpec, index: usize) -> Result<(Graph, EdgeMask), SynthError> {
    let label = index % spec.class_motifs.len();
    let kind = spec.class_motifs[label];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.gen_seed ^ index as u64);
    let mut g = gen_ba(spec.base_nodes, spec.ba_attach, &mut rng)?;
    g.label = label;
    let count = rng.random_range(spec.motifs_min..=spec.motifs_max);
    let mut truth = Vec::new();
    for _ in 0..count {
        let a = attach_motif(&g, kind, spec.base_nodes, &mut rng);
        truth.extend(a.truth_edges);
        g = a.graph;
    }
    let mut undirected = vec![0.0; g.num_edges() / 2];
    for u in truth {
        undirected[u] = 1.0;
    }
    let mask = EdgeMask::new(undirected.iter().flat_map(|&v| [v, v]).collect());
    Ok((g, mask))
}

/// Generates every graph of `spec` and assigns a label-stratified 80/10/10 split.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let mut graphs = Vec::with_capacity(spec.num_graphs);
    let mut masks = Vec::with_capacity(spec.num_graphs);
    for i in 0..spec.num_graphs {
        let (g, m) = generate_graph(spec, i)?;
        graphs.push(g);
        masks.push(m);
    }
    let classes = spec.class_motifs.len();
    let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    let splits = stratified_split(&labels, classes, spec.split_seed);
    Ok(Dataset { name: spec.name.clone(), graphs, splits, truth_masks: Some(masks) })
}

/// 80/10/10 split within each class, shuffled with `seed`.
pub fn stratified_split(labels: &[usize], classes: usize, seed: u64) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Train; labels.len()];
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = (0.8 * n as f64).round() as usize;
        let n_val = (0.1 * n as f64).round() as usize;
        for (rank, &i) in members.iter().enumerate() {
            splits[i] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
        }
    }
    splits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{nonzero_fraction, validate_graph};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn motif_shapes() {
        assert_eq!(MotifKind::House.edges().len(), 6);
        assert_eq!(MotifKind::Cycle5.edges().len(), 5);
        assert_eq!(MotifKind::Grid3x3.edges().len(), 12);
        for kind in [MotifKind::House, MotifKind::Cycle5, MotifKind::Grid3x3] {
            let g = Graph::with_unit_features(kind.num_nodes(), &kind.edges(), 0);
            assert!(validate_graph(&g).is_valid());
        }
    }

    #[test]
    fn ba_saturated_is_complete() {
        let g = gen_ba(5, 4, &mut rng(1)).unwrap();
        assert_eq!(g.num_edges() / 2, 10);
        assert!(g.degrees().iter().all(|&d| d == 4));
    }

    #[test]
    fn ba_rejects_bad_parameters() {
        assert!(gen_ba(3, 3, &mut rng(0)).is_err());
        assert!(gen_ba(3, 0, &mut rng(0)).is_err());
    }

    #[test]
    fn ba_is_deterministic() {
        let a = gen_ba(80, 5, &mut rng(7)).unwrap();
        let b = gen_ba(80, 5, &mut rng(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.edges, gen_ba(80, 5, &mut rng(8)).unwrap().edges);
    }

    #[test]
    fn ba_edge_count_matches_closed_form() {
        // brute-force count over generator output
        let mut total = 0usize;
        for s in 0..200 {
            let g = gen_ba(80, 5, &mut rng(s)).unwrap();
            assert!(validate_graph(&g).is_valid());
            let mut undirected = std::collections::HashSet::new();
            for &(a, b) in &g.edges {
                undirected.insert((a.min(b), a.max(b)));
            }
            total += undirected.len();
        }
        let mean = total as f64 / 200.0;
        assert!((mean - 385.0).abs() <= 2.0, "mean edge count {mean}");
    }

    #[test]
    fn ba_tree_for_single_attachment() {
        let g = gen_ba(20, 1, &mut rng(3)).unwrap();
        assert_eq!(g.num_edges() / 2, 19);
    }

    #[test]
    fn house_attachment_counts() {
        let base = gen_ba(80, 5, &mut rng(2)).unwrap();
        let base_edges = base.num_edges() / 2;
        let a = attach_motif(&base, MotifKind::House, 80, &mut rng(4));
        assert_eq!(a.graph.num_nodes, 85);
        assert_eq!(a.graph.num_edges() / 2, base_edges + 7);
        assert_eq!(a.truth_edges.len(), 6);
        for &u in &a.truth_edges {
            let (s, d) = a.graph.edges[2 * u];
            assert!(s >= 80 && d >= 80);
        }
        assert!(validate_graph(&a.graph).is_valid());
    }

    #[test]
    fn grid_attachment_counts() {
        let base = gen_ba(80, 5, &mut rng(2)).unwrap();
        let base_edges = base.num_edges() / 2;
        let a = attach_motif(&base, MotifKind::Grid3x3, 80, &mut rng(5));
        assert_eq!(a.graph.num_nodes, 89);
        assert_eq!(a.graph.num_edges() / 2, base_edges + 13);
        let (bs, bd) = *a.graph.edges.iter().step_by(2).next_back().unwrap();
        assert!(bs >= 80 && bd < 80, "last edge is the bridge");
    }

    #[test]
    fn spec_errors() {
        let mut s = DatasetSpec::ba_2motifs();
        s.num_graphs = 999;
        assert!(matches!(build_dataset(&s), Err(SynthError::InvalidSpec(_))));
        let mut s = DatasetSpec::ba_house_grid();
        s.motifs_min = 6;
        assert!(build_dataset(&s).is_err());
    }

    #[test]
    fn small_house_grid_properties() {
        let mut spec = DatasetSpec::ba_house_grid();
        spec.num_graphs = 100;
        let d = build_dataset(&spec).unwrap();
        d.validate().unwrap();
        let ones = d.graphs.iter().filter(|g| g.label == 1).count();
        assert_eq!(ones, 50);
        assert_eq!(d.indices(Split::Train).len(), 80);
        assert_eq!(d.indices(Split::Validation).len(), 10);
        assert_eq!(d.indices(Split::Test).len(), 10);
        let truth = d.truth_masks.as_ref().unwrap();
        for (g, m) in d.graphs.iter().zip(truth) {
            let pairs = g.edge_pairs().unwrap();
            let motif_edges = (nonzero_fraction(m, &pairs).unwrap() * pairs.num_undirected() as f64).round() as usize;
            let per = if g.label == 0 { 6 } else { 12 };
            assert_eq!(motif_edges % per, 0);
            assert!((2..=5).contains(&(motif_edges / per)));
        }
        assert_eq!(build_dataset(&spec).unwrap(), d);
    }
}
