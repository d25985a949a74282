//! Fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gnn::{GnnModel, ModelDims};
use crate::graph::{Graph, Matrix};

/// Erdos-Renyi graph with uniform node features and random symmetric weights.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p_edge: f64, d_n: usize) -> Graph {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p_edge {
                pairs.push((i, j));
            }
        }
    }
    let x = (0..n * d_n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = Graph::from_undirected(n, &pairs, Matrix::from_vec(n, d_n, x), Matrix::filled(pairs.len(), 1, 1.0), rng.random_range(0..2));
    let w: Vec<f64> = (0..pairs.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    g.edge_weights = w.iter().flat_map(|&v| [v, v]).collect();
    g
}

/// Model with nonzero edge-weight maps so every parameter block is exercised.
pub fn perturbed_model(d_n: usize, hidden: usize, seed: u64) -> GnnModel {
    let dims = ModelDims { node_dim: d_n, edge_dim: 1, hidden, layers: 3, classes: 2 };
    let mut model = GnnModel::new(dims, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let layers = model.layout().layers.clone();
    for lb in layers {
        for k in 0..lb.d_in {
            model.params_mut()[lb.edge_w + k] = rng.random_range(-0.5..0.5);
            model.params_mut()[lb.edge_b + k] = rng.random_range(-0.5..0.5);
        }
    }
    model
}
