use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gnn::{GnnModel, ModelDims};
use crate::graph::Matrix;
use crate::synthgen::{build_dataset, DatasetSpec};
use crate::testutil::{perturbed_model, random_graph};

fn assert_valid_mask(g: &Graph, m: &EdgeMask) {
    assert_eq!(m.len(), g.num_edges());
    assert!(m.values.iter().all(|v| (0.0..=1.0).contains(v)), "{:?}", m.values);
    let pairs = g.edge_pairs().unwrap();
    for u in 0..pairs.num_undirected() {
        let [a, b] = pairs.directed(u);
        assert_eq!(m.values[a], m.values[b]);
    }
}

fn small_house_grid(n: usize) -> Dataset {
    let spec = DatasetSpec { num_graphs: n, ..DatasetSpec::ba_house_grid() };
    build_dataset(&spec).unwrap()
}

#[test]
fn ids_round_trip_through_names() {
    for id in ExplainerId::ALL {
        assert_eq!(id.as_str().parse::<ExplainerId>().unwrap(), id);
        assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.as_str()));
    }
    assert!(matches!("pgexplainer".parse::<ExplainerId>(), Err(ExplainError::Unknown(_))));
}

#[test]
fn config_validation() {
    ExplainerConfig::default().validate().unwrap();
    assert!(ExplainerConfig { ig_steps: 1, ..Default::default() }.validate().is_err());
    assert!(ExplainerConfig { gnnex_size_coeff: -1.0, ..Default::default() }.validate().is_err());
}

#[test]
fn random_is_seeded_per_graph() {
    let d = small_house_grid(4);
    let cfg = ExplainerConfig::default();
    let a = explain_dataset(ExplainerId::Random, None, &d, &cfg).unwrap();
    let b = explain_dataset(ExplainerId::Random, None, &d, &cfg).unwrap();
    assert_eq!(a, b);
    let c = explain_dataset(ExplainerId::Random, None, &d, &ExplainerConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a, c);
    for (g, m) in d.graphs.iter().zip(&a) {
        assert_valid_mask(g, m);
    }
}

#[test]
fn random_mean_is_one_half() {
    let d = small_house_grid(250);
    let masks = explain_dataset(ExplainerId::Random, None, &d, &ExplainerConfig::default()).unwrap();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (g, m) in d.graphs.iter().zip(&masks) {
        let v = m.undirected_values(&g.edge_pairs().unwrap()).unwrap();
        sum += v.iter().sum::<f64>();
        count += v.len();
    }
    assert!(count >= 100_000, "{count}");
    assert!((sum / count as f64 - 0.5).abs() < 0.01);
}

#[test]
fn truth_and_inverse_are_involutions() {
    let d = small_house_grid(4);
    let truth = d.truth_masks.as_ref().unwrap();
    for m in truth {
        assert_eq!(&explain_inverse(&explain_inverse(m)), m);
        let both: Vec<f64> = explain_truth(m).values.iter().zip(&explain_inverse(m).values).map(|(a, b)| a + b).collect();
        assert!(both.iter().all(|&v| v == 1.0));
    }
    let no_truth = d.with_graphs(d.graphs.clone());
    assert!(matches!(
        explain_dataset(ExplainerId::Truth, None, &no_truth, &ExplainerConfig::default()),
        Err(ExplainError::MissingTruth(ExplainerId::Truth))
    ));
    assert!(matches!(
        explain_dataset(ExplainerId::Saliency, None, &d, &ExplainerConfig::default()),
        Err(ExplainError::MissingModel(ExplainerId::Saliency))
    ));
}

#[test]
fn explainers_ignore_model_and_keep_inputs() {
    let d = small_house_grid(2);
    let model = GnnModel::new(ModelDims::standard(1, 1), 0);
    let before = d.clone();
    let cfg = ExplainerConfig { gnnex_epochs: 5, ig_steps: 4, ..Default::default() };
    for id in ExplainerId::ALL {
        let masks = explain_dataset(id, Some(&model), &d, &cfg).unwrap();
        for (g, m) in d.graphs.iter().zip(&masks) {
            assert_valid_mask(g, m);
        }
    }
    assert_eq!(d, before);
    let truth_only = explain_dataset(ExplainerId::Truth, None, &d, &cfg).unwrap();
    assert_eq!(&truth_only, d.truth_masks.as_ref().unwrap());
}

/// Rebuilds the graph from its undirected edge list with one weight zeroed.
fn rebuilt_without(g: &Graph, u: usize) -> Graph {
    let pairs = g.edge_pairs().unwrap();
    let list: Vec<(usize, usize)> = (0..pairs.num_undirected()).map(|k| g.edges[pairs.directed(k)[0]]).collect();
    let ef = Matrix::from_vec(list.len(), 1, (0..list.len()).map(|k| g.edge_features.row(pairs.directed(k)[0])[0]).collect());
    let mut out = Graph::from_undirected(g.num_nodes, &list, g.node_features.clone(), ef, g.label);
    let w: Vec<f64> = (0..list.len()).map(|k| if k == u { 0.0 } else { g.edge_weights[pairs.directed(k)[0]] }).collect();
    out.edge_weights = w.iter().flat_map(|&v| [v, v]).collect();
    out
}

#[test]
fn occlusion_matches_rebuilt_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = perturbed_model(3, 8, 1);
    for _ in 0..5 {
        let g = random_graph(&mut rng, 9, 0.35, 3);
        let p = model.probabilities(&g).unwrap();
        let class = model.predict(&g).unwrap();
        let scores = occlusion_scores(&model, &g).unwrap();
        for (u, s) in scores.iter().enumerate() {
            let q = model.probabilities(&rebuilt_without(&g, u)).unwrap();
            assert!((s - (p[class] - q[class])).abs() < 1e-12);
        }
    }
}

#[test]
fn occlusion_is_zero_for_weight_blind_model() {
    // freshly initialised edge maps ignore weights entirely
    let model = GnnModel::new(ModelDims::standard(1, 1), 3);
    let d = small_house_grid(2);
    for g in &d.graphs {
        assert!(occlusion_scores(&model, g).unwrap().iter().all(|&s| s.abs() <= 1e-6));
    }
}

#[test]
fn saliency_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = perturbed_model(3, 8, 2);
    let mut checked = 0;
    while checked < 100 {
        let g = random_graph(&mut rng, 10, 0.3, 3);
        let pairs = g.edge_pairs().unwrap();
        if pairs.num_undirected() == 0 {
            continue;
        }
        let class = model.predict(&g).unwrap();
        let s = saliency_scores(&model, &g).unwrap();
        let smax = s.iter().fold(0.0f64, |m, v| m.max(*v));
        for _ in 0..5 {
            let u = rng.random_range(0..pairs.num_undirected());
            let step = 1e-6;
            let shifted = |delta: f64| {
                let mut h = g.clone();
                for d in pairs.directed(u) {
                    h.edge_weights[d] += delta;
                }
                model.logits(&h).unwrap()[class]
            };
            let fd = ((shifted(step) - shifted(-step)) / (2.0 * step)).abs();
            let err = (s[u] - fd).abs() / s[u].max(fd).max(1e-2 * smax).max(1e-12);
            assert!(err <= 1e-4, "edge {u}: {} vs {fd}", s[u]);
            checked += 1;
        }
    }
    let g = random_graph(&mut rng, 8, 0.4, 3);
    assert_eq!(saliency_scores(&model, &g).unwrap(), saliency_scores(&model, &g).unwrap());
}

#[test]
fn saliency_vanishes_outside_receptive_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 80;
    let list: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let x = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = Graph::from_undirected(n, &list, Matrix::from_vec(n, 2, x), Matrix::filled(n - 1, 1, 1.0), 0);
    let model = perturbed_model(2, 8, 8);
    let tape = model.tape(&g).unwrap();
    let h = model.dims().hidden;
    let active: Vec<usize> = (0..n)
        .filter(|&i| (0..h).any(|k| tape.readout()[k] > 0.0 && tape.node_embeddings()[i * h + k] == tape.readout()[k]))
        .collect();
    let far = |v: usize| active.iter().all(|&a| a.abs_diff(v) >= 3);
    let s = saliency_scores(&model, &g).unwrap();
    let mut seen = 0;
    for (u, &(a, b)) in list.iter().enumerate() {
        if far(a) && far(b) {
            assert_eq!(s[u], 0.0);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn ig_on_weight_linear_model_is_saliency_times_weight() {
    // all-positive parameters keep every ReLU active, and a triangle of identical
    // nodes keeps the max readout on a fixed affine branch, so the logit is affine in w
    let dims = ModelDims { node_dim: 1, edge_dim: 1, hidden: 4, layers: 3, classes: 2 };
    let mut model = GnnModel::new(dims, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in model.params_mut() {
        *p = rng.random_range(0.05..0.3);
    }
    let mut g = Graph::with_unit_features(3, &[(0, 1), (1, 2), (2, 0)], 0);
    g.edge_weights = vec![0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
    let ig = ig_attributions(&model, &g, 16).unwrap();
    let class = model.predict(&g).unwrap();
    let pairs = g.edge_pairs().unwrap();
    let grads = crate::gnn::edge_weight_grads(&model, &g, class).unwrap();
    for (u, v) in ig.iter().enumerate() {
        let [a, b] = pairs.directed(u);
        let expected = 0.9 * (grads[a] + grads[b]);
        assert!((v - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{v} vs {expected}");
    }
}

#[test]
fn ig_rejects_single_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = perturbed_model(3, 8, 6);
    assert!(matches!(ig_attributions(&model, &random_graph(&mut rng, 4, 1.0, 3), 1), Err(ExplainError::Config(_))));
}

#[test]
fn gradcam_properties() {
    let model = perturbed_model(1, 8, 7);
    let cycle = Graph::with_unit_features(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], 0);
    let target = Target { graph: &cycle, index: 0, truth: None };
    let m = explain(ExplainerId::Gradcam, Some(&model), target, &ExplainerConfig::default()).unwrap();
    assert!(m.values.iter().all(|&v| v == 0.5));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = perturbed_model(3, 8, 7);
    for _ in 0..10 {
        let g = random_graph(&mut rng, 10, 0.3, 3);
        assert!(gradcam_node_scores(&model, &g).unwrap().iter().all(|&s| s >= 0.0));
        let target = Target { graph: &g, index: 0, truth: None };
        assert_valid_mask(&g, &explain(ExplainerId::Gradcam, Some(&model), target, &ExplainerConfig::default()).unwrap());
    }
}

#[test]
fn gnnexplainer_without_epochs_returns_initial_mask() {
    let d = small_house_grid(2);
    let g = &d.graphs[0];
    let model = GnnModel::new(ModelDims::standard(1, 1), 0);
    let cfg = ExplainerConfig { gnnex_epochs: 0, gnnex_size_coeff: 0.0, gnnex_entropy_coeff: 0.0, ..Default::default() };
    let m = gnnexplainer_mask(&model, g, &cfg, &mut graph_rng(9, 0)).unwrap();
    let mut rng = graph_rng(9, 0);
    let normal = Normal::new(0.0, 0.1).unwrap();
    for v in m {
        let init: f64 = normal.sample(&mut rng);
        assert_eq!(v, 1.0 / (1.0 + (-init).exp()));
    }
}

#[test]
fn gnnexplainer_size_penalty_shrinks_mask() {
    let d = small_house_grid(2);
    let g = &d.graphs[0];
    let model = perturbed_model(1, 32, 1);
    // Adam moves each logit by about lr per epoch, so allow enough epochs to reach the penalty's optimum
    let cfg = ExplainerConfig { gnnex_size_coeff: 1e3, gnnex_epochs: 400, ..Default::default() };
    let m = gnnexplainer_mask(&model, g, &cfg, &mut graph_rng(0, 0)).unwrap();
    assert!(m.iter().sum::<f64>() / (m.len() as f64) < 0.1);
    let again = gnnexplainer_mask(&model, g, &cfg, &mut graph_rng(0, 0)).unwrap();
    assert_eq!(m, again);
}


#[test]
fn gnnexplainer_objective_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = perturbed_model(3, 8, 2);
    let cfg = ExplainerConfig { gnnex_size_coeff: 0.05, gnnex_entropy_coeff: 1.0, ..Default::default() };
    let mut checked = 0;
    while checked < 100 {
        let g = random_graph(&mut rng, 10, 0.3, 3);
        let pairs = g.edge_pairs().unwrap();
        let u = pairs.num_undirected();
        if u == 0 {
            continue;
        }
        let class = model.predict(&g).unwrap();
        let logits: Vec<f64> = (0..u).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, grad) = gnnexplainer_objective(&model, &g, &pairs, class, &logits, &cfg).unwrap();
        let gmax = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..5 {
            let k = rng.random_range(0..u);
            let step = 1e-6;
            let at = |delta: f64| {
                let mut l = logits.clone();
                l[k] += delta;
                gnnexplainer_objective(&model, &g, &pairs, class, &l, &cfg).unwrap().0
            };
            let fd = (at(step) - at(-step)) / (2.0 * step);
            let err = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-2 * gmax).max(1e-12);
            assert!(err <= 1e-4, "edge {k}: {} vs {fd}", grad[k]);
            checked += 1;
        }
    }
}
