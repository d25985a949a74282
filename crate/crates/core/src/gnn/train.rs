use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, loss_and_param_grads, GnnError, GnnModel};
use crate::graph::{Dataset, Graph, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    /// A validation loss counts as an improvement only if it beats the best by more than this.
    pub min_delta: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds minibatch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_epochs: 200,
            patience: 30,
            min_delta: 1e-4,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let fail = |m: &str| Err(GnnError::Config(m.to_owned()));
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.patience >= self.max_epochs {
            return fail("patience must be smaller than max_epochs");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if self.min_delta < 0.0 {
            return fail("min_delta must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// Entry 0 is the starting parameters; entry `k` follows epoch `k`.
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Epoch whose parameters were returned (0 = starting parameters).
    pub chosen_epoch: usize,
    pub test_accuracy: Option<f64>,
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Trains `model` on the dataset's train split with early stopping on
/// validation loss; returns the best-validation parameters.
pub fn train(model: GnnModel, d: &Dataset, cfg: &TrainConfig) -> Result<(GnnModel, TrainHistory), GnnError> {
    fit(model, d, cfg)
}

/// Same loop as [`train`], starting from the given (already trained) parameters.
pub fn fine_tune(model: &GnnModel, d: &Dataset, cfg: &TrainConfig) -> Result<(GnnModel, TrainHistory), GnnError> {
    fit(model.clone(), d, cfg)
}

fn fit(mut model: GnnModel, d: &Dataset, cfg: &TrainConfig) -> Result<(GnnModel, TrainHistory), GnnError> {
    cfg.validate()?;
    let mut train_idx = d.indices(Split::Train);
    let val = d.split_graphs(Split::Validation);
    if train_idx.is_empty() {
        return Err(GnnError::EmptySplit(Split::Train));
    }
    if val.is_empty() {
        return Err(GnnError::EmptySplit(Split::Validation));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params().len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut history = TrainHistory::default();

    let (l0, a0) = evaluate(&model, &val)?;
    history.val_loss.push(l0);
    history.val_accuracy.push(a0);
    let mut best_loss = l0;
    let mut best_params = model.params().to_vec();
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let graphs: Vec<&Graph> = batch.iter().map(|&i| &d.graphs[i]).collect();
            let (loss, grads) = loss_and_param_grads(&model, &graphs)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(GnnError::Diverged { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grads);
        }
        history.train_loss.push(epoch_loss / train_idx.len() as f64);
        let (vl, va) = evaluate(&model, &val)?;
        if !vl.is_finite() {
            return Err(GnnError::Diverged { epoch });
        }
        history.val_loss.push(vl);
        history.val_accuracy.push(va);
        if vl < best_loss - cfg.min_delta {
            best_loss = vl;
            best_params.copy_from_slice(model.params());
            history.chosen_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    let test = d.split_graphs(Split::Test);
    if !test.is_empty() {
        history.test_accuracy = Some(accuracy(&model, &test)?);
    }
    Ok((model, history))
}

/// Mean cross-entropy and accuracy.
fn evaluate(model: &GnnModel, graphs: &[&Graph]) -> Result<(f64, f64), GnnError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for g in graphs {
        let logits = model.logits(g)?;
        loss += cross_entropy(&logits, g.label, model.dims().classes)?.0;
        if super::argmax(&logits) == g.label {
            correct += 1;
        }
    }
    let n = graphs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn accuracy(model: &GnnModel, graphs: &[&Graph]) -> Result<f64, GnnError> {
    let mut correct = 0usize;
    for g in graphs {
        if model.predict(g)? == g.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / graphs.len() as f64)
}

/// Fraction of graphs in `split` whose predicted class equals their label.
pub fn test_accuracy(model: &GnnModel, d: &Dataset, split: Split) -> Result<f64, GnnError> {
    let graphs = d.split_graphs(split);
    if graphs.is_empty() {
        return Err(GnnError::EmptySplit(split));
    }
    accuracy(model, &graphs)
}
