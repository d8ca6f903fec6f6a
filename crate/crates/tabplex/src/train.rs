//! Loss computation, the optimizer, the training loop, and random
//! hyperparameter search.

use crate::error::{Error, Result};
use crate::eval::{auc, mse};
use crate::graph::MultiplexGraph;
use crate::model::{backward, forward, ForwardTrace, Mode, ModelState, Task};
use crate::params::{AggKind, ModelDims, Params};
use crate::table::{FeatureMatrix, Splits};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// User-facing training configuration. `validate` pins each field to its
/// search domain; library callers may construct arbitrary values for small
/// diagnostic models.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub lr: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub weight_decay: f64,
    pub attention_head: usize,
    pub layer_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    #[serde(default = "default_agg")]
    pub agg: AggKind,
    #[serde(default = "default_hops")]
    pub n_hops: usize,
    /// Node-batch size; `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn default_agg() -> AggKind {
    AggKind::Attention
}

fn default_hops() -> usize {
    1
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1e-6..=1e-3).contains(&self.lr) {
            return Err(Error::Validation(format!("lr {} outside [1e-6, 1e-3]", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!("dropout {} outside [0, 1]", self.dropout)));
        }
        if ![64, 128, 256].contains(&self.hidden_dim) {
            return Err(Error::Validation(format!(
                "hidden_dim {} not in {{64, 128, 256}}",
                self.hidden_dim
            )));
        }
        if !(0.0..=1.0).contains(&self.weight_decay) {
            return Err(Error::Validation(format!(
                "weight_decay {} outside [0, 1]",
                self.weight_decay
            )));
        }
        if ![2, 4].contains(&self.attention_head) {
            return Err(Error::Validation(format!(
                "attention_head {} not in {{2, 4}}",
                self.attention_head
            )));
        }
        if !(1..=4).contains(&self.layer_size) {
            return Err(Error::Validation(format!(
                "layer_size {} not in {{1, 2, 3, 4}}",
                self.layer_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Model dimensions for a dataset's feature shape and a graph's layer count.
    pub fn dims_for(&self, fm: &FeatureMatrix, n_relations: usize) -> ModelDims {
        let mut dims = ModelDims::standard(
            fm.cat_vocab_sizes.clone(),
            fm.num.cols,
            self.hidden_dim,
            self.layer_size,
            n_relations,
            self.attention_head,
            self.agg,
        );
        dims.n_hops = self.n_hops;
        dims
    }
}

/// Mean binary cross-entropy or mean squared error over paired slices.
pub fn loss(y: &[f64], yhat: &[f64], task: Task) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Metric(format!(
            "label and prediction lengths differ: {} vs {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Metric("loss over an empty set".into()));
    }
    if y.iter().chain(yhat.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Metric("non-finite loss inputs".into()));
    }
    let n = y.len() as f64;
    let total = match task {
        Task::Classification => y
            .iter()
            .zip(yhat)
            .map(|(&y, &p)| {
                let p = p.clamp(1e-300, 1.0 - 1e-16);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>(),
        Task::Regression => y.iter().zip(yhat).map(|(&y, &p)| (p - y) * (p - y)).sum(),
    };
    Ok(total / n)
}

/// ∂loss/∂logit for every node, zero outside `nodes`. For classification the
/// logistic head is folded in analytically.
pub fn loss_logit_grads(y: &[f64], trace: &ForwardTrace, task: Task, nodes: &[u32]) -> Vec<f64> {
    let mut d = vec![0.0; trace.logits.len()];
    let m = nodes.len().max(1) as f64;
    for &x in nodes {
        let x = x as usize;
        d[x] = match task {
            Task::Classification => (trace.yhat[x] - y[x]) / m,
            Task::Regression => 2.0 * (trace.logits[x] - y[x]) / m,
        };
    }
    d
}

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(n_params: usize) -> OptimizerState {
        OptimizerState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One optimizer step with bias correction and decoupled weight decay
/// (parameters shrink by `1 − lr·weight_decay` before the moment update).
pub fn adam_step(
    params: &mut Params,
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    let decay = 1.0 - lr * weight_decay;
    for i in 0..params.data.len() {
        params.data[i] *= decay;
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params.data[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_metric: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub state: ModelState,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

fn metric_over(task: Task, yhat: &[f64], y: &[f64], ids: &[u32]) -> Result<f64> {
    let scores: Vec<f64> = ids.iter().map(|&i| yhat[i as usize]).collect();
    let labels: Vec<f64> = ids.iter().map(|&i| y[i as usize]).collect();
    match task {
        Task::Classification => auc(&scores, &labels),
        Task::Regression => mse(&scores, &labels),
    }
}

/// Higher AUC is better; lower MSE is better.
pub fn metric_improved(task: Task, candidate: f64, incumbent: f64) -> bool {
    match task {
        Task::Classification => candidate > incumbent,
        Task::Regression => candidate < incumbent,
    }
}

fn worst_metric(task: Task) -> f64 {
    match task {
        Task::Classification => f64::NEG_INFINITY,
        Task::Regression => f64::INFINITY,
    }
}

/// Train on the graph: every epoch runs forward/backward/update on the
/// training nodes, evaluates on validation, and keeps the best-validation
/// snapshot (with its fusion weights frozen for prediction). Stops after
/// `patience` consecutive non-improving epochs.
pub fn train(
    graph: &MultiplexGraph,
    fm: &FeatureMatrix,
    y: &[f64],
    splits: &Splits,
    dims: ModelDims,
    config: &TrainConfig,
) -> Result<TrainResult> {
    dims.validate()?;
    if splits.train.is_empty() || splits.valid.is_empty() {
        return Err(Error::Validation("training needs non-empty train and valid splits".into()));
    }
    if y.len() != fm.n_rows {
        return Err(Error::Validation("target length does not match table rows".into()));
    }
    if config.task == Task::Classification {
        for &v in y {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "classification targets must be 0 or 1, found {v}"
                )));
            }
        }
    }

    let all_nodes: Vec<u32> = (0..fm.n_rows as u32).collect();
    let mut params = Params::init(dims, config.seed);
    let mut opt = OptimizerState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED));

    let mut history = Vec::new();
    let mut best_params: Option<(Params, Vec<f64>)> = None;
    let mut best_metric = worst_metric(config.task);
    let mut best_epoch = 0usize;
    let mut since_improve = 0usize;

    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        let batches: Vec<Vec<u32>> = match config.batch_size {
            None => vec![splits.train.clone()],
            Some(bs) => {
                let mut ids = splits.train.clone();
                ids.shuffle(&mut rng);
                ids.chunks(bs.max(1)).map(|c| c.to_vec()).collect()
            }
        };
        for batch in &batches {
            let beta_nodes: &[u32] = if config.batch_size.is_none() {
                &all_nodes
            } else {
                batch
            };
            let trace = forward(
                graph,
                fm,
                &params,
                config.task,
                Mode::Train {
                    dropout: config.dropout,
                    rng: &mut rng,
                    beta_nodes,
                },
            )?;
            let batch_y: Vec<f64> = batch.iter().map(|&i| y[i as usize]).collect();
            let batch_p: Vec<f64> = batch.iter().map(|&i| trace.yhat[i as usize]).collect();
            let step_loss = loss(&batch_y, &batch_p, config.task)?;
            if !step_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss became non-finite at epoch {epoch}"
                )));
            }
            let dlogits = loss_logit_grads(y, &trace, config.task, batch);
            let grads = backward(graph, fm, &params, &trace, &dlogits);
            adam_step(&mut params, &grads, &mut opt, config.lr, config.weight_decay);
            if !params.all_finite() {
                return Err(Error::Diverged(format!(
                    "parameters became non-finite at epoch {epoch}"
                )));
            }
            epoch_loss += step_loss;
            steps += 1;
        }
        let train_loss = epoch_loss / steps.max(1) as f64;

        let eval_trace = forward(graph, fm, &params, config.task, Mode::Eval { frozen_beta: None })?;
        let valid_metric = metric_over(config.task, &eval_trace.yhat, y, &splits.valid)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_metric,
        });

        if metric_improved(config.task, valid_metric, best_metric) {
            best_metric = valid_metric;
            best_epoch = epoch;
            best_params = Some((params.clone(), eval_trace.beta.clone()));
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve > config.patience {
                break;
            }
        }
    }

    let (params, beta) = best_params.expect("at least one epoch ran");
    Ok(TrainResult {
        state: ModelState {
            params,
            beta: Some(beta),
            task: config.task,
        },
        history,
        best_epoch,
        best_metric,
    })
}

/// Sampling domains for random search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lr: (f64, f64),
    pub dropout: (f64, f64),
    pub hidden_dims: Vec<usize>,
    pub weight_decay: (f64, f64),
    pub attention_heads: Vec<usize>,
    pub layer_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> SearchSpace {
        SearchSpace {
            lr: (1e-6, 1e-3),
            dropout: (0.0, 1.0),
            hidden_dims: vec![64, 128, 256],
            weight_decay: (0.0, 1.0),
            attention_heads: vec![2, 4],
            layer_sizes: vec![1, 2, 3, 4],
        }
    }
}

impl SearchSpace {
    /// Draw one configuration: learning rate log-uniform, the continuous
    /// ranges uniform, discrete sets uniform.
    pub fn sample(&self, base: &TrainConfig, rng: &mut ChaCha8Rng) -> TrainConfig {
        let lr = (rng.gen_range(self.lr.0.ln()..=self.lr.1.ln())).exp();
        TrainConfig {
            lr: lr.clamp(self.lr.0, self.lr.1),
            dropout: rng.gen_range(self.dropout.0..self.dropout.1),
            hidden_dim: *self.hidden_dims[..].choose(rng).unwrap(),
            weight_decay: rng.gen_range(self.weight_decay.0..self.weight_decay.1),
            attention_head: *self.attention_heads[..].choose(rng).unwrap(),
            layer_size: *self.layer_sizes[..].choose(rng).unwrap(),
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: TrainConfig,
    pub valid_metric: f64,
    /// Set when the trial aborted (for example, divergence).
    pub error: Option<String>,
}

/// Random search over the sampling domains: train one model per trial and
/// return the configuration with the best validation metric. Respects both
/// the trial budget and the wall-clock limit.
pub fn random_search(
    graph: &MultiplexGraph,
    fm: &FeatureMatrix,
    y: &[f64],
    splits: &Splits,
    base: &TrainConfig,
    space: &SearchSpace,
    budget: usize,
    time_limit: Option<Duration>,
) -> Result<(TrainConfig, f64, Vec<TrialRecord>)> {
    if budget == 0 {
        return Err(Error::Validation("search budget must be ≥ 1".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed.wrapping_add(0x7161));
    let mut best: Option<(TrainConfig, f64)> = None;
    let mut trials = Vec::new();
    for trial in 0..budget {
        if trial > 0 {
            if let Some(limit) = time_limit {
                if start.elapsed() >= limit {
                    break;
                }
            }
        }
        let config = space.sample(base, &mut rng);
        match train(graph, fm, y, splits, config.dims_for(fm, graph.n_relations()), &config) {
            Ok(result) => {
                let metric = result.best_metric;
                trials.push(TrialRecord {
                    trial,
                    config: config.clone(),
                    valid_metric: metric,
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, incumbent)) => metric_improved(base.task, metric, *incumbent),
                };
                if better {
                    best = Some((config, metric));
                }
            }
            Err(e @ Error::Diverged(_)) => {
                trials.push(TrialRecord {
                    trial,
                    config,
                    valid_metric: worst_metric(base.task),
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let (cfg, metric) =
        best.ok_or_else(|| Error::Validation("every search trial diverged".into()))?;
    Ok((cfg, metric, trials))
}
