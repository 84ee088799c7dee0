//! Adam training loop, grid search and checkpoint files.

mod adam;
mod checkpoint;
mod grid;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{ImageBatcher, Manifest};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, argmax, rmse};
use crate::model::{forward_graph, init_params, BoundParams, ModelSpec, Params, Task};
use crate::rng;
use crate::tensor::{Graph, Tensor};

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, MAGIC,
    VERSION,
};
pub use grid::{default_grid, grid_search, CellOutcome, GridCell, GridResult};

/// Optimizer and loop settings. Unset fields take the defaults below when
/// read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Image-decoding threads; 1 is the strict single-threaded mode.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 150,
            batch_size: 32,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    /// RMSE in years (age) or accuracy (gender) on the validation set.
    pub val_metric: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_metric,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                r.epoch, r.train_loss, r.val_metric, r.seconds
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }
}

/// Training targets for one task.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Raw ages in years.
    Age(Vec<f32>),
    /// Gender class indices.
    Gender(Vec<usize>),
}

impl Targets {
    pub fn from_manifest(task: Task, m: &Manifest) -> Result<Self> {
        Ok(match task {
            Task::Age => Targets::Age(m.records.iter().map(|r| r.age as f32).collect()),
            Task::Gender => Targets::Gender(
                m.records
                    .iter()
                    .map(|r| {
                        r.gender().map(|g| g.index()).ok_or_else(|| {
                            Error::Domain(format!(
                                "{:?} has gender code {}",
                                r.path, r.raw_gender
                            ))
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

/// The order training records are visited in, per epoch. Each epoch draws a
/// fresh permutation from the seed's shuffle stream.
pub struct EpochShuffler {
    rng: rng::Rng,
    n: usize,
}

impl EpochShuffler {
    pub fn new(seed: u64, n: usize) -> Self {
        EpochShuffler {
            rng: rng::stream(seed, rng::STREAM_EPOCH_SHUFFLE),
            n,
        }
    }

    pub fn next_epoch(&mut self) -> Vec<usize> {
        rng::permutation(self.n, &mut self.rng)
    }
}

/// Model outputs (one row per record) for every image in `batcher`.
pub fn predict_outputs(
    spec: &ModelSpec,
    params: &Params,
    batcher: &ImageBatcher,
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let all: Vec<usize> = (0..batcher.len()).collect();
    let mut out = Vec::with_capacity(all.len());
    for chunk in all.chunks(batch_size.max(1)) {
        let x = batcher.batch(chunk)?;
        let mut g = Graph::new();
        let bound = BoundParams::bind(&mut g, params, false);
        let input = g.constant(x);
        let y = forward_graph(spec, &mut g, &bound, input)?;
        let y = g.value(y);
        let width = y.shape()[1];
        out.extend(y.data().chunks(width).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// RMSE (age) or accuracy (gender) of `outputs` against `targets`.
pub fn task_metric(targets: &Targets, outputs: &[Vec<f32>]) -> Result<f64> {
    match targets {
        Targets::Age(ages) => {
            let y: Vec<f64> = ages.iter().map(|&a| a as f64).collect();
            let y_hat: Vec<f64> = outputs.iter().map(|o| o[0] as f64).collect();
            rmse(&y, &y_hat)
        }
        Targets::Gender(labels) => {
            let preds: Vec<usize> = outputs.iter().map(|o| argmax(o)).collect();
            accuracy(labels, &preds)
        }
    }
}

/// Mean training loss of `params` over a whole set, without updating.
pub fn dataset_loss(
    spec: &ModelSpec,
    params: &Params,
    batcher: &ImageBatcher,
    targets: &Targets,
    batch_size: usize,
) -> Result<f64> {
    let all: Vec<usize> = (0..batcher.len()).collect();
    let mut total = 0.0;
    for chunk in all.chunks(batch_size.max(1)) {
        let mut g = Graph::new();
        let bound = BoundParams::bind(&mut g, params, false);
        let loss = batch_loss(spec, &mut g, &bound, batcher, targets, chunk)?;
        total += g.value(loss).data()[0] as f64 * chunk.len() as f64;
    }
    Ok(total / all.len() as f64)
}

fn batch_loss(
    spec: &ModelSpec,
    g: &mut Graph,
    bound: &BoundParams,
    batcher: &ImageBatcher,
    targets: &Targets,
    indices: &[usize],
) -> Result<crate::tensor::Var> {
    let input = g.constant(batcher.batch(indices)?);
    let out = forward_graph(spec, g, bound, input)?;
    match targets {
        Targets::Age(ages) => {
            let t: Vec<f32> = indices.iter().map(|&i| ages[i]).collect();
            let t = g.constant(Tensor::new(vec![indices.len(), 1], t)?);
            g.mse_loss(out, t)
        }
        Targets::Gender(labels) => {
            let t: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            g.cross_entropy_loss(out, &t)
        }
    }
}

fn check_inputs(task: Task, spec: &ModelSpec, train: &Manifest, val: &Manifest, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if spec.task() != task {
        return Err(Error::Contract(format!(
            "model spec is for {} but the task is {task}",
            spec.task()
        )));
    }
    if train.is_empty() {
        return Err(Error::Domain("training manifest is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Domain("validation manifest is empty".into()));
    }
    Ok(())
}

/// Trains freshly initialized parameters for exactly `cfg.max_epochs`
/// epochs.
pub fn train(
    task: Task,
    spec: &ModelSpec,
    train: &Manifest,
    val: &Manifest,
    cfg: &TrainConfig,
) -> Result<(Params, TrainLog)> {
    train_with(task, spec, train, val, cfg, None, |_| {})
}

/// [`train`] with optional starting parameters and a callback run after
/// every epoch.
pub fn train_with(
    task: Task,
    spec: &ModelSpec,
    train: &Manifest,
    val: &Manifest,
    cfg: &TrainConfig,
    init: Option<Params>,
    mut on_epoch: impl FnMut(&EpochRow),
) -> Result<(Params, TrainLog)> {
    check_inputs(task, spec, train, val, cfg)?;
    let train_targets = Targets::from_manifest(task, train)?;
    let val_targets = Targets::from_manifest(task, val)?;
    let train_images = ImageBatcher::new(&train.records, cfg.threads)?;
    let val_images = ImageBatcher::new(&val.records, cfg.threads)?;

    let mut params = match init {
        Some(p) => Params::new(spec, p.layers().to_vec())?,
        None => init_params(spec, cfg.seed),
    };
    let mut state = AdamState::new(params.tensors());
    let mut shuffler = EpochShuffler::new(cfg.seed, train.len());
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let order = shuffler.next_epoch();
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let bound = BoundParams::bind(&mut g, &params, true);
            let loss = batch_loss(spec, &mut g, &bound, &train_images, &train_targets, chunk)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: value });
            }
            loss_sum += value as f64 * chunk.len() as f64;
            g.backward(loss)?;
            let grads: Vec<Tensor> = bound
                .vars
                .iter()
                .zip(params.layers())
                .flat_map(|(&(w, b), p)| {
                    [
                        g.take_grad(w).unwrap_or_else(|| Tensor::zeros(p.weight.shape())),
                        g.take_grad(b).unwrap_or_else(|| Tensor::zeros(p.bias.shape())),
                    ]
                })
                .collect();
            drop(g);
            let grads: Vec<&Tensor> = grads.iter().collect();
            adam_step(&mut params.tensors_mut(), &grads, &mut state, cfg)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !params.all_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: f32::NAN,
            });
        }
        let outputs = predict_outputs(spec, &params, &val_images, cfg.batch_size)?;
        let row = EpochRow {
            epoch,
            train_loss,
            val_metric: task_metric(&val_targets, &outputs)?,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&row);
        log.rows.push(row);
    }
    Ok((params, log))
}
