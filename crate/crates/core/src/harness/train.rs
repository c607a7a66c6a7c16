use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Profile;
use crate::error::{Error, Result};
use crate::model::{msti_forward, Model};
use crate::numerics::{adam_step, AdamConfig, Graph, Parameter, Tensor};

use super::{evaluate, TaskData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub huber_delta: f64,
    /// Keep every `train_stride`-th training window.
    pub train_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Full)
    }
}

impl TrainConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (batch_size, patience) = match profile {
            Profile::Full => (32, 10),
            Profile::Tiny => (16, 5),
        };
        Self {
            lr: 1e-3,
            weight_decay: 3e-4,
            betas: [0.9, 0.999],
            eps: 1e-8,
            batch_size,
            patience,
            max_epochs: 100,
            huber_delta: 1.0,
            train_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && self.betas.iter().all(|b| (0.0..1.0).contains(b))
            && self.eps > 0.0
            && self.huber_delta > 0.0;
        if !ok {
            return Err(Error::Config(
                "lr, eps and huber_delta must be positive, betas in [0, 1), weight_decay non-negative".into(),
            ));
        }
        if self.batch_size == 0 || self.train_stride == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, patience and train_stride must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            weight_decay: self.weight_decay,
            beta1: self.betas[0],
            beta2: self.betas[1],
            eps: self.eps,
        }
    }
}

/// Settings that vary between calls sharing one [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub lr: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Epoch 0 is the evaluation of the starting weights.
    pub epoch: usize,
    /// Mean mini-batch Huber loss; absent for epoch 0.
    pub train_loss: Option<f64>,
    pub val_mae: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
}

impl TrainOutcome {
    pub fn epochs_trained(&self) -> usize {
        self.epochs.len().saturating_sub(1)
    }
}

/// Called after every completed training epoch with the epoch-end weights.
pub type EpochObserver<'a> = dyn FnMut(&EpochRecord, &Model, &Parameter) -> Result<()> + 'a;

/// Mean Huber loss and gradients for one batch; gradients land in
/// `model.params` and `prompt.grad`.
pub fn batch_gradients(model: &mut Model, prompt: &mut Parameter, task: &TaskData, starts: &[usize], delta: f64) -> Result<f64> {
    let batch = task.batch(starts)?;
    let mut g = Graph::new();
    let binding = model.params.bind(&mut g);
    let p = g.param(prompt.value.clone());
    let pred = msti_forward(&mut g, &model.config, &binding, p, &batch, None)?;
    let target = g.constant(batch.y);
    let loss = g.huber(pred, target, delta)?;
    let value = g.value(loss).data()[0];
    let mut grads = g.backward(loss)?;
    let vars = binding.into_vars();
    model.params.store_grads(&vars, &mut grads);
    prompt.grad = Some(grads.take(p).unwrap_or_else(|| Tensor::zeros(prompt.value.shape())));
    Ok(value)
}

/// Mini-batch training with early stopping on validation MAE. The starting
/// weights count as epoch 0, only strict improvements reset the patience
/// counter, and the best weights (model and prompt) are restored on return.
pub fn train_until_convergence(
    model: &mut Model,
    prompt: &mut Parameter,
    task: &TaskData,
    cfg: &TrainConfig,
    phase: Phase,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !(phase.lr > 0.0) {
        return Err(Error::Config("phase learning rate must be positive".into()));
    }
    let adam = cfg.adam(phase.lr);
    model.params.reset_optimizer_state();
    prompt.reset_optimizer_state();
    let mut rng = ChaCha8Rng::seed_from_u64(phase.seed);
    let mut order = task.train_windows.clone();

    let baseline = evaluate(model, &prompt.value, task, &task.split.val, cfg.batch_size)?.mae;
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_loss: None,
        val_mae: baseline,
        improved: true,
    }];
    let mut best = (0, baseline, model.params.values(), prompt.value.clone());
    let mut waited = 0;

    for epoch in 1..=phase.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let loss = batch_gradients(model, prompt, task, chunk, cfg.huber_delta)
                .map_err(|e| diverged(e, epoch, bi))?;
            model.params.adam_step(&adam).map_err(|e| diverged(e, epoch, bi))?;
            adam_step(prompt, &adam).map_err(|e| diverged(e, epoch, bi))?;
            loss_sum += loss;
            batches += 1;
        }
        let val_mae = evaluate(model, &prompt.value, task, &task.split.val, cfg.batch_size)?.mae;
        let improved = val_mae < best.1;
        let record = EpochRecord {
            epoch,
            train_loss: Some(loss_sum / batches as f64),
            val_mae,
            improved,
        };
        log::info!(
            "{}: epoch {epoch} loss {:.6} val MAE {val_mae:.6}{}",
            task.name(),
            loss_sum / batches as f64,
            if improved { " *" } else { "" }
        );
        observer(&record, model, prompt)?;
        epochs.push(record);
        if improved {
            best = (epoch, val_mae, model.params.values(), prompt.value.clone());
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, best_val_mae, values, prompt_value) = best;
    model.params.load_values(&values)?;
    prompt.value = prompt_value;
    Ok(TrainOutcome {
        epochs,
        best_epoch,
        best_val_mae,
    })
}

fn diverged(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFinite(msg) => Error::Divergence(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// Observer that does nothing.
pub fn no_observer(_: &EpochRecord, _: &Model, _: &Parameter) -> Result<()> {
    Ok(())
}
