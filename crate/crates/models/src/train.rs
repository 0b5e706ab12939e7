//! Minibatch RMSProp on mean squared error, keeping the parameters with the
//! lowest validation loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use oboe_core::datasets::GraphSample;
use oboe_core::rng::split_rng;

use crate::{Model, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement (0 disables).
    pub patience: usize,
    /// Evaluate on at most this many validation samples (0 means all).
    pub max_validation_samples: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 0.9,
            epsilon: 1e-8,
            batch_size: 640,
            max_steps: 200_000,
            eval_every: 1000,
            patience: 0,
            max_validation_samples: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    /// Mean training batch loss since the previous point (none at step 0).
    pub train_loss: Option<f64>,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub points: Vec<LossPoint>,
    pub best_step: usize,
    pub best_validation: f64,
}

struct RmsProp {
    sq: Vec<f64>,
    lr: f64,
    decay: f64,
    eps: f64,
}

impl RmsProp {
    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, s), g) in params.iter_mut().zip(&mut self.sq).zip(grad) {
            *s = self.decay * *s + (1.0 - self.decay) * g * g;
            *p -= self.lr * g / (s.sqrt() + self.eps);
        }
    }
}

/// Train `model` from its current parameters. Returns the snapshot with the
/// lowest validation loss among all evaluations, including the initial one.
pub fn train<M: Model>(
    mut model: M,
    config: &TrainerConfig,
    train_set: &[GraphSample],
    validation: &[GraphSample],
) -> Result<(M, LossCurve), ModelError> {
    if train_set.is_empty() || validation.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut val: Vec<&GraphSample> = validation.iter().collect();
    if config.max_validation_samples > 0 && val.len() > config.max_validation_samples {
        val.shuffle(&mut split_rng(config.seed, "validation-subset"));
        val.truncate(config.max_validation_samples);
    }
    let mut rng = split_rng(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut opt = RmsProp {
        sq: vec![0.0; model.params().len()],
        lr: config.learning_rate,
        decay: config.decay,
        eps: config.epsilon,
    };
    let mut grad = vec![0.0; model.params().len()];

    let initial = model.loss(&val)?;
    let mut best = model.clone();
    let mut curve = LossCurve {
        points: vec![LossPoint {
            step: 0,
            train_loss: None,
            validation_loss: initial,
        }],
        best_step: 0,
        best_validation: initial,
    };
    let mut since_best = 0;
    let mut running = 0.0;
    let mut running_n = 0usize;
    let batch_size = config.batch_size.max(1).min(train_set.len());
    let eval_every = config.eval_every.max(1);

    for step in 1..=config.max_steps {
        if cursor + batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let batch: Vec<&GraphSample> = order[cursor..cursor + batch_size].iter().map(|&i| &train_set[i]).collect();
        cursor += batch_size;
        grad.fill(0.0);
        let loss = model.loss_and_grad(&batch, &mut grad)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite {
                step,
                batch: step - 1,
                loss,
                param_norm: model.params().iter().map(|p| p * p).sum::<f64>().sqrt(),
            });
        }
        opt.update(model.params_mut(), &grad);
        running += loss;
        running_n += 1;

        if step % eval_every == 0 || step == config.max_steps {
            let v = model.loss(&val)?;
            if !v.is_finite() {
                return Err(ModelError::NonFinite {
                    step,
                    batch: step - 1,
                    loss: v,
                    param_norm: model.params().iter().map(|p| p * p).sum::<f64>().sqrt(),
                });
            }
            curve.points.push(LossPoint {
                step,
                train_loss: Some(running / running_n as f64),
                validation_loss: v,
            });
            running = 0.0;
            running_n = 0;
            if v < curve.best_validation {
                curve.best_validation = v;
                curve.best_step = step;
                best = model.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if config.patience > 0 && since_best >= config.patience {
                    break;
                }
            }
        }
    }
    Ok((best, curve))
}
