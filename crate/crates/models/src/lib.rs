//! Forward-return predictors trained on observational data: a perceptron on
//! the flattened state and a relational forward model on the state graph.
//! Both predict, for each player, the sum of its rewards after the current
//! timestep.

pub mod checkpoint;
pub mod dense;
pub mod mlp;
pub mod rfm;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use oboe_core::datasets::{DatasetError, GraphSample};
use oboe_core::GameKind;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use mlp::MlpModel;
pub use rfm::{Aggregation, RfmModel};
pub use train::{train, LossCurve, LossPoint, TrainerConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {found} features, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("sample is for {found:?}, model was built for {expected:?}")]
    WrongGame { expected: GameKind, found: GameKind },
    #[error("sample has {found} agents, model predicts for {expected}")]
    AgentCount { expected: usize, found: usize },
    #[error("sample carries {found} targets, expected {expected}")]
    MissingTargets { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Features(#[from] DatasetError),
    #[error("training diverged at step {step} (batch {batch}): loss {loss}, parameter norm {param_norm}")]
    NonFinite {
        step: usize,
        batch: usize,
        loss: f64,
        param_norm: f64,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Affine map from network output to return units: `mean + std * output`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl Default for TargetScale {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl TargetScale {
    /// Pooled over every agent target of `samples`.
    pub fn fit(samples: &[GraphSample]) -> Self {
        let values: Vec<f64> = samples.iter().flat_map(|s| s.targets.iter().copied()).collect();
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() < 1e-6 { 1.0 } else { var.sqrt() };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp,
    Rfm,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Rfm => "rfm",
        }
    }
}

/// A model whose parameters live in one flat vector and whose batch MSE
/// has exact gradients.
pub trait Model: Clone + Send + Sync {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Per-agent forward-return predictions.
    fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, ModelError>;
    /// Mean over samples and agents of the squared prediction error, and
    /// its gradient added into `grad`.
    fn loss_and_grad(&self, batch: &[&GraphSample], grad: &mut [f64]) -> Result<f64, ModelError>;

    /// Which rectifiers are active on `batch`. The loss is smooth in the
    /// parameters wherever this pattern does not change, which lets
    /// gradient checks recognise finite-difference steps across a kink.
    fn relu_pattern(&self, batch: &[&GraphSample]) -> Result<Vec<bool>, ModelError>;

    fn loss(&self, batch: &[&GraphSample]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for s in batch {
            let pred = self.predict(s)?;
            check_targets(s, pred.len())?;
            total += pred.iter().zip(&s.targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>();
            count += pred.len();
        }
        Ok(total / count as f64)
    }
}

pub(crate) fn check_targets(s: &GraphSample, k: usize) -> Result<(), ModelError> {
    if s.targets.len() != k {
        return Err(ModelError::MissingTargets {
            expected: k,
            found: s.targets.len(),
        });
    }
    Ok(())
}

/// Either trained architecture, for code that handles both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum Predictor {
    Mlp(MlpModel),
    Rfm(RfmModel),
}

impl Predictor {
    pub fn architecture(&self) -> Architecture {
        match self {
            Predictor::Mlp(_) => Architecture::Mlp,
            Predictor::Rfm(_) => Architecture::Rfm,
        }
    }

    pub fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, ModelError> {
        match self {
            Predictor::Mlp(m) => m.predict(sample),
            Predictor::Rfm(m) => m.predict(sample),
        }
    }

    pub fn loss(&self, batch: &[&GraphSample]) -> Result<f64, ModelError> {
        match self {
            Predictor::Mlp(m) => m.loss(batch),
            Predictor::Rfm(m) => m.loss(batch),
        }
    }

    pub fn feature_config(&self) -> oboe_core::datasets::FeatureConfig {
        match self {
            Predictor::Mlp(m) => m.features,
            Predictor::Rfm(m) => m.features,
        }
    }
}
