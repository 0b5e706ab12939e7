//! Perceptron on the flattened, whitened state vector.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use oboe_core::datasets::{FeatureConfig, FlatLayout, GraphSample, WhitenStats};
use oboe_core::rng::split_rng;
use oboe_core::GameKind;

use crate::dense::DenseStack;
use crate::{check_targets, Model, ModelError, TargetScale};

/// Hidden and output widths for a game; the last entry is one output per
/// player.
pub fn default_widths(game: GameKind) -> Vec<usize> {
    match game {
        GameKind::Cleanup => vec![64, 32, 32, 5],
        GameKind::Harvest => vec![128, 128, 128, 128, 5],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub game: GameKind,
    pub features: FeatureConfig,
    pub layout: FlatLayout,
    pub stack: DenseStack,
    pub params: Vec<f64>,
    pub whiten: WhitenStats,
    pub target: TargetScale,
}

impl MlpModel {
    /// Randomly initialized model with identity whitening and scaling.
    pub fn new(game: GameKind, features: FeatureConfig, layout: FlatLayout, widths: &[usize], seed: u64) -> Self {
        let mut sizes = vec![layout.len()];
        sizes.extend_from_slice(widths);
        let stack = DenseStack::new(sizes, false, 0);
        let mut params = vec![0.0; stack.num_params()];
        stack.init(&mut params, &mut split_rng(seed, "mlp-init"));
        Self {
            game,
            features,
            layout,
            whiten: WhitenStats::identity(layout.len()),
            stack,
            params,
            target: TargetScale::default(),
        }
    }

    /// Fit input whitening and target scaling on training samples.
    pub fn fit_normalization(&mut self, train: &[GraphSample]) -> Result<(), ModelError> {
        let rows: Vec<Vec<f64>> = train.iter().map(|s| self.layout.flatten(s)).collect::<Result<_, _>>()?;
        self.whiten = WhitenStats::fit(&rows, self.layout.len());
        self.target = TargetScale::fit(train);
        Ok(())
    }

    pub fn num_outputs(&self) -> usize {
        self.stack.output_dim()
    }

    fn inputs(&self, batch: &[&GraphSample]) -> Result<Array2<f64>, ModelError> {
        let n = self.layout.len();
        let mut x = Array2::zeros((batch.len(), n));
        for (row, s) in x.rows_mut().into_iter().zip(batch) {
            if s.game != self.game {
                return Err(ModelError::WrongGame {
                    expected: self.game,
                    found: s.game,
                });
            }
            let flat_len = s.num_nodes * (s.node_dim + self.layout.padded as usize) + 1;
            if !self.layout.padded && flat_len != n {
                return Err(ModelError::Dimension {
                    expected: n,
                    found: flat_len,
                });
            }
            let slice = row.into_slice().expect("standard layout");
            self.layout.flatten_into(s, slice)?;
            self.whiten.apply(slice);
        }
        Ok(x)
    }
}

impl Model for MlpModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, ModelError> {
        let x = self.inputs(&[sample])?;
        let tape = self.stack.forward(&self.params, x);
        Ok(tape.output().row(0).iter().map(|&v| self.target.mean + self.target.std * v).collect())
    }

    fn relu_pattern(&self, batch: &[&GraphSample]) -> Result<Vec<bool>, ModelError> {
        let tape = self.stack.forward(&self.params, self.inputs(batch)?);
        let mut out = Vec::new();
        self.stack.relu_pattern(&tape, &mut out);
        Ok(out)
    }

    fn loss_and_grad(&self, batch: &[&GraphSample], grad: &mut [f64]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let k = self.num_outputs();
        let x = self.inputs(batch)?;
        let tape = self.stack.forward(&self.params, x);
        let out = tape.output();
        let scale = 1.0 / (batch.len() * k) as f64;
        let mut d = Array2::zeros(out.dim());
        let mut loss = 0.0;
        for (b, s) in batch.iter().enumerate() {
            check_targets(s, k)?;
            for i in 0..k {
                let resid = self.target.mean + self.target.std * out[[b, i]] - s.targets[i];
                loss += resid * resid;
                d[[b, i]] = 2.0 * resid * self.target.std * scale;
            }
        }
        self.stack.backward(&self.params, &tape, d, grad, false);
        Ok(loss * scale)
    }
}
