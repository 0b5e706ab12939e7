//! Relational forward model: an edge block over every (node, agent) pair,
//! aggregation of incoming edges at each agent, and a node block producing
//! one scalar per agent. Location-node outputs would be ignored, so the node
//! block is only evaluated on agent nodes.
//!
//! The first edge layer acts on `[global, sender, receiver]`; its
//! pre-activation is computed as the sum of a per-sender term, a
//! per-receiver term and a global term, which is the same affine map at a
//! fraction of the cost.

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use oboe_core::datasets::{FeatureConfig, GraphSample, WhitenStats};
use oboe_core::rng::split_rng;
use oboe_core::GameKind;

use crate::dense::DenseStack;
use crate::{check_targets, Model, ModelError, TargetScale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
}

/// `(edge widths, node widths)` for a game.
pub fn default_widths(game: GameKind) -> (Vec<usize>, Vec<usize>) {
    match game {
        GameKind::Cleanup => (vec![64, 32, 32], vec![64, 32, 32, 1]),
        GameKind::Harvest => (vec![128; 5], vec![128, 128, 128, 128, 128, 1]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfmModel {
    pub game: GameKind,
    pub features: FeatureConfig,
    pub node_dim: usize,
    pub num_agents: usize,
    pub aggregation: Aggregation,
    /// Width of the first edge layer.
    pub edge_first: usize,
    /// Remaining edge layers, input `edge_first`.
    pub edge_rest: DenseStack,
    /// Input `node_dim + 1 + edge width`, output 1.
    pub node: DenseStack,
    pub params: Vec<f64>,
    pub node_whiten: WhitenStats,
    pub global_whiten: WhitenStats,
    pub target: TargetScale,
}

struct Forward {
    x: Array2<f64>,
    g: f64,
    a1: Array2<f64>,
    edge: crate::dense::Tape,
    node: crate::dense::Tape,
}

impl RfmModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        game: GameKind,
        features: FeatureConfig,
        num_agents: usize,
        edge_widths: &[usize],
        node_widths: &[usize],
        aggregation: Aggregation,
        seed: u64,
    ) -> Self {
        assert!(!edge_widths.is_empty() && node_widths.last() == Some(&1));
        let d = features.node_dim();
        let h1 = edge_widths[0];
        let first = h1 * (1 + 2 * d) + h1;
        let edge_rest = DenseStack::new(edge_widths.to_vec(), true, first);
        let mut node_sizes = vec![d + 1 + edge_rest.output_dim()];
        node_sizes.extend_from_slice(node_widths);
        let node = DenseStack::new(node_sizes, false, edge_rest.end());
        let mut params = vec![0.0; node.end()];
        let mut rng = split_rng(seed, "rfm-init");
        let bound = (6.0 / (1 + 2 * d) as f64).sqrt();
        for v in &mut params[..h1 * (1 + 2 * d)] {
            *v = rng.random_range(-bound..bound);
        }
        edge_rest.init(&mut params, &mut rng);
        node.init(&mut params, &mut rng);
        Self {
            game,
            features,
            node_dim: d,
            num_agents,
            aggregation,
            edge_first: h1,
            edge_rest,
            node,
            params,
            node_whiten: WhitenStats::identity(d),
            global_whiten: WhitenStats::identity(1),
            target: TargetScale::default(),
        }
    }

    pub fn with_default_widths(game: GameKind, features: FeatureConfig, seed: u64) -> Self {
        let (e, n) = default_widths(game);
        Self::new(game, features, oboe_core::NUM_PLAYERS, &e, &n, Aggregation::Sum, seed)
    }

    /// Fit node-feature and global whitening plus target scaling.
    pub fn fit_normalization(&mut self, train: &[GraphSample]) {
        let d = self.node_dim;
        let rows = train.iter().flat_map(|s| {
            (0..s.num_nodes).map(move |i| s.node(i).iter().map(|&v| v as f64).collect::<Vec<f64>>())
        });
        self.node_whiten = WhitenStats::fit(rows, d);
        self.global_whiten = WhitenStats::fit(train.iter().map(|s| vec![s.global as f64]), 1);
        self.target = TargetScale::fit(train);
    }

    fn first_weights(&self) -> ArrayView2<'_, f64> {
        let h1 = self.edge_first;
        ArrayView2::from_shape((h1, 1 + 2 * self.node_dim), &self.params[..h1 * (1 + 2 * self.node_dim)]).expect("shape")
    }

    fn first_bias(&self) -> &[f64] {
        let n = self.edge_first * (1 + 2 * self.node_dim);
        &self.params[n..n + self.edge_first]
    }

    fn check(&self, s: &GraphSample) -> Result<(), ModelError> {
        if s.game != self.game {
            return Err(ModelError::WrongGame {
                expected: self.game,
                found: s.game,
            });
        }
        if s.node_dim != self.node_dim {
            return Err(ModelError::Dimension {
                expected: self.node_dim,
                found: s.node_dim,
            });
        }
        if s.num_agents != self.num_agents || s.num_nodes < s.num_agents {
            return Err(ModelError::AgentCount {
                expected: self.num_agents,
                found: s.num_agents,
            });
        }
        Ok(())
    }

    fn forward(&self, s: &GraphSample) -> Result<Forward, ModelError> {
        self.check(s)?;
        let (n, d, k) = (s.num_nodes, self.node_dim, self.num_agents);
        let mut x = Array2::from_shape_fn((n, d), |(i, j)| s.nodes[i * d + j] as f64);
        for mut row in x.rows_mut() {
            self.node_whiten.apply(row.as_slice_mut().expect("contiguous"));
        }
        let g = self.global_whiten.apply_one(0, s.global as f64);

        let w1 = self.first_weights();
        let sender = x.dot(&w1.slice(s![.., 1..1 + d]).t());
        let receiver = x.slice(s![..k, ..]).dot(&w1.slice(s![.., 1 + d..]).t());
        let mut c = w1.column(0).to_owned() * g;
        c += &Array1::from(self.first_bias().to_vec());
        let h1 = self.edge_first;
        let mut a1 = Array2::zeros((n * k, h1));
        for src in 0..n {
            for r in 0..k {
                let mut row = a1.row_mut(src * k + r);
                for j in 0..h1 {
                    row[j] = (sender[[src, j]] + receiver[[r, j]] + c[j]).max(0.0);
                }
            }
        }
        let edge = self.edge_rest.forward(&self.params, a1.clone());
        let emb = edge.output();
        let he = emb.ncols();
        let mut z = Array2::zeros((k, d + 1 + he));
        z.slice_mut(s![.., ..d]).assign(&x.slice(s![..k, ..]));
        z.column_mut(d).fill(g);
        let norm = match self.aggregation {
            Aggregation::Sum => 1.0,
            Aggregation::Mean => 1.0 / n as f64,
        };
        for src in 0..n {
            for r in 0..k {
                let e = emb.row(src * k + r);
                let mut zr = z.slice_mut(s![r, d + 1..]);
                zr.scaled_add(norm, &e);
            }
        }
        let node = self.node.forward(&self.params, z);
        Ok(Forward { x, g, a1, edge, node })
    }

    fn outputs(&self, f: &Forward) -> Vec<f64> {
        f.node
            .output()
            .column(0)
            .iter()
            .map(|&v| self.target.mean + self.target.std * v)
            .collect()
    }

    /// Squared error sum for one graph; gradient of `weight * sse` added
    /// into `grad`.
    fn graph_grad(&self, s: &GraphSample, weight: f64, grad: &mut [f64]) -> Result<f64, ModelError> {
        let k = self.num_agents;
        check_targets(s, k)?;
        let f = self.forward(s)?;
        let pred = self.outputs(&f);
        let mut d_out = Array2::zeros((k, 1));
        let mut sse = 0.0;
        for r in 0..k {
            let resid = pred[r] - s.targets[r];
            sse += resid * resid;
            d_out[[r, 0]] = 2.0 * resid * self.target.std * weight;
        }
        let dz = self
            .node
            .backward(&self.params, &f.node, d_out, grad, true)
            .expect("input gradient requested");
        let (n, d) = (s.num_nodes, self.node_dim);
        let norm = match self.aggregation {
            Aggregation::Sum => 1.0,
            Aggregation::Mean => 1.0 / n as f64,
        };
        let d_agg = dz.slice(s![.., d + 1..]).to_owned() * norm;
        let d_g: f64 = dz.column(d).sum();
        let he = d_agg.ncols();
        let mut d_emb = Array2::zeros((n * k, he));
        for src in 0..n {
            d_emb.slice_mut(s![src * k..(src + 1) * k, ..]).assign(&d_agg);
        }
        let mut d_a1 = self
            .edge_rest
            .backward(&self.params, &f.edge, d_emb, grad, true)
            .expect("input gradient requested");
        ndarray::Zip::from(&mut d_a1).and(&f.a1).for_each(|gv, &a| {
            if a <= 0.0 {
                *gv = 0.0;
            }
        });
        let h1 = self.edge_first;
        let d_sender = d_a1.view().into_shape_with_order((n, k, h1)).expect("shape").sum_axis(Axis(1));
        let d_receiver = d_a1.view().into_shape_with_order((n, k, h1)).expect("shape").sum_axis(Axis(0));
        let d_c = d_a1.sum_axis(Axis(0));
        let cols = 1 + 2 * d;
        {
            let mut gw = ArrayViewMut2::from_shape((h1, cols), &mut grad[..h1 * cols]).expect("shape");
            gw.slice_mut(s![.., 1..1 + d]).scaled_add(1.0, &d_sender.t().dot(&f.x));
            gw.slice_mut(s![.., 1 + d..]).scaled_add(1.0, &d_receiver.t().dot(&f.x.slice(s![..k, ..])));
            gw.column_mut(0).scaled_add(f.g, &d_c);
        }
        for (gb, dc) in grad[h1 * cols..h1 * cols + h1].iter_mut().zip(d_c.iter()) {
            *gb += dc;
        }
        // The global input is not a parameter; its gradient is unused.
        let _ = d_g;
        Ok(sse)
    }
}

impl Model for RfmModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, sample: &GraphSample) -> Result<Vec<f64>, ModelError> {
        Ok(self.outputs(&self.forward(sample)?))
    }

    fn relu_pattern(&self, batch: &[&GraphSample]) -> Result<Vec<bool>, ModelError> {
        let mut out = Vec::new();
        for s in batch {
            let f = self.forward(s)?;
            out.extend(f.a1.iter().map(|&a| a > 0.0));
            self.edge_rest.relu_pattern(&f.edge, &mut out);
            self.node.relu_pattern(&f.node, &mut out);
        }
        Ok(out)
    }

    fn loss_and_grad(&self, batch: &[&GraphSample], grad: &mut [f64]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let weight = 1.0 / (batch.len() * self.num_agents) as f64;
        let parts: Vec<Result<(f64, Vec<f64>), ModelError>> = batch
            .par_iter()
            .map(|s| {
                let mut g = vec![0.0; self.params.len()];
                self.graph_grad(s, weight, &mut g).map(|sse| (sse, g))
            })
            .collect();
        let mut total = 0.0;
        for part in parts {
            let (sse, g) = part?;
            total += sse;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        Ok(total * weight)
    }

    fn loss(&self, batch: &[&GraphSample]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let sums: Vec<Result<f64, ModelError>> = batch
            .par_iter()
            .map(|s| {
                check_targets(s, self.num_agents)?;
                let pred = self.predict(s)?;
                Ok(pred.iter().zip(&s.targets).map(|(p, y)| (p - y).powi(2)).sum())
            })
            .collect();
        let mut total = 0.0;
        for v in sums {
            total += v?;
        }
        Ok(total / (batch.len() * self.num_agents) as f64)
    }
}
