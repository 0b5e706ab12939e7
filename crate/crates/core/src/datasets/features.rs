//! Graph and flat encodings of a game state.
//!
//! Node order: the players by id, then the map locations in row-major order
//! (Cleanup: aquifer and field cells; Harvest: every cell). Each node has
//! the same feature vector:
//!
//! | offset | width | feature                                    |
//! |--------|-------|--------------------------------------------|
//! | 0      | 1     | x (column)                                 |
//! | 1      | 1     | y (row)                                    |
//! | 2      | 4     | cell content one-hot, locations only       |
//! | 6      | 2     | identity one-hot (prosocial, antisocial)   |
//! | 8      | 9     | last action one-hot                        |
//! | 17     | 1     | last reward                                |
//! | 18     | 4     | orientation one-hot (N, E, S, W)           |
//! | 22     | 1     | return so far (optional)                   |
//!
//! Agent-only features are zero on location nodes and content is zero on
//! agent nodes. The global feature is the timestep. Edges run from every
//! node to every agent node and carry no features.
//!
//! Every feature is a small integer, so samples are stored as `f32` without
//! loss.

use serde::{Deserialize, Serialize};

use crate::engine::{Action, GameKind, GameState, IdentityTag};
use crate::grid::{CellKind, GridPos};

use super::DatasetError;

/// Bumped whenever the layout above changes.
pub const FEATURE_VERSION: u32 = 1;

pub const F_X: usize = 0;
pub const F_Y: usize = 1;
pub const F_CONTENT: usize = 2;
pub const F_IDENTITY: usize = 6;
pub const F_ACTION: usize = 8;
pub const F_REWARD: usize = 17;
pub const F_ORIENTATION: usize = 18;
pub const F_RETURN: usize = 22;
const BASE_FEATURES: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub return_so_far: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { return_so_far: true }
    }
}

impl FeatureConfig {
    pub fn node_dim(&self) -> usize {
        BASE_FEATURES + self.return_so_far as usize
    }
}

/// Content categories per game, in one-hot order.
pub fn content_categories(game: GameKind) -> [CellKind; 4] {
    match game {
        GameKind::Cleanup => [CellKind::CleanWater, CellKind::DirtyWater, CellKind::EmptyField, CellKind::Apple],
        GameKind::Harvest => [CellKind::EmptyField, CellKind::Apple, CellKind::Wall, CellKind::EmptySpace],
    }
}

/// Location nodes of a state, in node order.
pub fn location_cells(state: &GameState) -> Vec<GridPos> {
    match state.kind {
        GameKind::Cleanup => state
            .grid
            .positions()
            .filter(|&p| state.layout.aquifer.get(p) || state.layout.field.get(p))
            .collect(),
        GameKind::Harvest => state.grid.positions().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub game: GameKind,
    pub num_agents: usize,
    pub num_nodes: usize,
    pub node_dim: usize,
    /// Row-major `num_nodes x node_dim`.
    pub nodes: Vec<f32>,
    /// The timestep.
    pub global: f32,
    /// Forward return per agent, when known.
    pub targets: Vec<f64>,
}

impl GraphSample {
    pub fn node(&self, i: usize) -> &[f32] {
        &self.nodes[i * self.node_dim..(i + 1) * self.node_dim]
    }

    pub fn num_edges(&self) -> usize {
        self.num_nodes * self.num_agents
    }

    /// `(sender, receiver)` pairs: every node to every agent node.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes)
            .flat_map(|s| (0..self.num_agents).map(move |r| (s, r)))
            .collect()
    }

    /// Reorder location nodes: new location `j` is old location `perm[j]`.
    pub fn permute_locations(&self, perm: &[usize]) -> GraphSample {
        let k = self.num_agents;
        let d = self.node_dim;
        assert_eq!(perm.len(), self.num_nodes - k);
        let mut nodes = self.nodes[..k * d].to_vec();
        for &j in perm {
            nodes.extend_from_slice(self.node(k + j));
        }
        GraphSample { nodes, ..self.clone() }
    }
}

fn one_hot(row: &mut [f32], offset: usize, index: usize) {
    row[offset + index] = 1.0;
}

/// Encode `state` as a graph. Depends only on cells, players and the
/// timestep, never on the random streams.
pub fn extract_graph(state: &GameState, config: FeatureConfig) -> GraphSample {
    let d = config.node_dim();
    let locations = location_cells(state);
    let k = state.players.len();
    let n = k + locations.len();
    let mut nodes = vec![0f32; n * d];
    for (i, p) in state.players.iter().enumerate() {
        let row = &mut nodes[i * d..(i + 1) * d];
        row[F_X] = p.pos.col as f32;
        row[F_Y] = p.pos.row as f32;
        match p.identity {
            IdentityTag::Prosocial => one_hot(row, F_IDENTITY, 0),
            IdentityTag::Antisocial => one_hot(row, F_IDENTITY, 1),
            IdentityTag::None => {}
        }
        one_hot(row, F_ACTION, p.last_action.index());
        row[F_REWARD] = p.last_reward as f32;
        one_hot(row, F_ORIENTATION, p.orientation.index());
        if config.return_so_far {
            row[F_RETURN] = p.return_so_far as f32;
        }
    }
    let cats = content_categories(state.kind);
    for (j, &pos) in locations.iter().enumerate() {
        let row = &mut nodes[(k + j) * d..(k + j + 1) * d];
        row[F_X] = pos.col as f32;
        row[F_Y] = pos.row as f32;
        if let Some(c) = cats.iter().position(|&c| c == state.grid.get(pos)) {
            one_hot(row, F_CONTENT, c);
        }
    }
    GraphSample {
        game: state.kind,
        num_agents: k,
        num_nodes: n,
        node_dim: d,
        nodes,
        global: state.t as f32,
        targets: Vec::new(),
    }
}

/// Human-readable names of one node's features.
pub fn feature_names(game: GameKind, config: FeatureConfig) -> Vec<String> {
    let mut names = vec!["x".to_string(), "y".to_string()];
    names.extend(content_categories(game).iter().map(|c| format!("content_{c:?}")));
    names.extend(["identity_prosocial", "identity_antisocial"].map(String::from));
    names.extend(Action::ALL.iter().map(|a| format!("last_action_{a:?}")));
    names.push("last_reward".into());
    names.extend(["orientation_n", "orientation_e", "orientation_s", "orientation_w"].map(String::from));
    if config.return_so_far {
        names.push("return_so_far".into());
    }
    names
}

/// Fixed-length vector encoding of graph samples for the perceptron.
///
/// Unpadded: nodes in order, then the global feature. Padded: `max_nodes`
/// slots, each the node's features followed by a presence flag; absent
/// slots are all zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlatLayout {
    pub num_nodes: usize,
    pub node_dim: usize,
    pub num_agents: usize,
    pub padded: bool,
}

impl FlatLayout {
    pub fn of(sample: &GraphSample, padded: bool) -> Self {
        Self {
            num_nodes: sample.num_nodes,
            node_dim: sample.node_dim,
            num_agents: sample.num_agents,
            padded,
        }
    }

    fn slot(&self) -> usize {
        self.node_dim + self.padded as usize
    }

    pub fn len(&self) -> usize {
        self.num_nodes * self.slot() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn flatten(&self, sample: &GraphSample) -> Result<Vec<f64>, DatasetError> {
        let mut out = vec![0.0; self.len()];
        self.flatten_into(sample, &mut out)?;
        Ok(out)
    }

    pub fn flatten_into(&self, sample: &GraphSample, out: &mut [f64]) -> Result<(), DatasetError> {
        let fits = if self.padded {
            sample.num_nodes <= self.num_nodes
        } else {
            sample.num_nodes == self.num_nodes
        };
        if !fits || sample.node_dim != self.node_dim || out.len() != self.len() {
            return Err(DatasetError::Layout {
                expected: format!("{} nodes x {} features", self.num_nodes, self.node_dim),
                found: format!("{} nodes x {} features", sample.num_nodes, sample.node_dim),
            });
        }
        out.fill(0.0);
        let s = self.slot();
        for i in 0..sample.num_nodes {
            for (dst, &src) in out[i * s..i * s + self.node_dim].iter_mut().zip(sample.node(i)) {
                *dst = src as f64;
            }
            if self.padded {
                out[i * s + self.node_dim] = 1.0;
            }
        }
        out[self.len() - 1] = sample.global as f64;
        Ok(())
    }

    /// Inverse of [`FlatLayout::flatten`] for unpadded layouts and for the
    /// present slots of padded ones.
    pub fn unflatten(&self, game: GameKind, flat: &[f64]) -> GraphSample {
        let s = self.slot();
        let present = if self.padded {
            (0..self.num_nodes).take_while(|&i| flat[i * s + self.node_dim] != 0.0).count()
        } else {
            self.num_nodes
        };
        let mut nodes = Vec::with_capacity(present * self.node_dim);
        for i in 0..present {
            nodes.extend(flat[i * s..i * s + self.node_dim].iter().map(|&v| v as f32));
        }
        GraphSample {
            game,
            num_agents: self.num_agents,
            num_nodes: present,
            node_dim: self.node_dim,
            nodes,
            global: flat[self.len() - 1] as f32,
            targets: Vec::new(),
        }
    }
}

/// Per-feature affine whitening fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviations below this are treated as constant features.
pub const STD_FLOOR: f64 = 1e-6;

impl WhitenStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fit from rows of equal length. Features that never vary get unit
    /// scale (centring only) so unseen values stay on the input scale.
    pub fn fit<'a, I, R>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]> + 'a,
    {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            let row = row.as_ref();
            n += 1;
            for j in 0..dim {
                let delta = row[j] - mean[j];
                mean[j] += delta / n as f64;
                m2[j] += delta * (row[j] - mean[j]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply_one(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) / self.std[j]
    }
}
