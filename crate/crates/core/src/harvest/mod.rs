//! Harvest: a common pool resource game on procedurally generated maps.
//!
//! Apples regrow only near other apples: an empty field cell respawns an
//! apple with a probability looked up from the number of apples within
//! Chebyshev distance `respawn_radius`. The same distance function drives the
//! optional collection-failure rule.

mod procgen;

pub use procgen::{generate_harvest_map, Corner, ProcGenMap, RoomDescriptor, ProcGenConfig};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    resolve_fines, resolve_moves, resolve_turns, Action, GameKind, GameState, IdentityTag, Layout, PlayerState,
    Rules,
};
use crate::grid::{CellKind, CellMask, Grid, GridPos, Orientation};
use crate::rng::split_rng;

pub const HARVEST_WIDTH: usize = 35;
pub const HARVEST_HEIGHT: usize = 23;

/// Timestep at which Harvest interventions happen.
pub const HARVEST_INTERVENE_T: u32 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestParams {
    pub respawn_radius: usize,
    /// Respawn probability indexed by nearby apple count; the last entry
    /// covers every larger count.
    pub respawn_prob_by_neighbors: Vec<f64>,
    pub punish_penalty: f64,
    pub punish_cost: f64,
    pub apple_reward: f64,
    pub collection_failure_enabled: bool,
    pub failure_neighbor_threshold: usize,
    pub failure_radius: usize,
}

impl Default for HarvestParams {
    fn default() -> Self {
        Self {
            respawn_radius: 2,
            respawn_prob_by_neighbors: vec![0.0, 0.005, 0.005, 0.02, 0.02, 0.05],
            punish_penalty: -30.0,
            punish_cost: 0.0,
            apple_reward: 1.0,
            collection_failure_enabled: false,
            failure_neighbor_threshold: 3,
            failure_radius: 2,
        }
    }
}

impl HarvestParams {
    pub fn respawn_probability(&self, neighbors: usize) -> f64 {
        match self.respawn_prob_by_neighbors.last() {
            None => 0.0,
            Some(&last) => self.respawn_prob_by_neighbors.get(neighbors).copied().unwrap_or(last),
        }
    }

    /// Probability that collecting an apple with `neighbors` other apples
    /// nearby fails.
    pub fn failure_probability(&self, neighbors: usize) -> f64 {
        if !self.collection_failure_enabled || neighbors >= self.failure_neighbor_threshold {
            0.0
        } else {
            0.5f64.powi(neighbors as i32)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let table = &self.respawn_prob_by_neighbors;
        if table.first().copied().unwrap_or(0.0) != 0.0 {
            return Err("respawn probability with no nearby apples must be 0".into());
        }
        if table.windows(2).any(|w| w[1] < w[0]) {
            return Err("respawn table must be nondecreasing".into());
        }
        if table.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("respawn probabilities must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Apples within Chebyshev distance `radius` of `pos`, excluding `pos`.
pub fn apples_within(grid: &Grid, pos: GridPos, radius: usize) -> usize {
    let r0 = pos.row.saturating_sub(radius);
    let r1 = (pos.row + radius).min(grid.height() - 1);
    let c0 = pos.col.saturating_sub(radius);
    let c1 = (pos.col + radius).min(grid.width() - 1);
    let mut n = 0;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let p = GridPos::new(r, c);
            if p != pos && grid.get(p) == CellKind::Apple {
                n += 1;
            }
        }
    }
    n
}

/// Summed-area table over apple cells, for window counts in O(1).
pub(crate) struct AppleCounts {
    width: usize,
    height: usize,
    sums: Vec<u32>,
}

impl AppleCounts {
    pub(crate) fn new(grid: &Grid) -> Self {
        let (h, w) = (grid.height(), grid.width());
        let mut sums = vec![0u32; (h + 1) * (w + 1)];
        for r in 0..h {
            let mut row_sum = 0;
            for c in 0..w {
                row_sum += (grid.get(GridPos::new(r, c)) == CellKind::Apple) as u32;
                sums[(r + 1) * (w + 1) + c + 1] = sums[r * (w + 1) + c + 1] + row_sum;
            }
        }
        Self { width: w, height: h, sums }
    }

    /// Same count as [`apples_within`].
    pub(crate) fn within(&self, grid: &Grid, pos: GridPos, radius: usize) -> usize {
        let r0 = pos.row.saturating_sub(radius);
        let r1 = (pos.row + radius).min(self.height - 1) + 1;
        let c0 = pos.col.saturating_sub(radius);
        let c1 = (pos.col + radius).min(self.width - 1) + 1;
        let w = self.width + 1;
        let total = self.sums[r1 * w + c1] + self.sums[r0 * w + c0] - self.sums[r0 * w + c1] - self.sums[r1 * w + c0];
        total as usize - (grid.get(pos) == CellKind::Apple) as usize
    }
}

/// Episode start on a generated map.
pub fn harvest_initial_state(map: &ProcGenMap, params: HarvestParams, horizon: u32, seed: u64) -> GameState {
    let mut rng = split_rng(seed, "harvest-init");
    let players = map
        .spawns
        .iter()
        .enumerate()
        .map(|(i, &pos)| {
            let facing = Orientation::from_index(rng.random_range(0..4));
            PlayerState::new(i, pos, facing, IdentityTag::None)
        })
        .collect();
    let layout = Layout {
        aquifer: CellMask::new(map.grid.height(), map.grid.width()),
        field: map.field.clone(),
        rooms: map.rooms.iter().map(|r| r.rect).collect(),
        spawns: map.spawns.clone(),
    };
    GameState {
        kind: GameKind::Harvest,
        t: 0,
        horizon,
        grid: map.grid.clone(),
        players,
        layout: Arc::new(layout),
        rules: Arc::new(Rules::Harvest(params)),
        rng: split_rng(seed, "env"),
    }
}

/// One Harvest transition: beams, moves, collection (with the optional
/// failure rule), then density-dependent respawn.
pub fn dynamics(state: &mut GameState, actions: &[Action], params: &HarvestParams) -> Vec<f64> {
    resolve_turns(state, actions);
    let mut rewards = resolve_fines(state, actions, params.punish_cost, params.punish_penalty);
    resolve_moves(state, actions);

    for i in 0..state.players.len() {
        let pos = state.players[i].pos;
        if state.grid.get(pos) != CellKind::Apple {
            continue;
        }
        let fail = if params.collection_failure_enabled {
            let k = apples_within(&state.grid, pos, params.failure_radius);
            let p_fail = params.failure_probability(k);
            p_fail > 0.0 && state.rng.random::<f64>() < p_fail
        } else {
            false
        };
        if !fail {
            state.grid.set(pos, CellKind::EmptyField);
            rewards[i] += params.apple_reward;
        }
    }

    let counts = AppleCounts::new(&state.grid);
    let occupied = state.occupancy();
    let layout = Arc::clone(&state.layout);
    for pos in layout.field.positions() {
        let idx = state.grid.index(pos);
        if occupied[idx] || state.grid.get(pos) != CellKind::EmptyField {
            continue;
        }
        let p = params.respawn_probability(counts.within(&state.grid, pos, params.respawn_radius));
        if p > 0.0 && state.rng.random::<f64>() < p {
            state.grid.set(pos, CellKind::Apple);
        }
    }
    rewards
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NUM_PLAYERS;

    #[test]
    fn default_table_is_valid() {
        HarvestParams::default().validate().unwrap();
        let bad = HarvestParams {
            respawn_prob_by_neighbors: vec![0.0, 0.2, 0.1],
            ..HarvestParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn table_lookup_saturates() {
        let p = HarvestParams::default();
        assert_eq!(p.respawn_probability(0), 0.0);
        assert_eq!(p.respawn_probability(2), 0.005);
        assert_eq!(p.respawn_probability(4), 0.02);
        assert_eq!(p.respawn_probability(5), 0.05);
        assert_eq!(p.respawn_probability(24), 0.05);
    }

    #[test]
    fn failure_probabilities() {
        let on = HarvestParams {
            collection_failure_enabled: true,
            ..HarvestParams::default()
        };
        assert_eq!(on.failure_probability(0), 1.0);
        assert_eq!(on.failure_probability(1), 0.5);
        assert_eq!(on.failure_probability(2), 0.25);
        assert_eq!(on.failure_probability(3), 0.0);
        assert_eq!(on.failure_probability(8), 0.0);
        assert_eq!(HarvestParams::default().failure_probability(0), 0.0);
    }

    #[test]
    fn window_counts_agree() {
        let map = generate_harvest_map(21);
        let counts = AppleCounts::new(&map.grid);
        for pos in map.grid.positions() {
            for radius in [1, 2, 3] {
                assert_eq!(counts.within(&map.grid, pos, radius), apples_within(&map.grid, pos, radius));
            }
        }
    }

    #[test]
    fn isolated_cell_never_respawns() {
        let map = generate_harvest_map(5);
        let mut s = harvest_initial_state(&map, HarvestParams::default(), 1000, 5);
        for pos in s.grid.positions().collect::<Vec<_>>() {
            if s.grid.get(pos) == CellKind::Apple {
                s.grid.set(pos, CellKind::EmptyField);
            }
        }
        for _ in 0..300 {
            s.step(&[Action::NoOp; NUM_PLAYERS]).unwrap();
        }
        assert_eq!(s.grid.count(CellKind::Apple), 0);
    }

    #[test]
    fn lone_apple_always_fails_under_the_rule() {
        let map = generate_harvest_map(9);
        let params = HarvestParams {
            collection_failure_enabled: true,
            ..HarvestParams::default()
        };
        for seed in 0..50 {
            let mut s = harvest_initial_state(&map, params.clone(), 1000, seed);
            for pos in s.grid.positions().collect::<Vec<_>>() {
                if s.grid.get(pos) == CellKind::Apple {
                    s.grid.set(pos, CellKind::EmptyField);
                }
            }
            let p = s.players[0].clone();
            let (dr, dc) = p.orientation.delta();
            let Some(ahead) = s.grid.offset(p.pos, dr, dc) else { continue };
            if !s.grid.get(ahead).is_walkable() || s.player_at(ahead).is_some() {
                continue;
            }
            s.grid.set(ahead, CellKind::Apple);
            let mut actions = [Action::NoOp; NUM_PLAYERS];
            actions[0] = Action::MoveForward;
            let r = s.step(&actions).unwrap();
            assert_eq!(r[0], 0.0);
            assert_eq!(s.grid.get(ahead), CellKind::Apple);
        }
    }
}
