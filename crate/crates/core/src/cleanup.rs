//! Cleanup: a public goods game.
//!
//! Waste accumulates in the aquifer (left side of the map) and suppresses
//! apple growth in the field (right side). The apple spawn probability per
//! empty field cell falls linearly with the aquifer's waste density and is
//! zero at or beyond the saturation density.
//!
//! Map files use the [`CellKind`] legend plus two layout markers:
//! `F` is empty field inside the apple field and `P` is a player spawn point
//! on ordinary floor. Every water cell (`~` or `x`) belongs to the aquifer.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    resolve_fines, resolve_moves, resolve_turns, Action, GameKind, GameState, IdentityTag, Layout, PlayerState,
    Rules, NUM_PLAYERS,
};
use crate::error::MapError;
use crate::grid::{CellKind, CellMask, Grid, GridPos, Orientation};
use crate::rng::split_rng;

pub const CLEANUP_HEIGHT: usize = 18;
pub const CLEANUP_WIDTH: usize = 25;

/// Timestep at which Cleanup interventions happen.
pub const CLEANUP_INTERVENE_T: u32 = 325;

/// The standard map.
pub const STANDARD_MAP: &str = include_str!("../maps/cleanup_standard.txt");

/// Fixed destinations for player-moving interventions.
pub const MOVE_TARGETS: [GridPos; 7] = [
    GridPos::new(1, 1),
    GridPos::new(1, 23),
    GridPos::new(16, 1),
    GridPos::new(16, 23),
    GridPos::new(9, 1),
    GridPos::new(9, 9),
    GridPos::new(9, 23),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanupParams {
    /// Per clean aquifer cell, per step.
    pub waste_spawn_prob: f64,
    /// Apple spawn probability per empty field cell at zero waste.
    pub apple_spawn_max: f64,
    /// Waste density at which apples stop spawning.
    pub saturation_density: f64,
    pub fine_cost: f64,
    pub fine_penalty: f64,
    pub apple_reward: f64,
}

impl Default for CleanupParams {
    fn default() -> Self {
        Self {
            waste_spawn_prob: 0.005,
            apple_spawn_max: 0.05,
            saturation_density: 0.4,
            fine_cost: -1.0,
            fine_penalty: -50.0,
            apple_reward: 1.0,
        }
    }
}

impl CleanupParams {
    /// `max(0, p_max * (1 - density / d_sat))`.
    pub fn apple_spawn_probability(&self, waste_density: f64) -> f64 {
        if self.saturation_density <= 0.0 {
            return 0.0;
        }
        (self.apple_spawn_max * (1.0 - waste_density / self.saturation_density)).max(0.0)
    }

    /// Smallest waste count strictly above saturation for an aquifer of `cells`.
    pub fn initial_waste_count(&self, cells: usize) -> usize {
        let at_saturation = (self.saturation_density * cells as f64).floor() as usize;
        (at_saturation + 1).min(cells)
    }
}

/// Parse a Cleanup map file into cell contents and layout.
pub fn parse_map(text: &str) -> Result<(Grid, Layout), MapError> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    let height = rows.len();
    let width = rows.first().map(|r| r.chars().count()).unwrap_or(0);
    if height != CLEANUP_HEIGHT || width != CLEANUP_WIDTH {
        return Err(MapError::WrongSize {
            height,
            width,
            expected_height: CLEANUP_HEIGHT,
            expected_width: CLEANUP_WIDTH,
        });
    }
    let mut aquifer = CellMask::new(height, width);
    let mut field = CellMask::new(height, width);
    let mut spawns = Vec::new();
    let mut plain = Vec::with_capacity(height);
    for (r, row) in rows.iter().enumerate() {
        let mut out = String::with_capacity(width);
        for (c, ch) in row.chars().enumerate() {
            let pos = GridPos::new(r, c);
            let ch = match ch {
                'F' => {
                    field.set(pos, true);
                    '.'
                }
                'P' => {
                    spawns.push(pos);
                    '.'
                }
                'A' => {
                    field.set(pos, true);
                    'A'
                }
                '~' | 'x' => {
                    aquifer.set(pos, true);
                    ch
                }
                other => other,
            };
            out.push(ch);
        }
        plain.push(out);
    }
    let grid = Grid::from_rows(&plain)?;
    if spawns.len() != NUM_PLAYERS {
        return Err(MapError::SpawnCount {
            found: spawns.len(),
            expected: NUM_PLAYERS,
        });
    }
    for target in MOVE_TARGETS {
        if !grid.get(target).is_walkable() {
            return Err(MapError::Invalid(format!("move target {target} is a wall")));
        }
    }
    Ok((
        grid,
        Layout {
            aquifer,
            field,
            rooms: Vec::new(),
            spawns,
        },
    ))
}

pub fn standard_map() -> (Grid, Layout) {
    parse_map(STANDARD_MAP).expect("bundled Cleanup map is valid")
}

/// Fraction of aquifer cells holding waste.
pub fn waste_density(state: &GameState) -> f64 {
    let cells = state.layout.aquifer.count();
    if cells == 0 {
        return 0.0;
    }
    let dirty = state
        .layout
        .aquifer
        .positions()
        .filter(|&p| state.grid.get(p) == CellKind::DirtyWater)
        .count();
    dirty as f64 / cells as f64
}

/// Episode start: no apples, waste just beyond saturation, players at the
/// map's spawn points with untagged identities.
pub fn cleanup_initial_state(params: &CleanupParams, horizon: u32, seed: u64) -> GameState {
    let (mut grid, layout) = standard_map();
    let mut rng = split_rng(seed, "cleanup-init");
    let mut aquifer: Vec<GridPos> = layout.aquifer.positions().collect();
    let n_waste = params.initial_waste_count(aquifer.len());
    for i in 0..n_waste {
        let j = rng.random_range(i..aquifer.len());
        aquifer.swap(i, j);
        grid.set(aquifer[i], CellKind::DirtyWater);
    }
    for pos in grid.positions().collect::<Vec<_>>() {
        if grid.get(pos) == CellKind::Apple {
            grid.set(pos, CellKind::EmptyField);
        }
    }
    let players = layout
        .spawns
        .iter()
        .enumerate()
        .map(|(i, &pos)| {
            let facing = Orientation::from_index(rng.random_range(0..4));
            PlayerState::new(i, pos, facing, IdentityTag::None)
        })
        .collect();
    GameState {
        kind: GameKind::Cleanup,
        t: 0,
        horizon,
        grid,
        players,
        layout: Arc::new(layout),
        rules: Arc::new(Rules::Cleanup(params.clone())),
        rng: split_rng(seed, "env"),
    }
}

/// One Cleanup transition. Beams act on pre-move positions, then players
/// move and collect, then apples spawn (using the post-cleaning waste
/// density) and finally waste appears on clean aquifer cells.
pub fn dynamics(state: &mut GameState, actions: &[Action], params: &CleanupParams) -> Vec<f64> {
    resolve_turns(state, actions);
    let mut rewards = resolve_fines(state, actions, params.fine_cost, params.fine_penalty);

    for (i, &a) in actions.iter().enumerate() {
        if a == Action::FireClean {
            let p = &state.players[i];
            for cell in crate::engine::beam_cells(&state.grid, p.pos, p.orientation) {
                if state.layout.aquifer.get(cell) && state.grid.get(cell) == CellKind::DirtyWater {
                    state.grid.set(cell, CellKind::CleanWater);
                }
            }
        }
    }

    resolve_moves(state, actions);

    for (i, p) in state.players.iter().enumerate() {
        if state.grid.get(p.pos) == CellKind::Apple {
            state.grid.set(p.pos, CellKind::EmptyField);
            rewards[i] += params.apple_reward;
        }
    }

    let p_apple = params.apple_spawn_probability(waste_density(state));
    let occupied = state.occupancy();
    let layout = Arc::clone(&state.layout);
    if p_apple > 0.0 {
        for pos in layout.field.positions() {
            let idx = state.grid.index(pos);
            if !occupied[idx] && state.grid.get(pos) == CellKind::EmptyField && state.rng.random::<f64>() < p_apple {
                state.grid.set(pos, CellKind::Apple);
            }
        }
    }
    if params.waste_spawn_prob > 0.0 {
        for pos in layout.aquifer.positions() {
            if state.grid.get(pos) == CellKind::CleanWater && state.rng.random::<f64>() < params.waste_spawn_prob {
                state.grid.set(pos, CellKind::DirtyWater);
            }
        }
    }
    rewards
}
