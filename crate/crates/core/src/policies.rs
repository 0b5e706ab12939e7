//! Scripted, stochastic, memoryless player policies.
//!
//! These stand in for trained players. Each decision is a function of the
//! full game state and the player's own random stream only, so the joint
//! system stays Markov.
//!
//! Cleanup players choose per step between tending the aquifer and
//! collecting apples. The cleaning probability is
//! `prosociality * min(1, waste_density / saturation)`, nudged by
//! `stickiness` toward whatever the player's current region is for.
//! Harvest players go for the nearest apple, in "sustainable" steps only for
//! apples with at least three neighbours, and fine intruders in their home
//! room.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cleanup::waste_density;
use crate::engine::{beam_cells, beam_target, Action, GameKind, GameState, IdentityTag, Policy, Rules, NUM_PLAYERS};
use crate::grid::{CellKind, GridPos, Orientation};
use crate::harvest::apples_within;
use crate::rng::{player_label, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    CleanupScripted,
    HarvestScripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub kind: PolicyKind,
    pub prosociality: f64,
    pub sustainability: f64,
    pub epsilon: f64,
    /// Scales the Harvest fining probability `1 - prosociality`.
    pub punish_scale: f64,
    /// Cleanup region bias in [0, 1].
    pub stickiness: f64,
    /// Replace every random choice by its most likely outcome.
    pub deterministic: bool,
    pub stream_label: String,
}

impl ScriptedPolicy {
    pub fn cleanup(player: usize, prosociality: f64, epsilon: f64) -> Self {
        Self {
            kind: PolicyKind::CleanupScripted,
            prosociality,
            sustainability: 0.0,
            epsilon,
            punish_scale: 0.0,
            stickiness: 0.5,
            deterministic: false,
            stream_label: player_label(player),
        }
    }

    pub fn harvest(player: usize, prosociality: f64, sustainability: f64, epsilon: f64) -> Self {
        Self {
            kind: PolicyKind::HarvestScripted,
            prosociality,
            sustainability,
            epsilon,
            punish_scale: 0.5,
            stickiness: 0.0,
            deterministic: false,
            stream_label: player_label(player),
        }
    }

    pub fn game(&self) -> GameKind {
        match self.kind {
            PolicyKind::CleanupScripted => GameKind::Cleanup,
            PolicyKind::HarvestScripted => GameKind::Harvest,
        }
    }

    pub fn identity(&self) -> IdentityTag {
        match self.kind {
            PolicyKind::CleanupScripted if self.prosociality >= 0.5 => IdentityTag::Prosocial,
            PolicyKind::CleanupScripted => IdentityTag::Antisocial,
            PolicyKind::HarvestScripted => IdentityTag::None,
        }
    }

    /// Cleaning appetite before the region bias.
    pub fn clean_drive(&self, state: &GameState) -> f64 {
        let saturation = match state.rules.as_ref() {
            Rules::Cleanup(p) => p.saturation_density,
            Rules::Harvest(_) => return 0.0,
        };
        let w = waste_density(state);
        let ratio = if saturation > 0.0 { (w / saturation).min(1.0) } else { 1.0 };
        self.prosociality * ratio
    }

    fn chance(&self, rng: &mut StreamRng, p: f64) -> bool {
        if self.deterministic {
            p >= 0.5
        } else {
            p > 0.0 && rng.random::<f64>() < p
        }
    }

    fn act_cleanup(&self, state: &GameState, me: usize, rng: &mut StreamRng) -> Action {
        let pos = state.players[me].pos;
        let sigma = self.clean_drive(state);
        let p_clean = if sigma <= 0.0 {
            0.0
        } else if state.layout.aquifer.get(pos) {
            sigma + self.stickiness * (1.0 - sigma)
        } else if state.layout.field.get(pos) {
            sigma * (1.0 - self.stickiness)
        } else {
            sigma
        };
        if self.chance(rng, p_clean) {
            let waste = nearest(state, pos, |p| {
                state.layout.aquifer.get(p) && state.grid.get(p) == CellKind::DirtyWater
            });
            if let Some(target) = waste {
                return self.aim_and_fire(state, me, target, Action::FireClean, rng);
            }
        }
        let apple = nearest(state, pos, |p| p != pos && state.grid.get(p) == CellKind::Apple);
        match apple {
            Some(target) => self.step_toward(state, me, target, rng),
            None if !state.layout.field.get(pos) => {
                match nearest(state, pos, |p| state.layout.field.get(p)) {
                    Some(target) => self.step_toward(state, me, target, rng),
                    None => Action::NoOp,
                }
            }
            None => self.wander(state, rng),
        }
    }

    fn act_harvest(&self, state: &GameState, me: usize, rng: &mut StreamRng) -> Action {
        let pos = state.players[me].pos;
        let layout = &state.layout;
        if let Some(home) = layout.spawns.get(me).and_then(|&s| layout.room_of(s)) {
            if let Some(target) = beam_target(state, me) {
                let intruder = layout.rooms[home].contains(state.players[target].pos);
                if intruder && self.chance(rng, self.punish_scale * (1.0 - self.prosociality)) {
                    return Action::FireFine;
                }
            }
        }
        let radius = match state.rules.as_ref() {
            Rules::Harvest(p) => p.respawn_radius,
            Rules::Cleanup(_) => 2,
        };
        let sustainable = self.chance(rng, self.sustainability);
        let target = nearest(state, pos, |p| {
            p != pos
                && state.grid.get(p) == CellKind::Apple
                && (!sustainable || apples_within(&state.grid, p, radius) >= 3)
        });
        match target {
            Some(t) => self.step_toward(state, me, t, rng),
            None => self.wander(state, rng),
        }
    }

    /// Fire when `target` sits in the beam, turn toward it when it is in
    /// line, otherwise approach.
    fn aim_and_fire(&self, state: &GameState, me: usize, target: GridPos, fire: Action, rng: &mut StreamRng) -> Action {
        let p = &state.players[me];
        for dir in Orientation::ALL {
            if beam_cells(&state.grid, p.pos, dir).contains(&target) {
                return if dir == p.orientation {
                    fire
                } else if dir == p.orientation.turn_left() {
                    Action::TurnLeft
                } else {
                    Action::TurnRight
                };
            }
        }
        self.step_toward(state, me, target, rng)
    }

    /// Greedy move that shortens the Manhattan distance to `target`; random
    /// tie-break, random walkable move when blocked.
    fn step_toward(&self, state: &GameState, me: usize, target: GridPos, rng: &mut StreamRng) -> Action {
        let p = &state.players[me];
        let here = p.pos.manhattan(target);
        let improving: Vec<Orientation> = Orientation::ALL
            .into_iter()
            .filter(|&d| {
                let (dr, dc) = d.delta();
                state
                    .grid
                    .offset(p.pos, dr, dc)
                    .is_some_and(|n| state.grid.get(n).is_walkable() && n.manhattan(target) < here)
            })
            .collect();
        if improving.is_empty() {
            return self.wander(state, rng);
        }
        let dir = if self.deterministic {
            improving[0]
        } else {
            improving[rng.random_range(0..improving.len())]
        };
        Action::for_direction(dir, p.orientation)
    }

    fn wander(&self, state: &GameState, rng: &mut StreamRng) -> Action {
        if self.deterministic {
            return Action::NoOp;
        }
        let _ = state;
        const MOVES: [Action; 4] = [Action::MoveForward, Action::MoveBackward, Action::StepLeft, Action::StepRight];
        MOVES[rng.random_range(0..MOVES.len())]
    }
}

/// Closest cell (Manhattan) satisfying `pred`, first in row-major order on ties.
fn nearest(state: &GameState, from: GridPos, pred: impl Fn(GridPos) -> bool) -> Option<GridPos> {
    let mut best: Option<(usize, GridPos)> = None;
    for p in state.grid.positions() {
        if pred(p) {
            let d = p.manhattan(from);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
    }
    best.map(|(_, p)| p)
}

impl Policy for ScriptedPolicy {
    fn act(&self, state: &GameState, player: usize, rng: &mut StreamRng) -> Action {
        if !self.deterministic && self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            let legal = Action::legal_actions(state.kind);
            return legal[rng.random_range(0..legal.len())];
        }
        match self.kind {
            PolicyKind::CleanupScripted => self.act_cleanup(state, player, rng),
            PolicyKind::HarvestScripted => self.act_harvest(state, player, rng),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("Cleanup populations mix prosocial and antisocial players 1:4, 2:3, 3:2 or 4:1; got {prosocial}:{antisocial}")]
    BadRatio { prosocial: usize, antisocial: usize },
    #[error("{0:?} population requested for a {1:?} game")]
    WrongGame(MixSpec, GameKind),
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

/// How a five-player population is composed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MixSpec {
    /// `prosocial` players with prosociality 1, the rest with 0.
    CleanupRatio { prosocial: usize },
    /// Every player shares the same parameters.
    Harvest { prosociality: f64, sustainability: f64 },
}

impl MixSpec {
    /// The four Cleanup ratios 1:4, 2:3, 3:2 and 4:1.
    pub fn cleanup_ratios() -> Vec<MixSpec> {
        (1..=4).map(|prosocial| MixSpec::CleanupRatio { prosocial }).collect()
    }
}

/// Five policies for `game`; the seed shuffles which players get which role.
pub fn make_population(game: GameKind, mix: &MixSpec, epsilon: f64, seed: u64) -> Result<Vec<ScriptedPolicy>, PolicyError> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(PolicyError::OutOfRange {
            name: "epsilon",
            value: epsilon,
        });
    }
    match (game, mix) {
        (GameKind::Cleanup, MixSpec::CleanupRatio { prosocial }) => {
            if !(1..NUM_PLAYERS).contains(prosocial) {
                return Err(PolicyError::BadRatio {
                    prosocial: *prosocial,
                    antisocial: NUM_PLAYERS.saturating_sub(*prosocial),
                });
            }
            let mut rng = crate::rng::split_rng(seed, "population");
            let chosen = sample(&mut rng, NUM_PLAYERS, *prosocial).into_vec();
            Ok((0..NUM_PLAYERS)
                .map(|i| ScriptedPolicy::cleanup(i, if chosen.contains(&i) { 1.0 } else { 0.0 }, epsilon))
                .collect())
        }
        (
            GameKind::Harvest,
            MixSpec::Harvest {
                prosociality,
                sustainability,
            },
        ) => {
            for (name, value) in [("prosociality", *prosociality), ("sustainability", *sustainability)] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(PolicyError::OutOfRange { name, value });
                }
            }
            Ok((0..NUM_PLAYERS)
                .map(|i| ScriptedPolicy::harvest(i, *prosociality, *sustainability, epsilon))
                .collect())
        }
        (game, mix) => Err(PolicyError::WrongGame(mix.clone(), game)),
    }
}

/// Copy each policy's identity tag onto the matching player.
pub fn apply_identities(state: &mut GameState, policies: &[ScriptedPolicy]) {
    for (p, pol) in state.players.iter_mut().zip(policies) {
        p.identity = pol.identity();
    }
}
