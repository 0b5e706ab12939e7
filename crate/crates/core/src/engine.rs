//! Markov-game core shared by Cleanup and Harvest.
//!
//! A step resolves, in order: turns, beams (from pre-move positions), moves
//! with collision resolution, then the game-specific collection and spawning
//! phases. All environment randomness comes from the stream stored in the
//! state, so a state fully determines its own future given the players'
//! actions.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cleanup::{self, CleanupParams};
use crate::error::EngineError;
use crate::grid::{CellKind, CellMask, Grid, GridPos, Orientation};
use crate::harvest::{self, HarvestParams};
use crate::rng::{player_label, split_rng, StreamRng};

/// Players per game.
pub const NUM_PLAYERS: usize = 5;

/// Cells a beam reaches beyond the firing player.
pub const BEAM_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    Cleanup,
    Harvest,
}

impl GameKind {
    pub fn name(self) -> &'static str {
        match self {
            GameKind::Cleanup => "cleanup",
            GameKind::Harvest => "harvest",
        }
    }
}

impl std::str::FromStr for GameKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cleanup" => Ok(GameKind::Cleanup),
            "harvest" => Ok(GameKind::Harvest),
            other => Err(format!("unknown game {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    MoveBackward,
    StepLeft,
    StepRight,
    TurnLeft,
    TurnRight,
    FireFine,
    FireClean,
    NoOp,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::MoveForward,
        Action::MoveBackward,
        Action::StepLeft,
        Action::StepRight,
        Action::TurnLeft,
        Action::TurnRight,
        Action::FireFine,
        Action::FireClean,
        Action::NoOp,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn is_legal(self, game: GameKind) -> bool {
        !(game == GameKind::Harvest && self == Action::FireClean)
    }

    pub fn legal_actions(game: GameKind) -> Vec<Action> {
        Self::ALL.into_iter().filter(|a| a.is_legal(game)).collect()
    }

    /// Absolute direction of travel for movement actions.
    pub fn move_direction(self, facing: Orientation) -> Option<Orientation> {
        match self {
            Action::MoveForward => Some(facing),
            Action::MoveBackward => Some(facing.opposite()),
            Action::StepLeft => Some(facing.turn_left()),
            Action::StepRight => Some(facing.turn_right()),
            _ => None,
        }
    }

    /// Movement action that travels in `dir` when facing `facing`.
    pub fn for_direction(dir: Orientation, facing: Orientation) -> Action {
        if dir == facing {
            Action::MoveForward
        } else if dir == facing.opposite() {
            Action::MoveBackward
        } else if dir == facing.turn_left() {
            Action::StepLeft
        } else {
            Action::StepRight
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IdentityTag {
    Prosocial,
    Antisocial,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub id: usize,
    pub pos: GridPos,
    pub orientation: Orientation,
    pub last_action: Action,
    pub last_reward: f64,
    pub return_so_far: f64,
    pub identity: IdentityTag,
}

impl PlayerState {
    pub fn new(id: usize, pos: GridPos, orientation: Orientation, identity: IdentityTag) -> Self {
        Self {
            id,
            pos,
            orientation,
            last_action: Action::NoOp,
            last_reward: 0.0,
            return_so_far: 0.0,
            identity,
        }
    }
}

/// Axis-aligned rectangle of map cells, inclusive of its boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoomRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl RoomRect {
    pub fn contains(&self, p: GridPos) -> bool {
        p.row >= self.top
            && p.row < self.top + self.height
            && p.col >= self.left
            && p.col < self.left + self.width
    }
}

/// Static structure of a map that the cell contents alone do not capture.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    /// Cleanup: cells where waste accumulates.
    pub aquifer: CellMask,
    /// Cells where apples may (re)spawn.
    pub field: CellMask,
    /// Harvest corner rooms, empty for Cleanup.
    pub rooms: Vec<RoomRect>,
    /// Initial player positions, one per player.
    pub spawns: Vec<GridPos>,
}

impl Layout {
    /// Index of the room containing `p`.
    pub fn room_of(&self, p: GridPos) -> Option<usize> {
        self.rooms.iter().position(|r| r.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "lowercase")]
pub enum Rules {
    Cleanup(CleanupParams),
    Harvest(HarvestParams),
}

impl Rules {
    pub fn kind(&self) -> GameKind {
        match self {
            Rules::Cleanup(_) => GameKind::Cleanup,
            Rules::Harvest(_) => GameKind::Harvest,
        }
    }
}

/// Full Markov state of a game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub kind: GameKind,
    pub t: u32,
    pub horizon: u32,
    pub grid: Grid,
    pub players: Vec<PlayerState>,
    pub layout: Arc<Layout>,
    pub rules: Arc<Rules>,
    /// Environment stream: spawns, collision tie-breaks, collection failures.
    pub rng: StreamRng,
}

impl GameState {
    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn player_at(&self, p: GridPos) -> Option<usize> {
        self.players.iter().position(|pl| pl.pos == p)
    }

    pub fn returns_so_far(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.return_so_far).collect()
    }

    pub fn is_terminal(&self) -> bool {
        self.t >= self.horizon
    }

    /// Occupancy mask of player positions.
    pub fn occupancy(&self) -> Vec<bool> {
        let mut occ = vec![false; self.grid.len()];
        for p in &self.players {
            occ[self.grid.index(p.pos)] = true;
        }
        occ
    }

    /// Advance one timestep with the given joint action.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<f64>, EngineError> {
        if self.t >= self.horizon {
            return Err(EngineError::EpisodeOver { t: self.t });
        }
        if actions.len() != self.players.len() {
            return Err(EngineError::ActionCount {
                expected: self.players.len(),
                found: actions.len(),
            });
        }
        for (player, &action) in actions.iter().enumerate() {
            if !action.is_legal(self.kind) {
                return Err(EngineError::IllegalAction {
                    player,
                    action,
                    game: self.kind,
                });
            }
        }
        let rules = Arc::clone(&self.rules);
        let rewards = match rules.as_ref() {
            Rules::Cleanup(params) => cleanup::dynamics(self, actions, params),
            Rules::Harvest(params) => harvest::dynamics(self, actions, params),
        };
        for (player, (&action, &reward)) in self.players.iter_mut().zip(actions.iter().zip(&rewards)) {
            player.last_action = action;
            player.last_reward = reward;
            player.return_so_far += reward;
        }
        self.t += 1;
        Ok(rewards)
    }
}

/// Apply turn actions.
pub(crate) fn resolve_turns(state: &mut GameState, actions: &[Action]) {
    for (p, &a) in state.players.iter_mut().zip(actions) {
        match a {
            Action::TurnLeft => p.orientation = p.orientation.turn_left(),
            Action::TurnRight => p.orientation = p.orientation.turn_right(),
            _ => {}
        }
    }
}

/// Cells covered by a beam fired from `from` facing `dir`; stops at walls.
pub fn beam_cells(grid: &Grid, from: GridPos, dir: Orientation) -> Vec<GridPos> {
    let (dr, dc) = dir.delta();
    let mut cells = Vec::with_capacity(BEAM_LENGTH);
    let mut cur = from;
    for _ in 0..BEAM_LENGTH {
        match grid.offset(cur, dr, dc) {
            Some(next) if grid.get(next) != CellKind::Wall => {
                cells.push(next);
                cur = next;
            }
            _ => break,
        }
    }
    cells
}

/// First player, other than `shooter`, standing in the beam.
pub fn beam_target(state: &GameState, shooter: usize) -> Option<usize> {
    let p = &state.players[shooter];
    beam_cells(&state.grid, p.pos, p.orientation)
        .into_iter()
        .find_map(|c| state.player_at(c).filter(|&o| o != shooter))
}

/// Resolve fining / punishment beams; returns per-player rewards.
pub(crate) fn resolve_fines(state: &GameState, actions: &[Action], cost: f64, penalty: f64) -> Vec<f64> {
    let mut rewards = vec![0.0; state.players.len()];
    for (i, &a) in actions.iter().enumerate() {
        if a == Action::FireFine {
            rewards[i] += cost;
            if let Some(target) = beam_target(state, i) {
                rewards[target] += penalty;
            }
        }
    }
    rewards
}

/// Resolve simultaneous movement.
///
/// Moves into walls or off the map fail. When several players claim the same
/// cell a player already standing there keeps it, otherwise a uniformly
/// random claimant (environment stream) wins. Two players trying to swap
/// cells both stay put. Losers stay in place, which can cascade.
pub(crate) fn resolve_moves(state: &mut GameState, actions: &[Action]) {
    let n = state.players.len();
    let current: Vec<GridPos> = state.players.iter().map(|p| p.pos).collect();
    let mut dest = current.clone();
    for (i, &a) in actions.iter().enumerate() {
        let p = &state.players[i];
        if let Some(dir) = a.move_direction(p.orientation) {
            let (dr, dc) = dir.delta();
            if let Some(next) = state.grid.offset(p.pos, dr, dc) {
                if state.grid.get(next).is_walkable() {
                    dest[i] = next;
                }
            }
        }
    }
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in (i + 1)..n {
                if dest[i] != current[i]
                    && dest[j] != current[j]
                    && dest[i] == current[j]
                    && dest[j] == current[i]
                {
                    dest[i] = current[i];
                    dest[j] = current[j];
                    changed = true;
                }
            }
        }
        let mut claims: BTreeMap<GridPos, Vec<usize>> = BTreeMap::new();
        for (i, &d) in dest.iter().enumerate() {
            claims.entry(d).or_default().push(i);
        }
        for (cell, claimants) in claims {
            if claimants.len() < 2 {
                continue;
            }
            let keeper = claimants
                .iter()
                .copied()
                .find(|&i| current[i] == cell)
                .unwrap_or_else(|| claimants[state.rng.random_range(0..claimants.len())]);
            for i in claimants {
                if i != keeper {
                    dest[i] = current[i];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for (p, d) in state.players.iter_mut().zip(dest) {
        p.pos = d;
    }
}

/// Something that chooses a player's action from the full state.
pub trait Policy {
    fn act(&self, state: &GameState, player: usize, rng: &mut StreamRng) -> Action;
}

/// Symbolic state stored in episode records.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: u32,
    pub grid: Grid,
    pub players: Vec<PlayerState>,
}

impl Snapshot {
    pub fn of(state: &GameState) -> Self {
        Self {
            t: state.t,
            grid: state.grid.clone(),
            players: state.players.clone(),
        }
    }

    /// Rebuild a game state around this snapshot. The environment stream is
    /// not recorded, so the caller supplies one.
    pub fn to_state(&self, template: &GameState, rng: StreamRng) -> GameState {
        GameState {
            kind: template.kind,
            t: self.t,
            horizon: template.horizon,
            grid: self.grid.clone(),
            players: self.players.clone(),
            layout: Arc::clone(&template.layout),
            rules: Arc::clone(&template.rules),
            rng,
        }
    }
}

/// What a runner records besides actions and rewards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordOptions {
    /// Snapshot every `stride` steps (0 disables periodic snapshots).
    pub stride: u32,
    /// Additional timesteps that always get a snapshot.
    pub extra: Vec<u32>,
    /// Keep per-step actions and rewards.
    pub keep_steps: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            stride: 25,
            extra: Vec::new(),
            keep_steps: true,
        }
    }
}

impl RecordOptions {
    /// Only final returns.
    pub fn outcomes_only() -> Self {
        Self {
            stride: 0,
            extra: Vec::new(),
            keep_steps: false,
        }
    }

    fn wants_snapshot(&self, t: u32) -> bool {
        (self.stride > 0 && t % self.stride == 0) || self.extra.contains(&t)
    }
}

/// Recorded play of one episode (or an episode suffix).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `actions[s]` is the joint action taken at step `s + 1`.
    pub actions: Vec<Vec<Action>>,
    pub rewards: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    /// Returns accumulated over the whole episode.
    pub returns: Vec<f64>,
}

/// Drives an episode forward, one joint action at a time.
#[derive(Debug, Clone)]
pub struct EpisodeRunner<'a, P: Policy> {
    state: GameState,
    policies: &'a [P],
    streams: Vec<StreamRng>,
    opts: RecordOptions,
    actions: Vec<Vec<Action>>,
    rewards: Vec<Vec<f64>>,
    snapshots: Vec<Snapshot>,
}

impl<'a, P: Policy> EpisodeRunner<'a, P> {
    /// Start from `initial`, reseeding the environment stream and each
    /// player's stream from `seed`.
    pub fn new(mut initial: GameState, policies: &'a [P], seed: u64, opts: RecordOptions) -> Result<Self, EngineError> {
        initial.rng = split_rng(seed, "env");
        let streams = (0..initial.num_players())
            .map(|i| split_rng(seed, &player_label(i)))
            .collect();
        Self::resume(initial, policies, streams, opts)
    }

    /// Continue from an arbitrary state with explicit player streams.
    pub fn resume(
        state: GameState,
        policies: &'a [P],
        streams: Vec<StreamRng>,
        opts: RecordOptions,
    ) -> Result<Self, EngineError> {
        if policies.len() != state.num_players() || streams.len() != state.num_players() {
            return Err(EngineError::PolicyCount {
                expected: state.num_players(),
                found: policies.len().min(streams.len()),
            });
        }
        let mut runner = Self {
            state,
            policies,
            streams,
            opts,
            actions: Vec::new(),
            rewards: Vec::new(),
            snapshots: Vec::new(),
        };
        if runner.opts.wants_snapshot(runner.state.t) {
            runner.snapshots.push(Snapshot::of(&runner.state));
        }
        Ok(runner)
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut GameState {
        &mut self.state
    }

    pub fn streams(&self) -> &[StreamRng] {
        &self.streams
    }

    pub fn set_streams(&mut self, streams: Vec<StreamRng>) {
        assert_eq!(streams.len(), self.streams.len());
        self.streams = streams;
    }

    pub fn step(&mut self) -> Result<(), EngineError> {
        let joint: Vec<Action> = (0..self.state.num_players())
            .map(|i| self.policies[i].act(&self.state, i, &mut self.streams[i]))
            .collect();
        let rewards = self.state.step(&joint)?;
        if self.opts.keep_steps {
            self.actions.push(joint);
            self.rewards.push(rewards);
        }
        if self.opts.wants_snapshot(self.state.t) {
            self.snapshots.push(Snapshot::of(&self.state));
        }
        Ok(())
    }

    /// Step until the state reaches timestep `t` (or the horizon).
    pub fn run_until(&mut self, t: u32) -> Result<(), EngineError> {
        let stop = t.min(self.state.horizon);
        while self.state.t < stop {
            self.step()?;
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<(), EngineError> {
        self.run_until(self.state.horizon)
    }

    pub fn finish(self) -> Trajectory {
        Trajectory {
            returns: self.state.returns_so_far(),
            actions: self.actions,
            rewards: self.rewards,
            snapshots: self.snapshots,
        }
    }

    /// Final state together with the recorded trajectory.
    pub fn finish_with_state(self) -> (GameState, Trajectory) {
        let state = self.state.clone();
        (state, self.finish())
    }
}

/// Play a whole episode from `initial` with one policy per player.
pub fn run_episode<P: Policy>(
    initial: GameState,
    policies: &[P],
    seed: u64,
    opts: RecordOptions,
) -> Result<Trajectory, EngineError> {
    let mut runner = EpisodeRunner::new(initial, policies, seed, opts)?;
    runner.run_to_end()?;
    Ok(runner.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cleanup::cleanup_initial_state;
    use crate::harvest::{generate_harvest_map, harvest_initial_state};

    fn quiet_harvest() -> GameState {
        let map = generate_harvest_map(3);
        let params = HarvestParams::default();
        let mut s = harvest_initial_state(&map, params, 1000, 3);
        // Clear apples next to every player so a no-op step is inert.
        let positions: Vec<GridPos> = s.players.iter().map(|p| p.pos).collect();
        for pos in s.grid.positions().collect::<Vec<_>>() {
            if s.grid.get(pos) == CellKind::Apple && positions.iter().any(|p| p.chebyshev(pos) <= 3) {
                s.grid.set(pos, CellKind::EmptyField);
            }
        }
        s
    }

    #[test]
    fn noop_step_is_inert() {
        let mut s = quiet_harvest();
        let before: Vec<GridPos> = s.players.iter().map(|p| p.pos).collect();
        let rewards = s.step(&[Action::NoOp; NUM_PLAYERS]).unwrap();
        assert_eq!(rewards, vec![0.0; NUM_PLAYERS]);
        let after: Vec<GridPos> = s.players.iter().map(|p| p.pos).collect();
        assert_eq!(before, after);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn moving_onto_an_apple_collects_it() {
        let mut s = quiet_harvest();
        let p = s.players[0].clone();
        let (dr, dc) = p.orientation.delta();
        let ahead = s.grid.offset(p.pos, dr, dc).unwrap();
        s.grid.set(ahead, CellKind::Apple);
        if let Some(other) = s.player_at(ahead) {
            s.players[other].pos = GridPos::new(0, 0);
        }
        let mut actions = [Action::NoOp; NUM_PLAYERS];
        actions[0] = Action::MoveForward;
        let rewards = s.step(&actions).unwrap();
        assert_eq!(rewards[0], 1.0);
        assert_eq!(s.players[0].pos, ahead);
        assert_eq!(s.grid.get(ahead), CellKind::EmptyField);
    }

    #[test]
    fn fining_beam_charges_both_sides() {
        let mut s = cleanup_initial_state(&CleanupParams::default(), 1000, 5);
        let a = GridPos::new(8, 11);
        s.players[0].pos = a;
        s.players[0].orientation = Orientation::South;
        s.players[1].pos = GridPos::new(11, 11);
        for (i, p) in s.players.iter_mut().enumerate().skip(2) {
            p.pos = GridPos::new(1 + i, 20);
        }
        let mut actions = [Action::NoOp; NUM_PLAYERS];
        actions[0] = Action::FireFine;
        let rewards = s.step(&actions).unwrap();
        assert_eq!(rewards[0], -1.0);
        assert_eq!(rewards[1], -50.0);
        assert_eq!(&rewards[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn clean_beam_is_rejected_in_harvest() {
        let mut s = quiet_harvest();
        let mut actions = [Action::NoOp; NUM_PLAYERS];
        actions[3] = Action::FireClean;
        let err = s.step(&actions).unwrap_err();
        assert_eq!(
            err,
            EngineError::IllegalAction {
                player: 3,
                action: Action::FireClean,
                game: GameKind::Harvest
            }
        );
    }

    #[test]
    fn colliding_moves_leave_one_winner() {
        let mut s = cleanup_initial_state(&CleanupParams::default(), 1000, 5);
        s.players[0].pos = GridPos::new(5, 10);
        s.players[0].orientation = Orientation::East;
        s.players[1].pos = GridPos::new(5, 12);
        s.players[1].orientation = Orientation::West;
        for (i, p) in s.players.iter_mut().enumerate().skip(2) {
            p.pos = GridPos::new(12 + i, 11);
        }
        let mut actions = [Action::NoOp; NUM_PLAYERS];
        actions[0] = Action::MoveForward;
        actions[1] = Action::MoveForward;
        s.step(&actions).unwrap();
        let mid = GridPos::new(5, 11);
        let winners = s.players.iter().filter(|p| p.pos == mid).count();
        assert_eq!(winners, 1);
        let loser_home = s.players[0].pos == GridPos::new(5, 10) || s.players[1].pos == GridPos::new(5, 12);
        assert!(loser_home);
    }

    #[test]
    fn swaps_are_blocked() {
        let mut s = cleanup_initial_state(&CleanupParams::default(), 1000, 5);
        s.players[0].pos = GridPos::new(5, 10);
        s.players[0].orientation = Orientation::East;
        s.players[1].pos = GridPos::new(5, 11);
        s.players[1].orientation = Orientation::West;
        let mut actions = [Action::NoOp; NUM_PLAYERS];
        actions[0] = Action::MoveForward;
        actions[1] = Action::MoveForward;
        s.step(&actions).unwrap();
        assert_eq!(s.players[0].pos, GridPos::new(5, 10));
        assert_eq!(s.players[1].pos, GridPos::new(5, 11));
    }

    #[test]
    fn stepping_past_the_horizon_fails() {
        let mut s = cleanup_initial_state(&CleanupParams::default(), 2, 5);
        s.step(&[Action::NoOp; NUM_PLAYERS]).unwrap();
        s.step(&[Action::NoOp; NUM_PLAYERS]).unwrap();
        assert_eq!(
            s.step(&[Action::NoOp; NUM_PLAYERS]).unwrap_err(),
            EngineError::EpisodeOver { t: 2 }
        );
    }

    #[test]
    fn beam_stops_at_walls() {
        let s = cleanup_initial_state(&CleanupParams::default(), 10, 5);
        let cells = beam_cells(&s.grid, GridPos::new(2, 1), Orientation::North);
        assert_eq!(cells, vec![GridPos::new(1, 1)]);
        let cells = beam_cells(&s.grid, GridPos::new(9, 12), Orientation::East);
        assert_eq!(cells.len(), BEAM_LENGTH);
    }
}
