use thiserror::Error;

use crate::engine::{Action, GameKind};
use crate::grid::GridPos;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map has no rows")]
    Empty,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("unknown cell character {ch:?} at ({row}, {col})")]
    UnknownCell { row: usize, col: usize, ch: char },
    #[error("map is {height}x{width}, expected {expected_height}x{expected_width}")]
    WrongSize {
        height: usize,
        width: usize,
        expected_height: usize,
        expected_width: usize,
    },
    #[error("map declares {found} player spawn points, expected {expected}")]
    SpawnCount { found: usize, expected: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("player {player} chose {action:?}, which is not legal in {game:?}")]
    IllegalAction {
        player: usize,
        action: Action,
        game: GameKind,
    },
    #[error("expected {expected} joint actions, got {found}")]
    ActionCount { expected: usize, found: usize },
    #[error("episode already finished at t = {t}")]
    EpisodeOver { t: u32 },
    #[error("expected {expected} policies, got {found}")]
    PolicyCount { expected: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterventionError {
    #[error("cannot add a wall at {cell}: cell holds a player")]
    WallOverPlayer { cell: GridPos },
    #[error("cannot add a wall at {cell}: cell holds an apple")]
    WallOverApple { cell: GridPos },
    #[error("cannot add a wall at {cell}: cell is already a wall")]
    WallOverWall { cell: GridPos },
    #[error("cannot remove a wall at {cell}: cell is not a wall")]
    NotAWall { cell: GridPos },
    #[error("cannot move player {player} to {cell}: cell is a wall")]
    MoveIntoWall { player: usize, cell: GridPos },
    #[error("cannot move player {player} to {cell}: cell is occupied by player {other}")]
    MoveIntoPlayer { player: usize, other: usize, cell: GridPos },
    #[error("cell {cell} lies outside the map")]
    OutOfBounds { cell: GridPos },
    #[error("no player with id {player}")]
    UnknownPlayer { player: usize },
    #[error("{family} interventions do not apply to {game:?}")]
    WrongGame { family: &'static str, game: GameKind },
    #[error("intervention expected at t = {expected}, state is at t = {found}")]
    WrongTime { expected: u32, found: u32 },
    #[error("only {found} of {wanted} {family} candidates could be generated")]
    Shortfall {
        family: &'static str,
        wanted: usize,
        found: usize,
        partial: Vec<crate::interventions::Intervention>,
    },
}
