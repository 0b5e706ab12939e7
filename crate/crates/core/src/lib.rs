//! Gridworld social dilemmas (Cleanup and Harvest), scripted players,
//! state interventions and the datasets built from them.

pub mod cleanup;
pub mod datasets;
pub mod engine;
pub mod error;
pub mod grid;
pub mod harvest;
pub mod interventions;
pub mod policies;
pub mod rng;
pub mod scenario;

pub use engine::{Action, GameKind, GameState, NUM_PLAYERS};
pub use error::{EngineError, InterventionError, MapError};
pub use grid::{CellKind, GridPos};
pub use interventions::{apply, Family, Intervention};
pub use scenario::Scenario;
