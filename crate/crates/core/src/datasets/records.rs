//! Serializable episode and counterfactual records.

use serde::{Deserialize, Serialize};

use crate::engine::{Action, GameKind, GameState, PlayerState, Snapshot, Trajectory};
use crate::error::MapError;
use crate::grid::Grid;
use crate::interventions::{Family, Intervention};
use crate::policies::MixSpec;

use super::DatasetError;

/// A grid plus players, with the grid stored as rows of cell characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: u32,
    pub rows: Vec<String>,
    pub players: Vec<PlayerState>,
}

impl From<&Snapshot> for SnapshotRecord {
    fn from(s: &Snapshot) -> Self {
        Self {
            t: s.t,
            rows: s.grid.to_rows(),
            players: s.players.clone(),
        }
    }
}

impl SnapshotRecord {
    pub fn of(state: &GameState) -> Self {
        Self::from(&Snapshot::of(state))
    }

    pub fn to_snapshot(&self) -> Result<Snapshot, MapError> {
        Ok(Snapshot {
            t: self.t,
            grid: Grid::from_rows(&self.rows)?,
            players: self.players.clone(),
        })
    }

    /// Rebuild a full state on `template`'s map and rules; the environment
    /// stream is taken from the template.
    pub fn to_state(&self, template: &GameState) -> Result<GameState, MapError> {
        Ok(self.to_snapshot()?.to_state(template, template.rng.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub game: GameKind,
    pub episode_index: u64,
    pub episode_seed: u64,
    pub map_seed: Option<u64>,
    pub population: MixSpec,
    pub epsilon: f64,
    pub horizon: u32,
    pub num_players: usize,
}

/// One observational episode: no central agent, no interventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub header: EpisodeHeader,
    /// `actions[s][i]`: action index of player `i` at step `s + 1`.
    pub actions: Vec<Vec<u8>>,
    pub rewards: Vec<Vec<f64>>,
    pub snapshots: Vec<SnapshotRecord>,
    pub returns: Vec<f64>,
}

impl EpisodeRecord {
    pub fn from_trajectory(header: EpisodeHeader, traj: &Trajectory) -> Self {
        Self {
            header,
            actions: traj
                .actions
                .iter()
                .map(|joint| joint.iter().map(|a| a.index() as u8).collect())
                .collect(),
            rewards: traj.rewards.clone(),
            snapshots: traj.snapshots.iter().map(SnapshotRecord::from).collect(),
            returns: traj.returns.clone(),
        }
    }

    pub fn action(&self, step: usize, player: usize) -> Option<Action> {
        self.actions.get(step)?.get(player).and_then(|&i| Action::from_index(i as usize))
    }

    pub fn snapshot_at(&self, t: u32) -> Option<&SnapshotRecord> {
        self.snapshots.iter().find(|s| s.t == t)
    }

    /// Bookkeeping checks: per-step rewards sum to the returns, and each
    /// snapshot's returns-so-far equal the reward prefix sums.
    pub fn check(&self) -> Result<(), DatasetError> {
        let k = self.header.num_players;
        let bad = |what: String| DatasetError::Inconsistent {
            episode: self.header.episode_index,
            what,
        };
        if self.returns.len() != k {
            return Err(bad(format!("{} returns for {k} players", self.returns.len())));
        }
        let mut prefix = vec![vec![0.0; k]];
        for step in &self.rewards {
            let mut next = prefix.last().cloned().unwrap_or_default();
            for (acc, r) in next.iter_mut().zip(step) {
                *acc += r;
            }
            prefix.push(next);
        }
        if !self.rewards.is_empty() && prefix.last() != Some(&self.returns) {
            return Err(bad("per-step rewards do not sum to the returns".into()));
        }
        for snap in &self.snapshots {
            let Some(expected) = prefix.get(snap.t as usize) else {
                if self.rewards.is_empty() {
                    continue;
                }
                return Err(bad(format!("snapshot at t = {} beyond recorded steps", snap.t)));
            };
            let stored: Vec<f64> = snap.players.iter().map(|p| p.return_so_far).collect();
            if &stored != expected {
                return Err(bad(format!("returns so far at t = {} disagree with rewards", snap.t)));
            }
        }
        Ok(())
    }
}

/// The shared prefix of one evaluation episode for one task family, with
/// every candidate intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualBase {
    pub header: EpisodeHeader,
    pub family: Family,
    pub intervene_t: u32,
    pub candidate_seed: u64,
    pub candidates: Vec<Intervention>,
    /// State at the intervention time, before any edit.
    pub state: SnapshotRecord,
}

/// Outcome of one completion after one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub episode_index: u64,
    pub family: Family,
    pub candidate: usize,
    pub completion: usize,
    /// Label of the player streams used for the completion.
    pub stream: String,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum CounterfactualLine {
    Base(CounterfactualBase),
    Outcome(OutcomeRecord),
    Skipped {
        episode_index: u64,
        family: Family,
        reason: String,
    },
}
