//! Everything needed to rebuild a game's initial state from an episode seed.

use serde::{Deserialize, Serialize};

use crate::cleanup::{cleanup_initial_state, CleanupParams};
use crate::engine::{GameKind, GameState};
use crate::harvest::{generate_harvest_map, harvest_initial_state, HarvestParams};
use crate::policies::{apply_identities, ScriptedPolicy};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub game: GameKind,
    pub horizon: u32,
    #[serde(default)]
    pub cleanup: CleanupParams,
    #[serde(default)]
    pub harvest: HarvestParams,
}

impl Scenario {
    pub fn new(game: GameKind) -> Self {
        Self {
            game,
            horizon: 1000,
            cleanup: CleanupParams::default(),
            harvest: HarvestParams::default(),
        }
    }

    /// Harvest maps are regenerated per episode; Cleanup has one map.
    pub fn map_seed(&self, episode_seed: u64) -> Option<u64> {
        match self.game {
            GameKind::Cleanup => None,
            GameKind::Harvest => Some(derive_seed(episode_seed, "harvest-map")),
        }
    }

    /// Initial state of the episode with `episode_seed`, identities taken
    /// from `policies`.
    pub fn initial_state(&self, episode_seed: u64, policies: &[ScriptedPolicy]) -> GameState {
        let mut state = match self.game {
            GameKind::Cleanup => cleanup_initial_state(&self.cleanup, self.horizon, episode_seed),
            GameKind::Harvest => {
                let map = generate_harvest_map(self.map_seed(episode_seed).unwrap_or_default());
                harvest_initial_state(&map, self.harvest.clone(), self.horizon, episode_seed)
            }
        };
        apply_identities(&mut state, policies);
        state
    }
}
