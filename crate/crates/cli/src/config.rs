//! Run configuration: one TOML file, hashed into every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use oboe_agents::outcomes::ConstantMode;
use oboe_core::cleanup::CleanupParams;
use oboe_core::datasets::{sha256_hex, FeatureConfig};
use oboe_core::harvest::HarvestParams;
use oboe_core::interventions::{intervene_t, Family};
use oboe_core::policies::MixSpec;
use oboe_core::{GameKind, Scenario};
use oboe_models::{Aggregation, TrainerConfig};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    /// Relative paths resolve against the working directory.
    pub out_dir: PathBuf,
    pub games: Vec<GameKind>,
    /// Worker threads for episode-level work (0: one per core). Does not
    /// affect any artifact.
    #[serde(default)]
    pub workers: usize,
    pub features: FeatureConfig,
    pub counterfactual: CounterfactualConfig,
    pub report: ReportConfig,
    pub cleanup: GameConfig,
    pub harvest: GameConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualConfig {
    pub completions: usize,
    /// Completion held out to evaluate every agent; CV estimates on the
    /// others.
    pub eval_completion: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub constant_mode: ConstantMode,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub horizon: u32,
    /// Episode `i` uses population `i mod len`.
    pub populations: Vec<MixSpec>,
    pub epsilon: f64,
    pub observational_episodes: usize,
    pub evaluation_episodes: usize,
    pub snapshot_stride: u32,
    pub samples_per_episode: usize,
    pub validation_fraction: f64,
    pub families: Vec<Family>,
    /// Non-null candidates per Harvest family.
    #[serde(default)]
    pub harvest_candidates: usize,
    #[serde(default)]
    pub cleanup_params: Option<CleanupParams>,
    #[serde(default)]
    pub harvest_params: Option<HarvestParams>,
    pub mlp: MlpConfig,
    pub rfm: RfmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub widths: Vec<usize>,
    pub trainer: TrainerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfmConfig {
    pub edge_widths: Vec<usize>,
    pub node_widths: Vec<usize>,
    pub aggregation: Aggregation,
    pub trainer: TrainerConfig,
}

/// The checked-in example configuration; its values are the defaults.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/desk.toml");

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_toml(DEFAULT_CONFIG, &[]).expect("the bundled config is valid")
    }
}

fn hash_of<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("config serializes").as_bytes())
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parse TOML, apply `key.path=value` overrides, and validate.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn game(&self, game: GameKind) -> &GameConfig {
        match game {
            GameKind::Cleanup => &self.cleanup,
            GameKind::Harvest => &self.harvest,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.counterfactual.completions < 2 || self.counterfactual.eval_completion >= self.counterfactual.completions {
            return bad(format!(
                "counterfactual: need at least 2 completions and eval_completion < completions, got {} and {}",
                self.counterfactual.completions, self.counterfactual.eval_completion
            ));
        }
        for game in [GameKind::Cleanup, GameKind::Harvest] {
            let g = self.game(game);
            let name = game.name();
            if g.horizon <= intervene_t(game) {
                return bad(format!("{name}.horizon {} must exceed the intervention time {}", g.horizon, intervene_t(game)));
            }
            if g.populations.is_empty() {
                return bad(format!("{name}.populations is empty"));
            }
            for mix in &g.populations {
                oboe_core::policies::make_population(game, mix, g.epsilon, 0).map_err(|e| CliError::Config(format!("{name}.populations: {e}")))?;
            }
            if let Some(f) = g.families.iter().find(|f| f.game() != game) {
                return bad(format!("{name}.families: {} belongs to the other game", f.name()));
            }
            if game == GameKind::Harvest && g.harvest_candidates == 0 && !g.families.is_empty() {
                return bad("harvest.harvest_candidates must be positive".into());
            }
            if !(0.0..1.0).contains(&g.validation_fraction) || g.observational_episodes < 2 && self.games.contains(&game) {
                return bad(format!("{name}: need validation_fraction in [0, 1) and at least 2 observational episodes"));
            }
            if g.snapshot_stride == 0 || g.samples_per_episode == 0 {
                return bad(format!("{name}: snapshot_stride and samples_per_episode must be positive"));
            }
            if g.mlp.widths.last() != Some(&oboe_core::NUM_PLAYERS) {
                return bad(format!("{name}.mlp.widths must end with {}", oboe_core::NUM_PLAYERS));
            }
            if g.rfm.edge_widths.is_empty() || g.rfm.node_widths.last() != Some(&1) {
                return bad(format!("{name}.rfm: edge_widths must be nonempty and node_widths must end with 1"));
            }
            for (arch, t) in [("mlp", &g.mlp.trainer), ("rfm", &g.rfm.trainer)] {
                if t.batch_size == 0 || t.eval_every == 0 || !(t.learning_rate > 0.0) {
                    return bad(format!("{name}.{arch}.trainer: batch_size, eval_every and learning_rate must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn scenario(&self, game: GameKind) -> Scenario {
        let g = self.game(game);
        let mut s = Scenario::new(game);
        s.horizon = g.horizon;
        if let Some(p) = &g.cleanup_params {
            s.cleanup = p.clone();
        }
        if let Some(p) = &g.harvest_params {
            s.harvest = p.clone();
        }
        s
    }

    /// The configuration with settings that cannot change any artifact
    /// (output directory, worker count, game order) reset.
    pub fn normalized(&self) -> RunConfig {
        let mut c = self.clone();
        c.out_dir = PathBuf::from(".");
        c.workers = 0;
        c.games.sort_by_key(|g| g.name());
        c
    }

    pub fn hash(&self) -> String {
        hash_of(&self.normalized())
    }

    /// Everything the observational dataset of `game` depends on.
    pub fn collect_hash(&self, game: GameKind) -> String {
        let g = self.game(game);
        hash_of(&(
            "collect",
            self.version,
            self.seed,
            game,
            self.scenario(game),
            &g.populations,
            g.epsilon,
            g.observational_episodes,
            g.snapshot_stride,
        ))
    }

    pub fn train_hash(&self, game: GameKind) -> String {
        let g = self.game(game);
        hash_of(&(
            "train",
            self.collect_hash(game),
            self.features,
            g.samples_per_episode,
            g.validation_fraction,
            &g.mlp,
            &g.rfm,
        ))
    }

    pub fn counterfactual_hash(&self, game: GameKind) -> String {
        let g = self.game(game);
        hash_of(&(
            "counterfactual",
            self.version,
            self.seed,
            game,
            self.scenario(game),
            &g.populations,
            g.epsilon,
            g.evaluation_episodes,
            &g.families,
            g.harvest_candidates,
            self.counterfactual.completions,
        ))
    }

    pub fn report_hash(&self) -> String {
        let mut games = self.games.clone();
        games.sort_by_key(|g| g.name());
        let parts: Vec<(String, String)> = games
            .iter()
            .map(|&g| (self.train_hash(g), self.counterfactual_hash(g)))
            .collect();
        hash_of(&("report", parts, &self.counterfactual, &self.report))
    }
}

/// Set `a.b.c=value` in a TOML table. The value is parsed as TOML and taken
/// as a bare string when that fails.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            if !cur.contains_key(*part) {
                return Err(CliError::Config(format!("override {key:?}: no such setting")));
            }
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        cur = match cur.get_mut(*part) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(CliError::Config(format!("override {key:?}: no such section {part:?}"))),
        };
    }
    unreachable!("split yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn overrides_reach_nested_settings() {
        let c = RunConfig::from_toml(DEFAULT_CONFIG, &["cleanup.observational_episodes=7".into(), "cleanup.rfm.trainer.learning_rate=0.01".into()]).unwrap();
        assert_eq!(c.cleanup.observational_episodes, 7);
        assert_eq!(c.cleanup.rfm.trainer.learning_rate, 0.01);
        assert_ne!(c.hash(), RunConfig::default().hash());
        assert_eq!(c.counterfactual_hash(GameKind::Cleanup), RunConfig::default().counterfactual_hash(GameKind::Cleanup));
        assert!(RunConfig::from_toml(DEFAULT_CONFIG, &["cleanup.nope=1".into()]).is_err());
        assert!(RunConfig::from_toml(DEFAULT_CONFIG, &["seed".into()]).is_err());
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        for o in ["cleanup.horizon=300", "counterfactual.eval_completion=5", "harvest.families=[\"move_waste\"]", "version=9"] {
            assert!(matches!(RunConfig::from_toml(DEFAULT_CONFIG, &[o.into()]), Err(CliError::Config(_))), "{o}");
        }
    }

    #[test]
    fn output_location_does_not_change_the_hash() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.workers = 3;
        assert_eq!(a.hash(), b.hash());
    }
}
