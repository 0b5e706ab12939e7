//! The four stages. Each writes into its own directory with a manifest
//! carrying the stage's configuration hash; rerunning a stage whose
//! manifest hash matches is a no-op.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use oboe_agents::counterfactual::{generate_episode, CounterfactualPlan};
use oboe_core::datasets::{
    make_training_set, read_sharded, sha256_hex, write_sharded, CounterfactualLine, EpisodeHeader, EpisodeRecord, FlatLayout, Manifest, SCHEMA_VERSION,
    MANIFEST_FILE,
};
use oboe_core::engine::{run_episode, RecordOptions};
use oboe_core::interventions::intervene_t;
use oboe_core::policies::make_population;
use oboe_core::rng::derive_seed;
use oboe_core::GameKind;
use oboe_models::{save_checkpoint, train, Architecture, Checkpoint, MlpModel, Model, Predictor, RfmModel};

use crate::config::RunConfig;
use crate::report;
use crate::{CliError, RunPaths};

const OBSERVATIONAL_SHARD: usize = 50;
const COUNTERFACTUAL_SHARD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Collect,
    Train,
    Counterfactual,
    Report,
    All,
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "collect" => Stage::Collect,
            "train" => Stage::Train,
            "counterfactual" => Stage::Counterfactual,
            "report" => Stage::Report,
            "all" => Stage::All,
            _ => return Err(format!("unknown stage {s:?}")),
        })
    }
}

/// Run one stage (or all of them, in order) for every configured game.
pub fn run_stage(config: &RunConfig, stage: Stage) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
    let paths = RunPaths::new(&config.out_dir);
    fs::create_dir_all(&paths.root).map_err(|e| CliError::io(&paths.root, e))?;
    let resolved = paths.root.join("run_config.toml");
    let text = format!(
        "# Resolved configuration, hash {}. Output directory and worker count are reset.\n{}",
        config.hash(),
        config.normalized().to_toml()
    );
    fs::write(&resolved, text).map_err(|e| CliError::io(&resolved, e))?;
    pool.install(|| {
        let stages: &[Stage] = match stage {
            Stage::All => &[Stage::Collect, Stage::Train, Stage::Counterfactual, Stage::Report],
            Stage::Collect => &[Stage::Collect],
            Stage::Train => &[Stage::Train],
            Stage::Counterfactual => &[Stage::Counterfactual],
            Stage::Report => &[Stage::Report],
        };
        for &s in stages {
            match s {
                Stage::Report => timed(&paths, "report", || report::stage_report(config, &paths))?,
                _ => {
                    for &game in &config.games {
                        let label = format!("{}/{}", stage_name(s), game.name());
                        timed(&paths, &label, || match s {
                            Stage::Collect => stage_collect(config, &paths, game),
                            Stage::Train => stage_train(config, &paths, game),
                            Stage::Counterfactual => stage_counterfactual(config, &paths, game),
                            _ => unreachable!(),
                        })?;
                    }
                }
            }
        }
        Ok(())
    })
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Collect => "collect",
        Stage::Train => "train",
        Stage::Counterfactual => "counterfactual",
        Stage::Report => "report",
        Stage::All => "all",
    }
}

/// Run `f`, logging and recording its wall time when it did any work.
fn timed(paths: &RunPaths, label: &str, f: impl FnOnce() -> Result<bool, CliError>) -> Result<(), CliError> {
    let start = Instant::now();
    let ran = f()?;
    let secs = start.elapsed().as_secs_f64();
    if ran {
        log::info!("{label}: done in {secs:.1}s");
        let path = paths.timings();
        let mut timings: BTreeMap<String, f64> = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        timings.insert(label.to_string(), secs);
        let text = serde_json::to_string_pretty(&timings).expect("timings serialize");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    } else {
        log::info!("{label}: up to date");
    }
    Ok(())
}

/// A manifest in `dir` written for `hash`, with every shard present.
pub fn is_current(dir: &Path, hash: &str) -> bool {
    match Manifest::load(dir) {
        Ok(m) => m.config_hash == hash && m.shards.iter().all(|s| dir.join(&s.file).is_file()),
        Err(_) => false,
    }
}

/// Manifest of an upstream dataset, which must exist and match `hash`.
pub fn require_current(dir: &Path, hash: &str, what: &str) -> Result<Manifest, CliError> {
    let m = Manifest::load(dir).map_err(|e| CliError::Missing {
        path: dir.join(MANIFEST_FILE),
        what: format!("{what} ({e})"),
    })?;
    if m.config_hash != hash {
        return Err(CliError::Missing {
            path: dir.join(MANIFEST_FILE),
            what: format!("{what} was produced by a different configuration; rerun its stage"),
        });
    }
    Ok(m)
}

/// Remove shard files and the manifest left by an earlier configuration.
fn clear_dir(dir: &Path) -> Result<(), CliError> {
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            if name.starts_with("shard-") || name == MANIFEST_FILE {
                fs::remove_file(e.path()).map_err(|err| CliError::io(&e.path(), err))?;
            }
        }
    }
    Ok(())
}

fn new_manifest(kind: &str, game: GameKind, hash: String, episode_seeds: Vec<u64>, skipped: usize) -> Manifest {
    let mut episode_seeds = episode_seeds;
    episode_seeds.sort_unstable();
    Manifest {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        game: game.name().to_string(),
        config_hash: hash,
        episode_seeds,
        records: 0,
        skipped,
        shards: Vec::new(),
    }
}

pub fn episode_header(config: &RunConfig, game: GameKind, kind: &str, index: usize) -> EpisodeHeader {
    let g = config.game(game);
    let seed = derive_seed(config.seed, &format!("{kind}/{}/{index}", game.name()));
    let scenario = config.scenario(game);
    EpisodeHeader {
        game,
        episode_index: index as u64,
        episode_seed: seed,
        map_seed: scenario.map_seed(seed),
        population: g.populations[index % g.populations.len()].clone(),
        epsilon: g.epsilon,
        horizon: g.horizon,
        num_players: oboe_core::NUM_PLAYERS,
    }
}

/// Play the observational episodes of `game` (no central agent).
pub fn stage_collect(config: &RunConfig, paths: &RunPaths, game: GameKind) -> Result<bool, CliError> {
    let dir = paths.observational(game);
    let hash = config.collect_hash(game);
    if is_current(&dir, &hash) {
        return Ok(false);
    }
    let g = config.game(game);
    let scenario = config.scenario(game);
    log::info!("collect/{}: {} episodes", game.name(), g.observational_episodes);
    let opts = RecordOptions {
        stride: g.snapshot_stride,
        extra: vec![intervene_t(game)],
        keep_steps: true,
    };
    let records: Vec<EpisodeRecord> = (0..g.observational_episodes)
        .into_par_iter()
        .map(|i| {
            let header = episode_header(config, game, "observational", i);
            let policies = make_population(game, &header.population, header.epsilon, header.episode_seed)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let init = scenario.initial_state(header.episode_seed, &policies);
            let traj = run_episode(init, &policies, header.episode_seed, opts.clone())
                .map_err(|e| CliError::Runtime(format!("collect episode {i}: {e}")))?;
            Ok(EpisodeRecord::from_trajectory(header, &traj))
        })
        .collect::<Result<_, CliError>>()?;
    let seeds = records.iter().map(|r| r.header.episode_seed).collect();
    let summary = report::baseline_rows(game, &records);
    let groups: Vec<Vec<EpisodeRecord>> = records.chunks(OBSERVATIONAL_SHARD).map(|c| c.to_vec()).collect();
    drop(records);
    clear_dir(&dir)?;
    report::write_baseline_csv(&dir.join("baseline.csv"), &summary)?;
    write_sharded(&dir, &groups, new_manifest("observational", game, hash, seeds, 0)).map_err(|source| CliError::Dataset {
        stage: "collect",
        source,
    })?;
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub architecture: Architecture,
    pub file: String,
    pub sha256: String,
    /// MSE of the kept parameters on the whole validation split.
    pub validation_loss: f64,
    pub best_step: usize,
    pub steps_run: usize,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub config_hash: String,
    pub game: String,
    /// Digest of the observational manifest the models were trained on.
    pub dataset: String,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub train_episodes: usize,
    pub validation_episodes: usize,
    pub checkpoints: Vec<CheckpointInfo>,
}

impl ModelManifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Missing {
            path: path.clone(),
            what: format!("trained models ({e})"),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}

fn model_err(source: oboe_models::ModelError) -> CliError {
    CliError::Model { stage: "train", source }
}

/// Fit both architectures on the observational data of `game`.
pub fn stage_train(config: &RunConfig, paths: &RunPaths, game: GameKind) -> Result<bool, CliError> {
    let dir = paths.models(game);
    let hash = config.train_hash(game);
    if let Ok(m) = ModelManifest::load(&dir) {
        if m.config_hash == hash && m.checkpoints.iter().all(|c| dir.join(&c.file).is_file()) {
            return Ok(false);
        }
    }
    let obs_dir = paths.observational(game);
    let obs = require_current(&obs_dir, &config.collect_hash(game), "observational dataset")?;
    let g = config.game(game);
    let (_, records): (Manifest, Vec<EpisodeRecord>) = read_sharded(&obs_dir).map_err(|source| CliError::Dataset { stage: "train", source })?;
    let set = make_training_set(
        &records,
        &config.scenario(game),
        config.features,
        g.samples_per_episode,
        g.validation_fraction,
        derive_seed(config.seed, &format!("train/{}/split", game.name())),
    )
    .map_err(|source| CliError::Dataset { stage: "train", source })?;
    drop(records);
    if set.train.is_empty() || set.validation.is_empty() {
        return Err(CliError::Runtime(format!("train/{}: empty train or validation split", game.name())));
    }
    log::info!(
        "train/{}: {} train and {} validation samples",
        game.name(),
        set.train.len(),
        set.validation.len()
    );
    let val_refs: Vec<_> = set.validation.iter().collect();
    let mut checkpoints = Vec::new();
    for arch in [Architecture::Mlp, Architecture::Rfm] {
        let label = format!("train/{}/{}", game.name(), arch.name());
        let model_seed = derive_seed(config.seed, &format!("{label}/init"));
        let (predictor, curve, params) = match arch {
            Architecture::Mlp => {
                let mut trainer = g.mlp.trainer.clone();
                trainer.seed = derive_seed(config.seed, &format!("{label}/{}", trainer.seed));
                let layout = FlatLayout::of(&set.train[0], false);
                let mut m = MlpModel::new(game, config.features, layout, &g.mlp.widths, model_seed);
                m.fit_normalization(&set.train).map_err(model_err)?;
                let (best, curve) = train(m, &trainer, &set.train, &set.validation).map_err(model_err)?;
                let n = best.params().len();
                (Predictor::Mlp(best), curve, n)
            }
            Architecture::Rfm => {
                let mut trainer = g.rfm.trainer.clone();
                trainer.seed = derive_seed(config.seed, &format!("{label}/{}", trainer.seed));
                let mut m = RfmModel::new(
                    game,
                    config.features,
                    oboe_core::NUM_PLAYERS,
                    &g.rfm.edge_widths,
                    &g.rfm.node_widths,
                    g.rfm.aggregation,
                    model_seed,
                );
                m.fit_normalization(&set.train);
                let (best, curve) = train(m, &trainer, &set.train, &set.validation).map_err(model_err)?;
                let n = best.params().len();
                (Predictor::Rfm(best), curve, n)
            }
        };
        let validation_loss = predictor.loss(&val_refs).map_err(model_err)?;
        log::info!("{label}: validation MSE {validation_loss:.2} (best step {})", curve.best_step);
        let mut ckpt = Checkpoint::new(predictor, curve, hash.clone());
        ckpt.validation_loss = validation_loss;
        let path = paths.checkpoint(game, arch);
        save_checkpoint(&path, &ckpt).map_err(model_err)?;
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        checkpoints.push(CheckpointInfo {
            architecture: arch,
            file: format!("{}.json.gz", arch.name()),
            sha256: sha256_hex(&bytes),
            validation_loss,
            best_step: ckpt.curve.best_step,
            steps_run: ckpt.curve.points.last().map_or(0, |p| p.step),
            parameters: params,
        });
    }
    let manifest = ModelManifest {
        config_hash: hash,
        game: game.name().to_string(),
        dataset: obs.digest(),
        train_samples: set.train.len(),
        validation_samples: set.validation.len(),
        train_episodes: set.train_episodes.len(),
        validation_episodes: set.validation_episodes.len(),
        checkpoints,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    report::write_validation_table(config, paths)?;
    Ok(true)
}

/// Simulate every candidate intervention of every evaluation episode.
pub fn stage_counterfactual(config: &RunConfig, paths: &RunPaths, game: GameKind) -> Result<bool, CliError> {
    let dir = paths.counterfactual(game);
    let hash = config.counterfactual_hash(game);
    if is_current(&dir, &hash) {
        return Ok(false);
    }
    let g = config.game(game);
    let scenario = config.scenario(game);
    let plan = CounterfactualPlan {
        families: g.families.clone(),
        harvest_candidates: g.harvest_candidates,
        completions: config.counterfactual.completions,
    };
    log::info!("counterfactual/{}: {} episodes", game.name(), g.evaluation_episodes);
    let episodes: Vec<(u64, Vec<CounterfactualLine>)> = (0..g.evaluation_episodes)
        .into_par_iter()
        .map(|i| {
            let header = episode_header(config, game, "evaluation", i);
            let lines = generate_episode(&scenario, &header, &plan).map_err(|source| CliError::Agent {
                stage: "counterfactual",
                source,
            })?;
            Ok((header.episode_seed, lines))
        })
        .collect::<Result<_, CliError>>()?;
    let seeds = episodes.iter().map(|(s, _)| *s).collect();
    let skipped = episodes
        .iter()
        .flat_map(|(_, l)| l)
        .filter(|l| matches!(l, CounterfactualLine::Skipped { .. }))
        .count();
    let groups: Vec<Vec<CounterfactualLine>> = episodes
        .chunks(COUNTERFACTUAL_SHARD)
        .map(|c| c.iter().flat_map(|(_, l)| l.iter().cloned()).collect())
        .collect();
    clear_dir(&dir)?;
    write_sharded(&dir, &groups, new_manifest("counterfactual", game, hash, seeds, skipped)).map_err(|source| CliError::Dataset {
        stage: "counterfactual",
        source,
    })?;
    if skipped > 0 {
        log::warn!("counterfactual/{}: {skipped} (episode, family) pairs skipped", game.name());
    }
    Ok(true)
}
