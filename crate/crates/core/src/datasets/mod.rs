//! Observational and counterfactual datasets, feature extraction and
//! training-set construction. The on-disk schema is described in
//! `docs/dataset_schema.md`.

mod features;
mod io;
mod records;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

pub use features::{
    content_categories, extract_graph, feature_names, location_cells, FeatureConfig, FlatLayout, GraphSample,
    WhitenStats, FEATURE_VERSION, F_ACTION, F_CONTENT, F_IDENTITY, F_ORIENTATION, F_RETURN, F_REWARD, F_X, F_Y,
    STD_FLOOR,
};
pub use io::{
    read_ndjson_gz, read_sharded, sha256_hex, shard_name, write_ndjson_gz, write_sharded, Manifest, ShardInfo,
    MANIFEST_FILE, SCHEMA_VERSION,
};
pub use records::{CounterfactualBase, CounterfactualLine, EpisodeHeader, EpisodeRecord, OutcomeRecord, SnapshotRecord};

use crate::error::MapError;
use crate::rng::split_rng;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("dataset schema version {found}, this build reads {expected}")]
    Schema { found: u32, expected: u32 },
    #[error("episode {episode}: {what}")]
    Inconsistent { episode: u64, what: String },
    #[error("feature layout mismatch: expected {expected}, found {found}")]
    Layout { expected: String, found: String },
    #[error(transparent)]
    Map(#[from] MapError),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Train and validation samples, split by episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub train: Vec<GraphSample>,
    pub validation: Vec<GraphSample>,
    pub train_episodes: Vec<u64>,
    pub validation_episodes: Vec<u64>,
}

/// Draw `samples_per_episode` snapshots per observational episode, uniformly
/// over the recorded snapshot times, and label them with forward returns
/// `R_i - R_i^{<=t}`. A `validation_fraction` of episodes (at least one when
/// there are two or more) goes to validation.
pub fn make_training_set(
    records: &[EpisodeRecord],
    scenario: &Scenario,
    config: FeatureConfig,
    samples_per_episode: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<TrainingSet, DatasetError> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut split_rng(seed, "episode-split"));
    let mut n_val = (records.len() as f64 * validation_fraction).round() as usize;
    if records.len() >= 2 {
        n_val = n_val.clamp(1, records.len() - 1);
    }
    let (val_idx, train_idx) = order.split_at(n_val.min(records.len()));

    let collect = |idx: &[usize]| -> Result<(Vec<GraphSample>, Vec<u64>), DatasetError> {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        let mut samples = Vec::new();
        let mut episodes = Vec::new();
        for &i in &sorted {
            let rec = &records[i];
            rec.check()?;
            episodes.push(rec.header.episode_index);
            if rec.snapshots.is_empty() {
                continue;
            }
            let template = scenario.initial_state(rec.header.episode_seed, &[]);
            let mut rng = split_rng(seed, &format!("samples/{}", rec.header.episode_index));
            for _ in 0..samples_per_episode {
                let snap = &rec.snapshots[rng.random_range(0..rec.snapshots.len())];
                let state = snap.to_state(&template)?;
                let mut g = extract_graph(&state, config);
                g.targets = rec
                    .returns
                    .iter()
                    .zip(&snap.players)
                    .map(|(total, p)| total - p.return_so_far)
                    .collect();
                samples.push(g);
            }
        }
        Ok((samples, episodes))
    };
    let (train, train_episodes) = collect(train_idx)?;
    let (validation, validation_episodes) = collect(val_idx)?;
    Ok(TrainingSet {
        train,
        validation,
        train_episodes,
        validation_episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_episode, GameKind, RecordOptions};
    use crate::policies::{make_population, MixSpec};

    fn records(n: u64) -> (Scenario, Vec<EpisodeRecord>) {
        let mut scenario = Scenario::new(GameKind::Cleanup);
        scenario.horizon = 200;
        let mix = MixSpec::CleanupRatio { prosocial: 2 };
        let recs = (0..n)
            .map(|i| {
                let policies = make_population(GameKind::Cleanup, &mix, 0.05, i).unwrap();
                let init = scenario.initial_state(i, &policies);
                let traj = run_episode(init, &policies, i, RecordOptions::default()).unwrap();
                let header = EpisodeHeader {
                    game: GameKind::Cleanup,
                    episode_index: i,
                    episode_seed: i,
                    map_seed: None,
                    population: mix.clone(),
                    epsilon: 0.05,
                    horizon: 200,
                    num_players: 5,
                };
                EpisodeRecord::from_trajectory(header, &traj)
            })
            .collect();
        (scenario, recs)
    }

    #[test]
    fn records_round_trip_and_check() {
        let (_, recs) = records(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ndjson.gz");
        write_ndjson_gz(&path, &recs).unwrap();
        let back: Vec<EpisodeRecord> = read_ndjson_gz(&path).unwrap();
        assert_eq!(back, recs);
        for r in &recs {
            r.check().unwrap();
        }
        let mut broken = recs[0].clone();
        broken.returns[0] += 1.0;
        assert!(broken.check().is_err());
    }

    #[test]
    fn targets_telescope_and_split_by_episode() {
        let (scenario, recs) = records(6);
        let set = make_training_set(&recs, &scenario, FeatureConfig::default(), 8, 0.34, 3).unwrap();
        assert_eq!(set.train.len() + set.validation.len(), 6 * 8);
        for e in &set.train_episodes {
            assert!(!set.validation_episodes.contains(e));
        }
        for g in set.train.iter().chain(&set.validation) {
            // The return-so-far feature plus the target gives the episode return.
            let totals: Vec<f64> = (0..5).map(|i| g.node(i)[F_RETURN] as f64 + g.targets[i]).collect();
            assert!(recs.iter().any(|r| r.returns == totals));
            if g.global as u32 == 200 {
                assert!(g.targets.iter().all(|&t| t == 0.0));
            }
        }
    }
}
