//! Counterfactual evaluation data: play an episode to the intervention
//! time, apply every candidate, and finish each edited state several times
//! with different player randomness.
//!
//! Completion 0 continues the base episode's own player and environment
//! streams, so the null intervention's completion 0 replays the base
//! episode exactly. Completion `j >= 1` draws fresh streams labelled
//! `player-{i}/completion-{j}` and `env/completion-{j}` from the episode
//! seed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use oboe_core::datasets::{CounterfactualBase, CounterfactualLine, EpisodeHeader, OutcomeRecord, SnapshotRecord};
use oboe_core::engine::{EpisodeRunner, RecordOptions};
use oboe_core::interventions::{candidates_for, intervene_t, Family};
use oboe_core::policies::{make_population, ScriptedPolicy};
use oboe_core::rng::{derive_seed, player_label, split_rng, StreamRng};
use oboe_core::{apply, GameState, Intervention, Scenario};

use crate::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualPlan {
    pub families: Vec<Family>,
    /// Non-null candidates per Harvest family; the null intervention is
    /// added on top.
    pub harvest_candidates: usize,
    pub completions: usize,
}

/// The base episode stopped at the intervention time.
pub struct Prefix {
    pub policies: Vec<ScriptedPolicy>,
    pub state: GameState,
    pub streams: Vec<StreamRng>,
}

/// Replay the episode described by `header` up to the intervention time.
pub fn play_prefix(scenario: &Scenario, header: &EpisodeHeader) -> Result<Prefix, AgentError> {
    let policies = make_population(scenario.game, &header.population, header.epsilon, header.episode_seed)?;
    let init = scenario.initial_state(header.episode_seed, &policies);
    let mut runner = EpisodeRunner::new(init, &policies, header.episode_seed, RecordOptions::outcomes_only())?;
    runner.run_until(intervene_t(scenario.game))?;
    let state = runner.state().clone();
    let streams = runner.streams().to_vec();
    Ok(Prefix { policies, state, streams })
}

pub fn completion_label(completion: usize) -> String {
    if completion == 0 {
        "base".to_string()
    } else {
        format!("completion-{completion}")
    }
}

/// Finish `state` (already edited) as completion `completion` of the
/// episode with `episode_seed`.
pub fn complete(prefix: &Prefix, mut state: GameState, episode_seed: u64, completion: usize) -> Result<Vec<f64>, AgentError> {
    let streams = if completion == 0 {
        prefix.streams.clone()
    } else {
        state.rng = split_rng(episode_seed, &format!("env/{}", completion_label(completion)));
        (0..prefix.policies.len())
            .map(|i| split_rng(episode_seed, &format!("{}/{}", player_label(i), completion_label(completion))))
            .collect()
    };
    let mut runner = EpisodeRunner::resume(state, &prefix.policies, streams, RecordOptions::outcomes_only())?;
    runner.run_to_end()?;
    Ok(runner.state().returns_so_far())
}

pub fn candidate_seed(episode_seed: u64, family: Family) -> u64 {
    derive_seed(episode_seed, &format!("candidates/{}", family.name()))
}

/// Every counterfactual line of one evaluation episode: per family a base
/// record followed by its outcomes (candidate-major), or a skip record
/// when candidate generation fails. Completions shared between families
/// (the null intervention) are simulated once.
pub fn generate_episode(scenario: &Scenario, header: &EpisodeHeader, plan: &CounterfactualPlan) -> Result<Vec<CounterfactualLine>, AgentError> {
    let prefix = play_prefix(scenario, header)?;
    let seed = header.episode_seed;
    let mut cache: HashMap<(Intervention, usize), Vec<f64>> = HashMap::new();
    let mut lines = Vec::new();
    for &family in &plan.families {
        let cand_seed = candidate_seed(seed, family);
        let set = match candidates_for(&prefix.state, family, cand_seed, plan.harvest_candidates) {
            Ok(set) => set,
            Err(e) => {
                log::warn!("episode {}: {} candidates: {e}", header.episode_index, family.name());
                lines.push(CounterfactualLine::Skipped {
                    episode_index: header.episode_index,
                    family,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        lines.push(CounterfactualLine::Base(CounterfactualBase {
            header: header.clone(),
            family,
            intervene_t: set.intervene_t,
            candidate_seed: cand_seed,
            candidates: set.candidates.clone(),
            state: SnapshotRecord::of(&prefix.state),
        }));
        for (c, candidate) in set.candidates.iter().enumerate() {
            let edited = apply(candidate, &prefix.state)?;
            for j in 0..plan.completions {
                let key = (candidate.clone(), j);
                let returns = match cache.get(&key) {
                    Some(r) => r.clone(),
                    None => {
                        let r = complete(&prefix, edited.clone(), seed, j)?;
                        cache.insert(key, r.clone());
                        r
                    }
                };
                lines.push(CounterfactualLine::Outcome(OutcomeRecord {
                    episode_index: header.episode_index,
                    family,
                    candidate: c,
                    completion: j,
                    stream: completion_label(j),
                    returns,
                }));
            }
        }
    }
    Ok(lines)
}
