//! The OBOE central agent: Q̂(s, a) applies the metric to predicted forward
//! returns of the intervened state plus the returns so far, and the agent
//! picks the best candidate greedily.

use oboe_core::datasets::extract_graph;
use oboe_core::engine::{EpisodeRunner, RecordOptions};
use oboe_core::policies::ScriptedPolicy;
use oboe_core::rng::StreamRng;
use oboe_core::{apply, GameState, Intervention};
use oboe_models::Predictor;

use crate::metrics::{Goal, SocialMetric};
use crate::AgentError;

/// Anything that predicts each player's forward return `R^{>t}` from a
/// state.
pub trait ForwardPredictor: Sync {
    fn forward_returns(&self, state: &GameState) -> Result<Vec<f64>, AgentError>;
}

impl ForwardPredictor for Predictor {
    fn forward_returns(&self, state: &GameState) -> Result<Vec<f64>, AgentError> {
        let sample = extract_graph(state, self.feature_config());
        Ok(self.predict(&sample)?)
    }
}

/// The simulator as a predictor: plays the episode out from the state with
/// fixed policies and player streams and reports the realized forward
/// returns. With deterministic policies and dynamics it is a perfect
/// predictor.
pub struct RolloutOracle<'a> {
    pub policies: &'a [ScriptedPolicy],
    pub streams: Vec<StreamRng>,
}

impl ForwardPredictor for RolloutOracle<'_> {
    fn forward_returns(&self, state: &GameState) -> Result<Vec<f64>, AgentError> {
        let before = state.returns_so_far();
        let mut runner = EpisodeRunner::resume(state.clone(), self.policies, self.streams.clone(), RecordOptions::outcomes_only())?;
        runner.run_to_end()?;
        Ok(runner.state().returns_so_far().iter().zip(&before).map(|(a, b)| a - b).collect())
    }
}

/// Predicted episode returns `R̂^{>t}(s'_a(s); i) + R_i^{<=t}` for one
/// intervention. Interventions do not change returns so far.
pub fn predicted_returns<P: ForwardPredictor + ?Sized>(model: &P, state: &GameState, intervention: &Intervention) -> Result<Vec<f64>, AgentError> {
    let edited = apply(intervention, state)?;
    let forward = model.forward_returns(&edited)?;
    Ok(forward.iter().zip(state.returns_so_far()).map(|(f, r)| f + r).collect())
}

pub fn q_hat<P: ForwardPredictor + ?Sized>(
    model: &P,
    state: &GameState,
    intervention: &Intervention,
    metric: SocialMetric,
) -> Result<f64, AgentError> {
    Ok(metric.value(&predicted_returns(model, state, intervention)?))
}

/// Index of the best value; ties go to the earliest entry.
pub fn argbest(values: &[f64], goal: Goal) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if goal.prefers(v, values[b]) => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Choice among `candidates` from precomputed predicted returns (one entry
/// per candidate): returns the chosen index and each candidate's Q̂.
pub fn select_from_predictions(predictions: &[Vec<f64>], metric: SocialMetric, goal: Goal) -> Result<(usize, Vec<f64>), AgentError> {
    let q: Vec<f64> = predictions.iter().map(|r| metric.value(r)).collect();
    let best = argbest(&q, goal).ok_or(AgentError::NoCandidates)?;
    Ok((best, q))
}

/// Greedy choice by Q̂, ties broken by list order (candidate sets put the
/// null intervention first).
pub fn oboe_select<P: ForwardPredictor + ?Sized>(
    model: &P,
    state: &GameState,
    candidates: &[Intervention],
    metric: SocialMetric,
    goal: Goal,
) -> Result<usize, AgentError> {
    let predictions = candidates
        .iter()
        .map(|c| predicted_returns(model, state, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(select_from_predictions(&predictions, metric, goal)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argbest_prefers_earliest_tie() {
        assert_eq!(argbest(&[1.0, 3.0, 3.0], Goal::Maximize), Some(1));
        assert_eq!(argbest(&[2.0, 2.0], Goal::Minimize), Some(0));
        assert_eq!(argbest(&[3.0, 7.0], Goal::Maximize), Some(1));
        assert_eq!(argbest(&[3.0, 7.0], Goal::Minimize), Some(0));
        assert_eq!(argbest(&[], Goal::Minimize), None);
    }
}
