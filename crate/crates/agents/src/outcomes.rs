//! Realized returns of every (candidate, completion) pair of one
//! evaluation episode, and the agents that only read those: the CV
//! benchmark and the random, best-constant and null baselines.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use oboe_core::datasets::{CounterfactualBase, OutcomeRecord};
use oboe_core::interventions::Family;
use oboe_core::rng::split_rng;
use oboe_core::{GameKind, Intervention};

use crate::metrics::{Goal, SocialMetric, Task};
use crate::oboe::argbest;
use crate::stats::mean;
use crate::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcomes {
    pub episode_index: u64,
    pub family: Family,
    pub candidates: Vec<Intervention>,
    /// `returns[c][j]`: player returns of completion `j` after candidate `c`.
    pub returns: Vec<Vec<Option<Vec<f64>>>>,
}

impl EpisodeOutcomes {
    /// Gather the outcome records of one base; records of other episodes or
    /// families are ignored.
    pub fn from_records<'a>(base: &CounterfactualBase, records: impl IntoIterator<Item = &'a OutcomeRecord>, completions: usize) -> Self {
        let mut returns = vec![vec![None; completions]; base.candidates.len()];
        for r in records {
            if r.episode_index != base.header.episode_index || r.family != base.family {
                continue;
            }
            if let Some(slot) = returns.get_mut(r.candidate).and_then(|row| row.get_mut(r.completion)) {
                *slot = Some(r.returns.clone());
            }
        }
        Self {
            episode_index: base.header.episode_index,
            family: base.family,
            candidates: base.candidates.clone(),
            returns,
        }
    }

    /// `(candidate, completion)` pairs among `completions` with no record.
    pub fn missing(&self, completions: impl IntoIterator<Item = usize> + Clone) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (c, row) in self.returns.iter().enumerate() {
            for j in completions.clone() {
                if row.get(j).is_none_or(|r| r.is_none()) {
                    out.push((c, j));
                }
            }
        }
        out
    }

    fn require(&self, completions: impl IntoIterator<Item = usize> + Clone) -> Result<(), AgentError> {
        let missing = self.missing(completions);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(AgentError::MissingCompletions {
                episode: self.episode_index,
                missing,
            })
        }
    }

    /// Metric of one completion, if recorded.
    pub fn value(&self, candidate: usize, completion: usize, metric: SocialMetric) -> Option<f64> {
        self.returns
            .get(candidate)?
            .get(completion)?
            .as_ref()
            .map(|r| metric.value(r))
    }

    pub fn null_index(&self) -> Option<usize> {
        self.candidates.iter().position(Intervention::is_null)
    }

    /// Metric of `candidate` on the evaluation completion.
    pub fn evaluate(&self, candidate: usize, completion: usize, metric: SocialMetric) -> Result<f64, AgentError> {
        self.value(candidate, completion, metric).ok_or_else(|| AgentError::MissingCompletions {
            episode: self.episode_index,
            missing: vec![(candidate, completion)],
        })
    }
}

/// Which completion is held out for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holdout {
    pub completions: usize,
    pub eval: usize,
}

impl Default for Holdout {
    fn default() -> Self {
        Self { completions: 5, eval: 0 }
    }
}

impl Holdout {
    pub fn estimation(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        (0..self.completions).filter(move |&j| j != self.eval)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvChoice {
    pub candidate: usize,
    /// Mean metric of the chosen candidate over the estimation completions.
    pub estimate: f64,
    /// Its metric on the held-out completion: an unbiased evaluation.
    pub outcome: f64,
}

/// Pick the candidate whose mean metric over the estimation completions is
/// best and report its metric on the held-out completion.
pub fn cv_select(ep: &EpisodeOutcomes, metric: SocialMetric, goal: Goal, holdout: Holdout) -> Result<CvChoice, AgentError> {
    ep.require(0..holdout.completions)?;
    let estimates: Vec<f64> = (0..ep.candidates.len())
        .map(|c| {
            let vals: Vec<f64> = holdout
                .estimation()
                .map(|j| ep.value(c, j, metric).expect("checked above"))
                .collect();
            mean(&vals)
        })
        .collect();
    let candidate = argbest(&estimates, goal).ok_or(AgentError::NoCandidates)?;
    Ok(CvChoice {
        candidate,
        estimate: estimates[candidate],
        outcome: ep.evaluate(candidate, holdout.eval, metric)?,
    })
}

/// Per episode, the mean evaluated metric over all candidates: the
/// expected outcome of picking uniformly at random.
pub fn random_outcomes(episodes: &[EpisodeOutcomes], metric: SocialMetric, holdout: Holdout) -> Result<Vec<f64>, AgentError> {
    episodes
        .iter()
        .map(|ep| {
            let vals = (0..ep.candidates.len())
                .map(|c| ep.evaluate(c, holdout.eval, metric))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.is_empty() {
                return Err(AgentError::NoCandidates);
            }
            Ok(mean(&vals))
        })
        .collect()
}

pub fn null_outcomes(episodes: &[EpisodeOutcomes], metric: SocialMetric, holdout: Holdout) -> Result<Vec<f64>, AgentError> {
    episodes
        .iter()
        .map(|ep| {
            let c = ep.null_index().ok_or(AgentError::NoNull(ep.episode_index))?;
            ep.evaluate(c, holdout.eval, metric)
        })
        .collect()
}

/// How the best constant intervention is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ConstantMode {
    /// Select and evaluate on the same episodes; this
    /// carries a small selection bias.
    #[default]
    InSample,
    /// Select on a seeded half of the episodes, evaluate on the rest.
    Split { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantChoice {
    pub intervention: Intervention,
    /// Episodes the outcomes were evaluated on.
    pub episodes: Vec<u64>,
    pub outcomes: Vec<f64>,
}

/// Whether two candidates are the same fixed choice. A player move names a
/// player and a target location; the exact cell can shift when the target
/// is occupied.
fn same_choice(a: &Intervention, b: &Intervention) -> bool {
    match (a, b) {
        (
            Intervention::MovePlayer { player: p, location: l, .. },
            Intervention::MovePlayer { player: q, location: m, .. },
        ) => p == q && l == m,
        _ => a == b,
    }
}

/// The fixed intervention whose average evaluated metric across episodes is
/// best. Harvest candidates differ per map, so there the only constant
/// intervention is the null one.
pub fn best_constant(episodes: &[EpisodeOutcomes], task: Task, mode: ConstantMode, holdout: Holdout) -> Result<ConstantChoice, AgentError> {
    let first = episodes.first().ok_or(AgentError::TooFewEpisodes(0))?;
    if task.game() == GameKind::Harvest {
        if first.candidates.iter().any(|c| !c.is_null()) {
            log::warn!("{task}: Harvest candidates vary by map, best constant resolves to the null intervention");
        }
        return Ok(ConstantChoice {
            intervention: Intervention::Null,
            episodes: episodes.iter().map(|e| e.episode_index).collect(),
            outcomes: null_outcomes(episodes, task.metric, holdout)?,
        });
    }
    for ep in episodes {
        let same = ep.candidates.len() == first.candidates.len() && ep.candidates.iter().zip(&first.candidates).all(|(a, b)| same_choice(a, b));
        if !same {
            return Err(AgentError::InconsistentCandidates(ep.episode_index));
        }
    }
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    let (select, evaluate): (Vec<usize>, Vec<usize>) = match mode {
        ConstantMode::InSample => (order.clone(), order),
        ConstantMode::Split { seed } => {
            if episodes.len() < 2 {
                return Err(AgentError::TooFewEpisodes(episodes.len()));
            }
            order.shuffle(&mut split_rng(seed, "constant-split"));
            let (a, b) = order.split_at(episodes.len() / 2);
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_unstable();
            b.sort_unstable();
            (a, b)
        }
    };
    let averages = (0..first.candidates.len())
        .map(|c| {
            let vals = select
                .iter()
                .map(|&e| episodes[e].evaluate(c, holdout.eval, task.metric))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(mean(&vals))
        })
        .collect::<Result<Vec<f64>, AgentError>>()?;
    let best = argbest(&averages, task.goal).ok_or(AgentError::NoCandidates)?;
    Ok(ConstantChoice {
        intervention: first.candidates[best].clone(),
        episodes: evaluate.iter().map(|&e| episodes[e].episode_index).collect(),
        outcomes: evaluate
            .iter()
            .map(|&e| episodes[e].evaluate(best, holdout.eval, task.metric))
            .collect::<Result<_, _>>()?,
    })
}
