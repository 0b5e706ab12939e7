//! Central agents for the intervention tasks: the OBOE agent that ranks
//! candidates by predicted returns, and the agents that read simulated
//! outcomes directly (cross-validated search, random, best constant, null),
//! with the metrics, tests and summaries used to compare them.

pub mod counterfactual;
pub mod evaluation;
pub mod metrics;
pub mod oboe;
pub mod outcomes;
pub mod stats;

use thiserror::Error;

use oboe_core::policies::PolicyError;
use oboe_core::{EngineError, InterventionError};
use oboe_models::ModelError;

pub use evaluation::{effectiveness, effectiveness_with_se, task_filter, Effectiveness, Significance};
pub use metrics::{gini, metric_value, Goal, SocialMetric, Task};
pub use oboe::{oboe_select, q_hat, ForwardPredictor, RolloutOracle};
pub use outcomes::{best_constant, cv_select, null_outcomes, random_outcomes, ConstantMode, CvChoice, EpisodeOutcomes, Holdout};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("need at least 2 episodes per sample, got {0}")]
    TooFewEpisodes(usize),
    #[error("no candidates to choose from")]
    NoCandidates,
    #[error("episode {0} has no null candidate")]
    NoNull(u64),
    #[error("episode {episode}: missing (candidate, completion) outcomes {missing:?}")]
    MissingCompletions { episode: u64, missing: Vec<(usize, usize)> },
    #[error("episode {0} has a different candidate list, so no intervention is constant across episodes")]
    InconsistentCandidates(u64),
    #[error("paired samples have different lengths")]
    LengthMismatch,
    #[error("statistics: {0}")]
    Statistics(String),
}
