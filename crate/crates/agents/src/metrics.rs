//! Social metrics over the players' episode returns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use oboe_core::interventions::Family;
use oboe_core::GameKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocialMetric {
    CollectiveReturn,
    GiniIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Minimize,
    Maximize,
}

impl SocialMetric {
    pub const ALL: [SocialMetric; 2] = [SocialMetric::CollectiveReturn, SocialMetric::GiniIndex];

    pub fn name(self) -> &'static str {
        match self {
            SocialMetric::CollectiveReturn => "collective_return",
            SocialMetric::GiniIndex => "gini",
        }
    }

    pub fn value(self, returns: &[f64]) -> f64 {
        match self {
            SocialMetric::CollectiveReturn => collective_return(returns),
            SocialMetric::GiniIndex => gini(returns),
        }
    }
}

impl Goal {
    pub const ALL: [Goal; 2] = [Goal::Minimize, Goal::Maximize];

    pub fn name(self) -> &'static str {
        match self {
            Goal::Minimize => "minimize",
            Goal::Maximize => "maximize",
        }
    }

    /// Whether `a` is strictly better than `b`.
    pub fn prefers(self, a: f64, b: f64) -> bool {
        match self {
            Goal::Minimize => a < b,
            Goal::Maximize => a > b,
        }
    }

    /// +1 when larger is better, -1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Goal::Minimize => -1.0,
            Goal::Maximize => 1.0,
        }
    }
}

pub fn metric_value(metric: SocialMetric, returns: &[f64]) -> f64 {
    metric.value(returns)
}

pub fn collective_return(returns: &[f64]) -> f64 {
    returns.iter().sum()
}

/// Gini index `sum_ij |R_i - R_j| / (2 k sum_i R_i)`.
///
/// Fines can push returns below zero, where the index is meaningless, so
/// negative returns are clamped to zero first; an all-zero vector has index
/// zero.
pub fn gini(returns: &[f64]) -> f64 {
    let k = returns.len();
    if k == 0 {
        return 0.0;
    }
    let mut r: Vec<f64> = returns.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = r.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    // With ascending values, sum_ij |r_i - r_j| = 2 sum_i (2i - k + 1) r_i.
    r.sort_by(f64::total_cmp);
    let weighted: f64 = r.iter().enumerate().map(|(i, &v)| (2.0 * i as f64 - k as f64 + 1.0) * v).sum();
    weighted / (k as f64 * total)
}

/// A game, an intervention family, a metric and a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub family: Family,
    pub metric: SocialMetric,
    pub goal: Goal,
}

impl Task {
    pub fn game(&self) -> GameKind {
        self.family.game()
    }

    /// Every task of `game`, family-major.
    pub fn all_for(game: GameKind) -> Vec<Task> {
        let mut out = Vec::new();
        for family in Family::for_game(game) {
            for metric in SocialMetric::ALL {
                for goal in Goal::ALL {
                    out.push(Task { family, metric, goal });
                }
            }
        }
        out
    }

    pub fn all() -> Vec<Task> {
        [GameKind::Cleanup, GameKind::Harvest].into_iter().flat_map(Task::all_for).collect()
    }

    pub fn value(&self, returns: &[f64]) -> f64 {
        self.metric.value(returns)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.game().name(), self.family.name(), self.goal.name(), self.metric.name())
    }
}

impl FromStr for SocialMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SocialMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}
