//! Task filtering and effectiveness.

use serde::{Deserialize, Serialize};

use crate::metrics::{Goal, Task};
use crate::stats::{covariance, mean, welch_greater, WelchTest};
use crate::AgentError;

/// Does `a` outperform `b` in direction `goal`? One-sided Welch test on the
/// sign-adjusted samples.
pub fn outperforms(a: &[f64], b: &[f64], goal: Goal) -> Result<WelchTest, AgentError> {
    let s = goal.sign();
    let a: Vec<f64> = a.iter().map(|v| s * v).collect();
    let b: Vec<f64> = b.iter().map(|v| s * v).collect();
    welch_greater(&a, &b)
}

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub task: Task,
    pub vs_random: WelchTest,
    pub vs_constant: WelchTest,
    pub significant: bool,
}

/// CV must beat both the random and the constant baseline at level 0.05.
pub fn task_filter(task: Task, cv: &[f64], random: &[f64], constant: &[f64]) -> Result<Significance, AgentError> {
    let vs_random = outperforms(cv, random, task.goal)?;
    let vs_constant = outperforms(cv, constant, task.goal)?;
    Ok(Significance {
        task,
        significant: vs_random.p < ALPHA && vs_constant.p < ALPHA,
        vs_random,
        vs_constant,
    })
}

/// `(M_CA - M_random) / (M_CV - M_random)`; `None` when CV and random tie.
pub fn effectiveness(agent: f64, random: f64, cv: f64) -> Option<f64> {
    let denom = cv - random;
    let e = (agent - random) / denom;
    (denom != 0.0 && e.is_finite()).then_some(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effectiveness {
    pub value: Option<f64>,
    pub std_error: Option<f64>,
}

/// Effectiveness from per-episode outcomes of the agent, the random baseline
/// and CV on the same episodes, with a delta-method standard error that
/// uses the covariance of the three paired sample means.
pub fn effectiveness_with_se(agent: &[f64], random: &[f64], cv: &[f64]) -> Result<Effectiveness, AgentError> {
    let n = agent.len();
    if random.len() != n || cv.len() != n {
        return Err(AgentError::LengthMismatch);
    }
    if n == 0 {
        return Err(AgentError::TooFewEpisodes(0));
    }
    let (a, r, c) = (mean(agent), mean(random), mean(cv));
    let Some(value) = effectiveness(a, r, c) else {
        return Ok(Effectiveness {
            value: None,
            std_error: None,
        });
    };
    let d = c - r;
    // Per-episode linearisation of (a - r) / (c - r). Written in terms of
    // the value itself so the CV and random agents get an SE of exactly 0.
    let u: Vec<f64> = (0..n)
        .map(|k| ((agent[k] - a) + (value - 1.0) * (random[k] - r) - value * (cv[k] - c)) / d)
        .collect();
    let var = covariance(&u, &u) / n as f64;
    Ok(Effectiveness {
        value: Some(value),
        std_error: Some(var.max(0.0).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use oboe_core::interventions::Family;
    use crate::metrics::SocialMetric;

    #[test]
    fn effectiveness_examples() {
        assert_eq!(effectiveness(8.0, 2.0, 8.0), Some(1.0));
        assert_eq!(effectiveness(2.0, 2.0, 8.0), Some(0.0));
        assert_eq!(effectiveness(5.0, 2.0, 8.0), Some(0.5));
        assert_eq!(effectiveness(5.0, 2.0, 2.0), None);
    }

    #[test]
    fn cv_and_random_have_exact_effectiveness_and_zero_error() {
        let cv = [3.0, 5.0, 4.5, 7.0];
        let random = [1.0, 2.0, 2.5, 1.0];
        let e = effectiveness_with_se(&cv, &random, &cv).unwrap();
        assert_eq!(e.value, Some(1.0));
        assert!(e.std_error.unwrap() < 1e-12);
        let e = effectiveness_with_se(&random, &random, &cv).unwrap();
        assert_eq!(e.value, Some(0.0));
        assert!(e.std_error.unwrap() < 1e-12);
        let e = effectiveness_with_se(&random, &random, &random).unwrap();
        assert_eq!(e.value, None);
    }

    #[test]
    fn filter_is_direction_aware() {
        let task = |goal| Task {
            family: Family::MoveWaste,
            metric: SocialMetric::CollectiveReturn,
            goal,
        };
        let base: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        let better: Vec<f64> = base.iter().map(|v| v + 3.0).collect();
        assert!(task_filter(task(Goal::Maximize), &better, &base, &base).unwrap().significant);
        assert!(!task_filter(task(Goal::Minimize), &better, &base, &base).unwrap().significant);
        let same = task_filter(task(Goal::Maximize), &base, &base, &base).unwrap();
        assert_eq!(same.vs_random.p, 0.5);
        assert!(!same.significant);
    }
}
