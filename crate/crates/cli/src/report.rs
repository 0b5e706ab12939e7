//! Evaluation of every agent on every task and the tables, figure and
//! summary built from it.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use oboe_agents::evaluation::outperforms;
use oboe_agents::oboe::{predicted_returns, select_from_predictions};
use oboe_agents::stats::{mean, std_error};
use oboe_agents::{
    best_constant, cv_select, effectiveness_with_se, null_outcomes, random_outcomes, task_filter, AgentError, Effectiveness, EpisodeOutcomes,
    Holdout, SocialMetric, Task,
};
use oboe_core::datasets::{read_sharded, sha256_hex, CounterfactualBase, CounterfactualLine, EpisodeRecord, OutcomeRecord, MANIFEST_FILE};
use oboe_core::interventions::Family;
use oboe_core::GameKind;
use oboe_models::{load_checkpoint, Architecture, Predictor};

use crate::config::RunConfig;
use crate::pipeline::{require_current, ModelManifest};
use crate::svg::{bar_chart, Bar};
use crate::{CliError, RunPaths};

/// Values published for the original runs, kept for reference.
pub mod published {
    use oboe_agents::SocialMetric;
    use oboe_core::GameKind;
    use oboe_models::Architecture;

    pub const HEADLINE_EFFECTIVENESS: f64 = 0.56;
    pub const SIGNIFICANT_TASKS: usize = 11;

    pub fn baseline(game: GameKind, metric: SocialMetric) -> f64 {
        match (game, metric) {
            (GameKind::Cleanup, SocialMetric::CollectiveReturn) => 1570.2,
            (GameKind::Cleanup, SocialMetric::GiniIndex) => 0.1966,
            (GameKind::Harvest, SocialMetric::CollectiveReturn) => 584.6,
            (GameKind::Harvest, SocialMetric::GiniIndex) => 0.3139,
        }
    }

    pub fn validation_loss(game: GameKind, arch: Architecture) -> f64 {
        match (game, arch) {
            (GameKind::Cleanup, Architecture::Mlp) => 775.0,
            (GameKind::Cleanup, Architecture::Rfm) => 757.0,
            (GameKind::Harvest, Architecture::Mlp) => 1485.0,
            (GameKind::Harvest, Architecture::Rfm) => 1291.0,
        }
    }
}

fn stage_err(source: AgentError) -> CliError {
    CliError::Agent { stage: "report", source }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let csv_err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub game: GameKind,
    pub metric: SocialMetric,
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
    pub published: f64,
}

/// Mean collective return and Gini of observational episodes.
pub fn baseline_rows(game: GameKind, records: &[EpisodeRecord]) -> Vec<BaselineRow> {
    SocialMetric::ALL
        .iter()
        .map(|&metric| {
            let vals: Vec<f64> = records.iter().map(|r| metric.value(&r.returns)).collect();
            BaselineRow {
                game,
                metric,
                mean: mean(&vals),
                std_error: if vals.len() > 1 { std_error(&vals) } else { f64::NAN },
                episodes: vals.len(),
                published: published::baseline(game, metric),
            }
        })
        .collect()
}

const BASELINE_HEADER: [&str; 6] = ["game", "metric", "mean", "std_error", "episodes", "published"];

fn baseline_record(r: &BaselineRow) -> Vec<String> {
    vec![
        r.game.name().to_string(),
        r.metric.name().to_string(),
        num(r.mean),
        num(r.std_error),
        r.episodes.to_string(),
        num(r.published),
    ]
}

pub fn write_baseline_csv(path: &Path, rows: &[BaselineRow]) -> Result<(), CliError> {
    write_csv(path, &BASELINE_HEADER, &rows.iter().map(baseline_record).collect::<Vec<_>>())
}

fn read_baseline_csv(path: &Path) -> Result<Vec<BaselineRow>, CliError> {
    let missing = |e: csv::Error| CliError::Missing {
        path: path.to_path_buf(),
        what: format!("observational baseline summary ({e})"),
    };
    let mut r = csv::Reader::from_path(path).map_err(missing)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(missing)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse = |i: usize| field(i).parse::<f64>().unwrap_or(f64::NAN);
        let bad = || CliError::Runtime(format!("{}: malformed row", path.display()));
        out.push(BaselineRow {
            game: match field(0) {
                "cleanup" => GameKind::Cleanup,
                "harvest" => GameKind::Harvest,
                _ => return Err(bad()),
            },
            metric: field(1).parse().map_err(|_| bad())?,
            mean: parse(2),
            std_error: parse(3),
            episodes: field(4).parse().map_err(|_| bad())?,
            published: parse(5),
        });
    }
    Ok(out)
}

/// Validation loss of every trained model of the configured games.
pub fn write_validation_table(config: &RunConfig, paths: &RunPaths) -> Result<Vec<ValidationRow>, CliError> {
    let mut rows = Vec::new();
    for &game in &config.games {
        let Ok(m) = ModelManifest::load(&paths.models(game)) else {
            continue;
        };
        if m.config_hash != config.train_hash(game) {
            continue;
        }
        for c in &m.checkpoints {
            rows.push(ValidationRow {
                game,
                architecture: c.architecture,
                validation_loss: c.validation_loss,
                best_step: c.best_step,
                steps_run: c.steps_run,
                parameters: c.parameters,
                train_samples: m.train_samples,
                validation_samples: m.validation_samples,
                published: published::validation_loss(game, c.architecture),
            });
        }
    }
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.game.name().to_string(),
                r.architecture.name().to_string(),
                num(r.validation_loss),
                r.best_step.to_string(),
                r.steps_run.to_string(),
                r.parameters.to_string(),
                r.train_samples.to_string(),
                r.validation_samples.to_string(),
                num(r.published),
            ]
        })
        .collect();
    write_csv(
        &paths.reports().join("table3_validation.csv"),
        &[
            "game",
            "architecture",
            "validation_mse",
            "best_step",
            "steps_run",
            "parameters",
            "train_samples",
            "validation_samples",
            "published",
        ],
        &records,
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub game: GameKind,
    pub architecture: Architecture,
    pub validation_loss: f64,
    pub best_step: usize,
    pub steps_run: usize,
    pub parameters: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub published: f64,
}

/// The agents compared on every task, in report order.
pub const AGENTS: [&str; 6] = ["null", "random", "best_constant", "mlp", "rfm", "cv"];

/// One evaluation episode of one family, with model predictions for every
/// candidate.
struct Evaluated {
    outcomes: EpisodeOutcomes,
    /// `predictions[a][c]`: predicted returns of candidate `c` by
    /// architecture `a` (MLP then RFM).
    predictions: [Vec<Vec<f64>>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    pub agent: String,
    pub mean: f64,
    pub std_error: f64,
    /// Mean difference from the null agent on the same task.
    pub effect: f64,
    pub effect_std_error: f64,
    pub effectiveness: Option<f64>,
    pub effectiveness_std_error: Option<f64>,
    /// One-sided Welch p-value for beating the random agent.
    pub p_vs_random: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub game: GameKind,
    pub family: Family,
    pub metric: SocialMetric,
    pub goal: String,
    pub episodes: usize,
    pub mean_candidates: f64,
    pub constant_choice: String,
    pub p_cv_vs_random: f64,
    pub p_cv_vs_constant: f64,
    pub significant: bool,
    pub agents: Vec<AgentResult>,
}

impl TaskResult {
    pub fn agent(&self, name: &str) -> Option<&AgentResult> {
        self.agents.iter().find(|a| a.agent == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureEntry {
    pub agent: String,
    pub tasks: usize,
    pub mean_effectiveness: Option<f64>,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure {
    /// "significant" normally; "all" when no task passed the filter.
    pub scope: String,
    pub tasks: Vec<String>,
    pub entries: Vec<FigureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInputs {
    pub game: GameKind,
    pub observational: String,
    pub counterfactual: String,
    pub checkpoints: BTreeMap<String, String>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub headline_effectiveness: f64,
    pub significant_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub report_hash: String,
    pub seed: u64,
    pub inputs: Vec<GameInputs>,
    pub baselines: Vec<BaselineRow>,
    pub validation: Vec<ValidationRow>,
    pub tasks: Vec<TaskResult>,
    pub significant_tasks: usize,
    pub figure: Figure,
    /// Tasks where the RFM agent beats the random agent at p < 0.05.
    pub rfm_beats_random: Vec<String>,
    pub published: PublishedReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportManifest {
    config_hash: String,
    files: BTreeMap<String, String>,
}

const SUMMARY_FILE: &str = "summary.json";

/// Read `reports/summary.json` of a finished run.
pub fn load_summary(paths: &RunPaths) -> Result<Summary, CliError> {
    let path = paths.reports().join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Missing {
        path: path.clone(),
        what: format!("report summary ({e})"),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Build every table from the counterfactual data and trained models.
pub fn stage_report(config: &RunConfig, paths: &RunPaths) -> Result<bool, CliError> {
    let dir = paths.reports();
    let hash = config.report_hash();
    if let Ok(text) = fs::read_to_string(dir.join(MANIFEST_FILE)) {
        if let Ok(m) = serde_json::from_str::<ReportManifest>(&text) {
            if m.config_hash == hash && m.files.keys().all(|f| dir.join(f).is_file()) {
                return Ok(false);
            }
        }
    }
    let holdout = Holdout {
        completions: config.counterfactual.completions,
        eval: config.counterfactual.eval_completion,
    };
    let mut inputs = Vec::new();
    let mut baselines = Vec::new();
    let mut tasks = Vec::new();
    let mut episode_rows = Vec::new();
    for &game in &config.games {
        let obs_dir = paths.observational(game);
        let obs = require_current(&obs_dir, &config.collect_hash(game), "observational dataset")?;
        baselines.extend(read_baseline_csv(&obs_dir.join("baseline.csv"))?);
        let models = ModelManifest::load(&paths.models(game))?;
        if models.config_hash != config.train_hash(game) {
            return Err(CliError::Missing {
                path: paths.models(game).join(MANIFEST_FILE),
                what: "trained models were produced by a different configuration; rerun train".into(),
            });
        }
        let cf_dir = paths.counterfactual(game);
        let cf = require_current(&cf_dir, &config.counterfactual_hash(game), "counterfactual dataset")?;
        let mut predictors = Vec::new();
        let mut checkpoints = BTreeMap::new();
        for arch in [Architecture::Mlp, Architecture::Rfm] {
            let path = paths.checkpoint(game, arch);
            let info = models.checkpoints.iter().find(|c| c.architecture == arch).ok_or_else(|| CliError::Missing {
                path: path.clone(),
                what: format!("{} checkpoint", arch.name()),
            })?;
            let bytes = fs::read(&path).map_err(|e| CliError::Missing {
                path: path.clone(),
                what: format!("{} checkpoint ({e})", arch.name()),
            })?;
            if sha256_hex(&bytes) != info.sha256 {
                return Err(CliError::Runtime(format!("{}: checksum does not match the model manifest", path.display())));
            }
            let ckpt = load_checkpoint(&path).map_err(|source| CliError::Model { stage: "report", source })?;
            checkpoints.insert(arch.name().to_string(), info.sha256.clone());
            predictors.push(ckpt.model);
        }
        inputs.push(GameInputs {
            game,
            observational: obs.digest(),
            counterfactual: cf.digest(),
            checkpoints,
            skipped: cf.skipped,
        });

        let (_, lines): (_, Vec<CounterfactualLine>) = read_sharded(&cf_dir).map_err(|source| CliError::Dataset { stage: "report", source })?;
        let mut bases: Vec<CounterfactualBase> = Vec::new();
        let mut outcomes: HashMap<(u64, Family), Vec<OutcomeRecord>> = HashMap::new();
        for line in lines {
            match line {
                CounterfactualLine::Base(b) => bases.push(b),
                CounterfactualLine::Outcome(o) => outcomes.entry((o.episode_index, o.family)).or_default().push(o),
                CounterfactualLine::Skipped { .. } => {}
            }
        }
        bases.sort_by_key(|b| (b.family, b.header.episode_index));
        let scenario = config.scenario(game);
        let evaluated: Vec<Evaluated> = bases
            .par_iter()
            .map(|b| {
                let records = outcomes.get(&(b.header.episode_index, b.family)).map(Vec::as_slice).unwrap_or(&[]);
                let ep = EpisodeOutcomes::from_records(b, records, holdout.completions);
                let template = scenario.initial_state(b.header.episode_seed, &[]);
                let state = b
                    .state
                    .to_state(&template)
                    .map_err(|e| CliError::Runtime(format!("episode {}: {e}", b.header.episode_index)))?;
                let predict = |p: &Predictor| {
                    b.candidates
                        .iter()
                        .map(|c| predicted_returns(p, &state, c))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(stage_err)
                };
                Ok(Evaluated {
                    outcomes: ep,
                    predictions: [predict(&predictors[0])?, predict(&predictors[1])?],
                })
            })
            .collect::<Result<_, CliError>>()?;

        let g = config.game(game);
        for task in Task::all_for(game) {
            if !g.families.contains(&task.family) {
                continue;
            }
            let eps: Vec<&Evaluated> = evaluated.iter().filter(|e| e.outcomes.family == task.family).collect();
            if eps.len() < 2 {
                log::warn!("{task}: only {} evaluation episodes, task left out", eps.len());
                continue;
            }
            let (result, rows) = evaluate_task(config, task, &eps, holdout)?;
            tasks.push(result);
            episode_rows.extend(rows);
        }
    }

    let validation = write_validation_table(config, paths)?;
    let significant: Vec<&TaskResult> = tasks.iter().filter(|t| t.significant).collect();
    let (scope, scoped): (&str, Vec<&TaskResult>) = if significant.is_empty() {
        log::warn!("no task passed the significance filter; effectiveness is averaged over all tasks");
        ("all", tasks.iter().collect())
    } else {
        ("significant", significant.clone())
    };
    let figure = Figure {
        scope: scope.to_string(),
        tasks: scoped.iter().map(|t| t.task.clone()).collect(),
        entries: ["random", "best_constant", "mlp", "rfm", "cv"]
            .iter()
            .map(|&agent| figure_entry(agent, &scoped))
            .collect(),
    };
    let summary = Summary {
        config_hash: config.hash(),
        report_hash: hash.clone(),
        seed: config.seed,
        inputs,
        baselines,
        validation,
        significant_tasks: significant.len(),
        rfm_beats_random: tasks
            .iter()
            .filter(|t| t.agent("rfm").and_then(|a| a.p_vs_random).is_some_and(|p| p < oboe_agents::evaluation::ALPHA))
            .map(|t| t.task.clone())
            .collect(),
        tasks,
        figure,
        published: PublishedReference {
            headline_effectiveness: published::HEADLINE_EFFECTIVENESS,
            significant_tasks: published::SIGNIFICANT_TASKS,
        },
    };
    write_outputs(config, paths, &summary, &episode_rows, hash)?;
    Ok(true)
}

fn paired_effect(x: &[f64], null: &[f64]) -> (f64, f64) {
    let effect = mean(x) - mean(null);
    let se = if x.len() == null.len() && x.len() > 1 {
        let d: Vec<f64> = x.iter().zip(null).map(|(a, b)| a - b).collect();
        std_error(&d)
    } else {
        (std_error(x).powi(2) + std_error(null).powi(2)).sqrt()
    };
    (effect, se)
}

fn evaluate_task(config: &RunConfig, task: Task, eps: &[&Evaluated], holdout: Holdout) -> Result<(TaskResult, Vec<Vec<String>>), CliError> {
    let outcomes: Vec<EpisodeOutcomes> = eps.iter().map(|e| e.outcomes.clone()).collect();
    let null = null_outcomes(&outcomes, task.metric, holdout).map_err(stage_err)?;
    let random = random_outcomes(&outcomes, task.metric, holdout).map_err(stage_err)?;
    let constant = best_constant(&outcomes, task, config.report.constant_mode, holdout).map_err(stage_err)?;
    let cv_choices = outcomes
        .iter()
        .map(|ep| cv_select(ep, task.metric, task.goal, holdout))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage_err)?;
    let cv: Vec<f64> = cv_choices.iter().map(|c| c.outcome).collect();
    let mut oboe_choices: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut oboe: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for e in eps {
        for a in 0..2 {
            let (c, _) = select_from_predictions(&e.predictions[a], task.metric, task.goal).map_err(stage_err)?;
            oboe_choices[a].push(c);
            oboe[a].push(e.outcomes.evaluate(c, holdout.eval, task.metric).map_err(stage_err)?);
        }
    }
    let sig = task_filter(task, &cv, &random, &constant.outcomes).map_err(stage_err)?;

    let series: [(&str, &[f64]); 6] = [
        ("null", &null),
        ("random", &random),
        ("best_constant", &constant.outcomes),
        ("mlp", &oboe[0]),
        ("rfm", &oboe[1]),
        ("cv", &cv),
    ];
    let mut agents = Vec::new();
    for (name, x) in series {
        let (effect, effect_se) = paired_effect(x, &null);
        let eff = if x.len() == random.len() {
            effectiveness_with_se(x, &random, &cv).map_err(stage_err)?
        } else {
            Effectiveness {
                value: None,
                std_error: None,
            }
        };
        let p = match name {
            "mlp" | "rfm" | "cv" | "best_constant" => Some(outperforms(x, &random, task.goal).map_err(stage_err)?.p),
            _ => None,
        };
        agents.push(AgentResult {
            agent: name.to_string(),
            mean: mean(x),
            std_error: std_error(x),
            effect,
            effect_std_error: effect_se,
            effectiveness: eff.value,
            effectiveness_std_error: eff.std_error,
            p_vs_random: p,
        });
    }
    let label = task.to_string();
    let rows = eps
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![
                label.clone(),
                e.outcomes.episode_index.to_string(),
                num(null[i]),
                num(random[i]),
                constant
                    .episodes
                    .iter()
                    .position(|&ep| ep == e.outcomes.episode_index)
                    .map_or_else(|| "NA".to_string(), |k| num(constant.outcomes[k])),
                oboe_choices[0][i].to_string(),
                num(oboe[0][i]),
                oboe_choices[1][i].to_string(),
                num(oboe[1][i]),
                cv_choices[i].candidate.to_string(),
                num(cv[i]),
            ]
        })
        .collect();
    let result = TaskResult {
        task: label,
        game: task.game(),
        family: task.family,
        metric: task.metric,
        goal: task.goal.name().to_string(),
        episodes: eps.len(),
        mean_candidates: mean(&eps.iter().map(|e| e.outcomes.candidates.len() as f64).collect::<Vec<_>>()),
        constant_choice: serde_json::to_string(&constant.intervention).expect("intervention serializes"),
        p_cv_vs_random: sig.vs_random.p,
        p_cv_vs_constant: sig.vs_constant.p,
        significant: sig.significant,
        agents,
    };
    Ok((result, rows))
}

/// Mean effectiveness over tasks where it is defined, with standard error
/// `sqrt(sum se^2) / n` treating tasks as independent.
fn figure_entry(agent: &str, tasks: &[&TaskResult]) -> FigureEntry {
    let vals: Vec<(f64, f64)> = tasks
        .iter()
        .filter_map(|t| {
            let a = t.agent(agent)?;
            Some((a.effectiveness?, a.effectiveness_std_error.unwrap_or(f64::NAN)))
        })
        .collect();
    let n = vals.len();
    FigureEntry {
        agent: agent.to_string(),
        tasks: n,
        mean_effectiveness: (n > 0).then(|| vals.iter().map(|v| v.0).sum::<f64>() / n as f64),
        std_error: (n > 0).then(|| vals.iter().map(|v| v.1 * v.1).sum::<f64>().sqrt() / n as f64),
    }
}

fn write_outputs(config: &RunConfig, paths: &RunPaths, s: &Summary, episode_rows: &[Vec<String>], hash: String) -> Result<(), CliError> {
    let dir = paths.reports();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_csv(
        &dir.join("table1_baselines.csv"),
        &BASELINE_HEADER,
        &s.baselines.iter().map(baseline_record).collect::<Vec<_>>(),
    )?;
    let task_cols = |t: &TaskResult| {
        vec![
            t.game.name().to_string(),
            t.family.name().to_string(),
            t.goal.clone(),
            t.metric.name().to_string(),
        ]
    };
    let mut rows = Vec::new();
    for t in &s.tasks {
        let mut r = task_cols(t);
        let m = |a: &str| t.agent(a).map_or_else(|| "NA".to_string(), |x| num(x.mean));
        r.extend([
            t.episodes.to_string(),
            num(t.mean_candidates),
            m("null"),
            m("random"),
            m("best_constant"),
            t.constant_choice.clone(),
            m("cv"),
            num(t.p_cv_vs_random),
            num(t.p_cv_vs_constant),
            t.significant.to_string(),
        ]);
        rows.push(r);
    }
    write_csv(
        &dir.join("table2_filtering.csv"),
        &[
            "game",
            "family",
            "goal",
            "metric",
            "episodes",
            "candidates",
            "null_mean",
            "random_mean",
            "constant_mean",
            "constant_choice",
            "cv_mean",
            "p_cv_vs_random",
            "p_cv_vs_constant",
            "significant",
        ],
        &rows,
    )?;

    let mut header: Vec<String> = ["game", "family", "goal", "metric", "significant"].iter().map(|s| s.to_string()).collect();
    for a in AGENTS {
        for col in ["effect", "effect_se", "effectiveness", "effectiveness_se", "p_vs_random"] {
            header.push(format!("{a}_{col}"));
        }
    }
    let mut rows = Vec::new();
    for t in &s.tasks {
        let mut r = task_cols(t);
        r.push(t.significant.to_string());
        for a in AGENTS {
            match t.agent(a) {
                Some(x) => r.extend([
                    num(x.effect),
                    num(x.effect_std_error),
                    opt(x.effectiveness),
                    opt(x.effectiveness_std_error),
                    opt(x.p_vs_random),
                ]),
                None => r.extend(std::iter::repeat_n("NA".to_string(), 5)),
            }
        }
        rows.push(r);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&dir.join("table4_effects.csv"), &header_refs, &rows)?;

    let rows: Vec<Vec<String>> = s
        .figure
        .entries
        .iter()
        .map(|e| {
            vec![
                e.agent.clone(),
                s.figure.scope.clone(),
                e.tasks.to_string(),
                opt(e.mean_effectiveness),
                opt(e.std_error),
            ]
        })
        .collect();
    write_csv(
        &dir.join("figure3_effectiveness.csv"),
        &["agent", "scope", "tasks", "mean_effectiveness", "std_error"],
        &rows,
    )?;
    write_csv(
        &dir.join("episode_outcomes.csv"),
        &[
            "task",
            "episode",
            "null",
            "random",
            "best_constant",
            "mlp_choice",
            "mlp",
            "rfm_choice",
            "rfm",
            "cv_choice",
            "cv",
        ],
        episode_rows,
    )?;
    if config.report.svg {
        let bars: Vec<Bar> = s
            .figure
            .entries
            .iter()
            .map(|e| Bar {
                label: e.agent.clone(),
                value: e.mean_effectiveness,
                std_error: e.std_error,
            })
            .collect();
        let title = format!("Effectiveness over {} {} tasks", s.figure.tasks.len(), s.figure.scope);
        let path = dir.join("figure3_effectiveness.svg");
        fs::write(&path, bar_chart(&title, "effectiveness", &bars)).map_err(|e| CliError::io(&path, e))?;
    }
    let path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(s).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;

    let mut files = BTreeMap::new();
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .flatten()
        .map(|e| e.file_name().to_string_lossy().to_string())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    names.sort();
    for n in names {
        let bytes = fs::read(dir.join(&n)).map_err(|e| CliError::io(&dir.join(&n), e))?;
        files.insert(n, sha256_hex(&bytes));
    }
    let manifest = ReportManifest { config_hash: hash, files };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}
