//! Acceptance suite: one check per criterion, each printing a PASS or FAIL
//! line with its runtime. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 3`.
//!
//! Criterion 9 runs the full desk-scale pipeline into a persistent
//! directory (`OBOE_ACCEPTANCE_DIR`, default `runs/desk` under the
//! workspace). A rerun with an unchanged configuration skips every stage
//! and checks the recorded artifacts and fresh-run timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use oboe_agents::oboe::argbest;
use oboe_agents::stats::{mean, std_error, welch_greater};
use oboe_agents::{
    cv_select, effectiveness, effectiveness_with_se, gini, oboe_select, EpisodeOutcomes, Goal, Holdout, RolloutOracle, SocialMetric,
};
use oboe_cli::config::DEFAULT_CONFIG;
use oboe_cli::report::load_summary;
use oboe_cli::{run_stage, RunConfig, RunPaths, Stage};
use oboe_core::cleanup::{cleanup_initial_state, waste_density, CleanupParams};
use oboe_core::datasets::{extract_graph, sha256_hex, EpisodeRecord, FeatureConfig, FlatLayout, GraphSample};
use oboe_core::engine::{run_episode, EpisodeRunner, Layout, RecordOptions};
use oboe_core::grid::{CellMask, Grid};
use oboe_core::harvest::{generate_harvest_map, harvest_initial_state, HarvestParams};
use oboe_core::interventions::{candidates_for, dirichlet_multinomial_split, intervene_t, Direction, Family};
use oboe_core::policies::{make_population, MixSpec, ScriptedPolicy};
use oboe_core::rng::{player_label, split_rng};
use oboe_core::{apply, Action, CellKind, GameKind, GameState, GridPos, Intervention, Scenario, NUM_PLAYERS};
use oboe_models::{mlp, train, Aggregation, MlpModel, Model, RfmModel, TrainerConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.5758293035489;

/// `observed` successes out of `n` are within the binomial 99% interval
/// around `p`.
fn within_binomial_ci(observed: u64, n: u64, p: f64) -> bool {
    let phat = observed as f64 / n as f64;
    (phat - p).abs() <= Z99 * (p * (1.0 - p) / n as f64).sqrt()
}

// ---------------------------------------------------------------- 1

fn tiny_config(out: &Path, workers: usize) -> RunConfig {
    let overrides: Vec<String> = [
        "cleanup.horizon=400",
        "harvest.horizon=120",
        "cleanup.observational_episodes=6",
        "harvest.observational_episodes=6",
        "cleanup.evaluation_episodes=3",
        "harvest.evaluation_episodes=3",
        "harvest.harvest_candidates=4",
        "counterfactual.completions=2",
        "cleanup.mlp.trainer.max_steps=20",
        "cleanup.mlp.trainer.eval_every=10",
        "cleanup.rfm.trainer.max_steps=20",
        "cleanup.rfm.trainer.eval_every=10",
        "harvest.mlp.trainer.max_steps=20",
        "harvest.mlp.trainer.eval_every=10",
        "harvest.rfm.trainer.max_steps=20",
        "harvest.rfm.trainer.eval_every=10",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("out_dir={:?}", out.to_string_lossy()), format!("workers={workers}")])
    .collect();
    RunConfig::from_toml(DEFAULT_CONFIG, &overrides).expect("tiny config is valid")
}

/// sha256 of every file under `root` except the timing log.
fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) {
        for e in std::fs::read_dir(dir).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().to_string();
                if rel != "timings.json" {
                    out.insert(rel, sha256_hex(&std::fs::read(&p).unwrap()));
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_1() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_stage(&tiny_config(&a, 1), Stage::All).map_err(|e| e.to_string())?;
    run_stage(&tiny_config(&b, 2), Stage::All).map_err(|e| e.to_string())?;
    let (ha, hb) = (tree_hashes(&a), tree_hashes(&b));
    ensure(ha.len() >= 20, || format!("only {} artifacts", ha.len()))?;
    ensure(ha == hb, || {
        let diff: Vec<&String> = ha.keys().filter(|k| ha.get(*k) != hb.get(*k)).collect();
        format!("artifacts differ between runs: {diff:?}")
    })?;
    // Each stage rerun on its own, after deleting its outputs.
    for (stage, sub) in [
        (Stage::Collect, "observational"),
        (Stage::Train, "models"),
        (Stage::Counterfactual, "counterfactual"),
        (Stage::Report, "reports"),
    ] {
        std::fs::remove_dir_all(a.join(sub)).map_err(|e| e.to_string())?;
        run_stage(&tiny_config(&a, 1), stage).map_err(|e| e.to_string())?;
        ensure(tree_hashes(&a) == hb, || format!("rerunning {sub} changed its artifacts"))?;
    }
    // An up-to-date rerun touches nothing, not even the timing log.
    let timings = std::fs::read(a.join("timings.json")).map_err(|e| e.to_string())?;
    run_stage(&tiny_config(&a, 1), Stage::All).map_err(|e| e.to_string())?;
    ensure(std::fs::read(a.join("timings.json")).unwrap() == timings, || "up-to-date rerun redid work".into())?;
    ensure(tree_hashes(&a) == hb, || "up-to-date rerun changed artifacts".into())?;
    Ok(format!("{} artifacts identical across runs, worker counts and per-stage reruns", ha.len()))
}

// ---------------------------------------------------------------- 2

fn cleanup_spawn_rate(level: f64) -> Result<(u64, u64, f64), String> {
    let params = CleanupParams {
        waste_spawn_prob: 0.0,
        ..CleanupParams::default()
    };
    let mut state = cleanup_initial_state(&params, u32::MAX, 3);
    let aquifer: Vec<GridPos> = state.layout.aquifer.positions().collect();
    let dirty = (level * params.saturation_density * aquifer.len() as f64).round() as usize;
    for (i, &p) in aquifer.iter().enumerate() {
        state.grid.set(p, if i < dirty { CellKind::DirtyWater } else { CellKind::CleanWater });
    }
    let w = waste_density(&state);
    let p = params.apple_spawn_probability(w);
    let field: Vec<GridPos> = state.layout.field.positions().collect();
    let noop = [Action::NoOp; NUM_PLAYERS];
    let (mut trials, mut spawned) = (0u64, 0u64);
    while trials < 100_000 {
        let occupied = state.occupancy();
        let eligible: Vec<GridPos> = field
            .iter()
            .copied()
            .filter(|&c| state.grid.get(c) == CellKind::EmptyField && !occupied[state.grid.index(c)])
            .collect();
        state.step(&noop).map_err(|e| e.to_string())?;
        trials += eligible.len() as u64;
        for c in eligible {
            if state.grid.get(c) == CellKind::Apple {
                spawned += 1;
                state.grid.set(c, CellKind::EmptyField);
            }
        }
        ensure(waste_density(&state) == w, || "waste density drifted".into())?;
    }
    Ok((spawned, trials, p))
}

/// A Harvest state on an open map whose every interior cell is field,
/// with players parked in the top row.
fn open_harvest_state() -> GameState {
    let map = generate_harvest_map(0);
    let mut state = harvest_initial_state(&map, HarvestParams::default(), u32::MAX, 4);
    let (h, w) = (state.grid.height(), state.grid.width());
    let mut grid = Grid::filled(h, w, CellKind::EmptyField);
    let mut field = CellMask::new(h, w);
    for p in grid.positions().collect::<Vec<_>>() {
        if p.row == 0 || p.col == 0 || p.row == h - 1 || p.col == w - 1 {
            grid.set(p, CellKind::Wall);
        } else {
            field.set(p, true);
        }
    }
    for (i, pl) in state.players.iter_mut().enumerate() {
        pl.pos = GridPos::new(1, 1 + i);
    }
    state.layout = std::sync::Arc::new(Layout {
        aquifer: CellMask::new(h, w),
        field,
        rooms: Vec::new(),
        spawns: state.players.iter().map(|p| p.pos).collect(),
    });
    state.grid = grid;
    state
}

fn criterion_2() -> Check {
    let mut lines = Vec::new();
    let params = CleanupParams::default();
    for level in [0.0, 0.25, 0.5, 0.75] {
        let (k, n, p) = cleanup_spawn_rate(level)?;
        ensure(within_binomial_ci(k, n, p), || {
            format!("cleanup density {level} d_sat: {k}/{n} spawns vs p = {p}")
        })?;
        lines.push(format!("cleanup {level}·d_sat {:.4}/{p:.4}", k as f64 / n as f64));
    }
    // Beyond saturation with no cleaning: no apple ever appears.
    let mut state = cleanup_initial_state(&params, 1000, 5);
    ensure(waste_density(&state) > params.saturation_density, || "initial density not past saturation".into())?;
    while !state.is_terminal() {
        state.step(&[Action::NoOp; NUM_PLAYERS]).map_err(|e| e.to_string())?;
        ensure(state.grid.count(CellKind::Apple) == 0, || format!("apple spawned past saturation at t = {}", state.t))?;
    }

    let hp = HarvestParams::default();
    let base = open_harvest_state();
    let targets: Vec<GridPos> = [4, 9, 14, 19]
        .iter()
        .flat_map(|&r| [4, 9, 14, 19, 24, 29].map(|c| GridPos::new(r, c)))
        .collect();
    for k in 0..=8usize {
        let mut pinned = base.clone();
        for &t in &targets {
            let ring: Vec<GridPos> = (-2isize..=2)
                .flat_map(|dr| (-2isize..=2).map(move |dc| (dr, dc)))
                .filter(|&d| d != (0, 0))
                .map(|(dr, dc)| GridPos::new((t.row as isize + dr) as usize, (t.col as isize + dc) as usize))
                .collect();
            for &c in ring.iter().take(k) {
                pinned.grid.set(c, CellKind::Apple);
            }
        }
        let mut state = pinned.clone();
        let (mut trials, mut spawned) = (0u64, 0u64);
        while trials < 100_000 {
            state.grid = pinned.grid.clone();
            state.step(&[Action::NoOp; NUM_PLAYERS]).map_err(|e| e.to_string())?;
            trials += targets.len() as u64;
            spawned += targets.iter().filter(|&&t| state.grid.get(t) == CellKind::Apple).count() as u64;
        }
        let p = hp.respawn_probability(k);
        if p == 0.0 {
            ensure(spawned == 0, || format!("harvest: {spawned} respawns with no apples nearby"))?;
        } else {
            ensure(within_binomial_ci(spawned, trials, p), || {
                format!("harvest {k} neighbours: {spawned}/{trials} vs p = {p}")
            })?;
        }
        lines.push(format!("harvest k={k} {:.4}/{p:.4}", spawned as f64 / trials as f64));
    }
    Ok(lines.join(", "))
}

// ---------------------------------------------------------------- 3

/// Marginal pmf of the middle count of a Dirichlet-multinomial with
/// concentration (1/2, 2, 1/2), by enumerating every three-way split.
fn middle_pmf(n: usize) -> Vec<f64> {
    let alpha = [0.5, 2.0, 0.5];
    let a0: f64 = alpha.iter().sum();
    let ln_fact = |k: usize| ln_gamma(k as f64 + 1.0);
    let mut pmf = vec![0.0; n + 1];
    for k0 in 0..=n {
        for k1 in 0..=n - k0 {
            let k = [k0, k1, n - k0 - k1];
            let mut l = ln_fact(n) + ln_gamma(a0) - ln_gamma(n as f64 + a0);
            for i in 0..3 {
                l += ln_gamma(k[i] as f64 + alpha[i]) - ln_gamma(alpha[i]) - ln_fact(k[i]);
            }
            pmf[k1] += l.exp();
        }
    }
    pmf
}

fn criterion_3() -> Check {
    let (mut rooms, mut perforated, mut removed) = (0u64, 0u64, 0u64);
    let (mut wall_cells, mut holes) = (0u64, 0u64);
    for seed in 0..10_000u64 {
        let map = generate_harvest_map(seed);
        map.check().map_err(|e| format!("map {seed}: {e}"))?;
        for r in &map.rooms {
            rooms += 1;
            perforated += r.perforated as u64;
            removed += r.walls_removed as u64;
            if r.perforated {
                wall_cells += r.wall_cells.len() as u64;
                holes += r.holes.len() as u64;
            }
        }
    }
    let cfg = oboe_core::harvest::ProcGenConfig::default();
    for (name, k, n, p) in [
        ("perforation", perforated, rooms, cfg.perforation_prob),
        ("hole", holes, wall_cells, cfg.hole_prob),
        ("walls-removed", removed, rooms, cfg.walls_removed_prob),
    ] {
        ensure(within_binomial_ci(k, n, p), || format!("{name} rate {k}/{n} vs {p}"))?;
    }

    let n = 12;
    let pmf = middle_pmf(n);
    ensure((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12, || "pmf does not sum to 1".into())?;
    let draws = 100_000;
    let mut counts = vec![0u64; n + 1];
    let mut rng = split_rng(5, "dirichlet-multinomial");
    for _ in 0..draws {
        let (_, middle) = dirichlet_multinomial_split(n, &mut rng);
        counts[middle] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&pmf)
        .map(|(&o, &p)| {
            let e = p * draws as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(n as f64).unwrap().cdf(chi2);
    ensure(p > 0.01, || format!("middle-segment lengths: chi2 {chi2:.2}, p {p:.4}"))?;
    Ok(format!(
        "10000 maps valid; perforation {:.4}, holes {:.4}, walls removed {:.4}; segment chi2 p = {p:.3}",
        perforated as f64 / rooms as f64,
        holes as f64 / wall_cells as f64,
        removed as f64 / rooms as f64
    ))
}

// ---------------------------------------------------------------- 4

fn episode_policies(game: GameKind, seed: u64) -> Vec<ScriptedPolicy> {
    let mix = match game {
        GameKind::Cleanup => MixSpec::CleanupRatio { prosocial: 2 },
        GameKind::Harvest => MixSpec::Harvest {
            prosociality: 0.5,
            sustainability: 0.5,
        },
    };
    make_population(game, &mix, 0.05, seed).unwrap()
}

fn criterion_4() -> Check {
    let mut checked = 0usize;
    for seed in 0..10u64 {
        for game in [GameKind::Cleanup, GameKind::Harvest] {
            let scenario = Scenario::new(game);
            let policies = episode_policies(game, seed);
            let init = scenario.initial_state(seed, &policies);
            let t_star = intervene_t(game);
            let opts = RecordOptions {
                stride: 0,
                extra: vec![t_star],
                keep_steps: true,
            };
            let traj = run_episode(init.clone(), &policies, seed, opts).map_err(|e| e.to_string())?;
            let header = oboe_cli::pipeline::episode_header(&RunConfig::default(), game, "acceptance", seed as usize);
            let record = EpisodeRecord::from_trajectory(header, &traj);
            let mut runner = EpisodeRunner::new(init, &policies, seed, RecordOptions::outcomes_only()).map_err(|e| e.to_string())?;
            runner.run_until(t_star).map_err(|e| e.to_string())?;
            let state = runner.state().clone();
            let prefix_returns: Vec<f64> = (0..NUM_PLAYERS).map(|i| traj.rewards[..t_star as usize].iter().map(|r| r[i]).sum()).collect();
            ensure(Some(&oboe_core::datasets::SnapshotRecord::of(&state)) == record.snapshot_at(t_star), || {
                format!("{} seed {seed}: state at t* differs from the uninterrupted episode", game.name())
            })?;
            ensure(apply(&Intervention::Null, &state).map_err(|e| e.to_string())? == state, || "null is not the identity".into())?;
            for family in Family::for_game(game) {
                let set = candidates_for(&state, family, seed, 15).map_err(|e| e.to_string())?;
                let expected = match family {
                    Family::MovePlayer => 36,
                    Family::MoveWaste | Family::MoveApples => 6,
                    Family::AddWall | Family::RemoveWall => 16,
                };
                ensure(set.candidates.len() == expected, || {
                    format!("{}: {} candidates, expected {expected}", family.name(), set.candidates.len())
                })?;
                ensure(set.candidates[0].is_null(), || "null candidate is not first".into())?;
                for c in &set.candidates {
                    let edited = apply(c, &state).map_err(|e| format!("{} candidate {c:?} invalid: {e}", family.name()))?;
                    ensure(edited.t == state.t && edited.returns_so_far() == prefix_returns, || "edit changed time or returns".into())?;
                    ensure(edited.rng == state.rng, || "edit changed the environment stream".into())?;
                    let count = |s: &GameState, k: CellKind| s.grid.count(k);
                    match c {
                        Intervention::MoveWaste { .. } => ensure(
                            count(&edited, CellKind::DirtyWater) == count(&state, CellKind::DirtyWater)
                                && count(&edited, CellKind::CleanWater) == count(&state, CellKind::CleanWater),
                            || "waste not conserved".into(),
                        )?,
                        Intervention::MoveApples { .. } => ensure(
                            count(&edited, CellKind::Apple) == count(&state, CellKind::Apple),
                            || "apples not conserved".into(),
                        )?,
                        Intervention::AddWall { cells } | Intervention::RemoveWall { cells } => {
                            let changed = edited.grid.cells().iter().zip(state.grid.cells()).filter(|(a, b)| a != b).count();
                            ensure(changed == cells.len(), || format!("wall edit changed {changed} cells for {}", cells.len()))?;
                        }
                        _ => {}
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} candidates valid across 20 episodes; prefixes match; counts 36/6/6 and 16/16"))
}

// ---------------------------------------------------------------- 5

fn random_sample(nodes: usize, d: usize, rng: &mut impl Rng) -> GraphSample {
    GraphSample {
        game: GameKind::Cleanup,
        num_agents: 5,
        num_nodes: nodes,
        node_dim: d,
        nodes: (0..nodes * d).map(|_| StandardNormal.sample(rng)).map(|v: f64| v as f32).collect(),
        global: rng.random_range(0.0..10.0f32),
        targets: (0..5).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

/// Worst relative error of analytic against central-difference gradients
/// over 100 random parameters. Draws whose step crosses a rectifier kink
/// are replaced; returns (worst, replaced).
fn gradient_check<M: Model>(model: &M, batch: &[&GraphSample]) -> (f64, usize) {
    let mut grad = vec![0.0; model.params().len()];
    model.loss_and_grad(batch, &mut grad).unwrap();
    let mut idx: Vec<usize> = (0..grad.len()).collect();
    idx.shuffle(&mut split_rng(12, "acceptance-gradcheck"));
    let h = 1e-4;
    let (mut worst, mut checked, mut replaced) = (0.0f64, 0, 0);
    for &i in &idx {
        if checked == 100 {
            break;
        }
        let (mut plus, mut minus) = (model.clone(), model.clone());
        plus.params_mut()[i] += h;
        minus.params_mut()[i] -= h;
        if plus.relu_pattern(batch).unwrap() != minus.relu_pattern(batch).unwrap() {
            replaced += 1;
            continue;
        }
        let fd = (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-7));
        checked += 1;
    }
    assert_eq!(checked, 100);
    (worst, replaced)
}

fn criterion_5() -> Check {
    let fc = FeatureConfig { return_so_far: false };
    let mut rng = split_rng(1, "acceptance-models");
    let samples: Vec<GraphSample> = (0..6).map(|_| random_sample(8, 22, &mut rng)).collect();
    let batch: Vec<&GraphSample> = samples.iter().collect();
    let mut m = MlpModel::new(GameKind::Cleanup, fc, FlatLayout::of(&samples[0], false), &[16, 8, 8, 5], 1);
    m.fit_normalization(&samples).unwrap();
    let (mlp_err, mlp_replaced) = gradient_check(&m, &batch);
    let mut r = RfmModel::new(GameKind::Cleanup, fc, 5, &[12, 8, 8], &[12, 8, 1], Aggregation::Sum, 2);
    r.fit_normalization(&samples);
    let (rfm_err, rfm_replaced) = gradient_check(&r, &batch);
    ensure(mlp_err < 1e-4 && rfm_err < 1e-4, || format!("gradient relative error mlp {mlp_err:e}, rfm {rfm_err:e}"))?;
    ensure(mlp_replaced < 10 && rfm_replaced < 10, || "too many draws straddled a kink".into())?;

    let state = cleanup_initial_state(&CleanupParams::default(), 1000, 5);
    let g = extract_graph(&state, FeatureConfig::default());
    let rfm = RfmModel::with_default_widths(GameKind::Cleanup, FeatureConfig::default(), 5);
    let base = rfm.predict(&g).unwrap();
    let mut prng = split_rng(0, "acceptance-perm");
    let mut worst_perm: f64 = 0.0;
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..g.num_nodes - 5).collect();
        perm.shuffle(&mut prng);
        for (a, b) in base.iter().zip(rfm.predict(&g.permute_locations(&perm)).unwrap()) {
            worst_perm = worst_perm.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    ensure(worst_perm <= 1e-9, || format!("permutation changed predictions by {worst_perm:e}"))?;

    let full = FeatureConfig::default();
    let cleanup = extract_graph(&cleanup_initial_state(&CleanupParams::default(), 1000, 0), full);
    let harvest = extract_graph(&harvest_initial_state(&generate_harvest_map(0), HarvestParams::default(), 1000, 0), full);
    let counts = [
        MlpModel::new(GameKind::Cleanup, full, FlatLayout::of(&cleanup, false), &mlp::default_widths(GameKind::Cleanup), 0).params.len(),
        MlpModel::new(GameKind::Harvest, full, FlatLayout::of(&harvest, false), &mlp::default_widths(GameKind::Harvest), 0).params.len(),
        RfmModel::with_default_widths(GameKind::Cleanup, full, 0).params.len(),
        RfmModel::with_default_widths(GameKind::Harvest, full, 0).params.len(),
    ];
    // Flat MLP input 341 x 23 + 1 (Cleanup) and 810 x 23 + 1 (Harvest);
    // RFM edge input 1 + 2 x 23, node input 23 + 1 + edge width.
    let expected = [
        7844 * 64 + 64 + 64 * 32 + 32 + 32 * 32 + 32 + 32 * 5 + 5,
        18631 * 128 + 128 + 3 * (128 * 128 + 128) + 128 * 5 + 5,
        (47 * 64 + 64) + (64 * 32 + 32) + (32 * 32 + 32) + (56 * 64 + 64) + (64 * 32 + 32) + (32 * 32 + 32) + (32 + 1),
        (47 * 128 + 128) + 4 * (128 * 128 + 128) + (152 * 128 + 128) + 4 * (128 * 128 + 128) + (128 + 1),
    ];
    ensure(counts == expected, || format!("parameter counts {counts:?}, expected {expected:?}"))?;

    // Linear targets with unit noise: the floor is MSE 1.
    let (nodes, d) = (6, 22);
    let dim = nodes * d;
    let mut wrng = split_rng(99, "weights");
    let w: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut wrng)).map(|v: f64| v * 2.0 / (dim as f64).sqrt()).collect())
        .collect();
    let mut drng = split_rng(1, "linear-task");
    let data: Vec<GraphSample> = (0..42_000)
        .map(|_| {
            let mut s = random_sample(nodes, d, &mut drng);
            s.targets = (0..5)
                .map(|i| {
                    let signal: f64 = s.nodes.iter().zip(&w[i]).map(|(&x, &c)| x as f64 * c).sum();
                    signal + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut drng)
                })
                .collect();
            s
        })
        .collect();
    let (train_set, val) = data.split_at(40_000);
    let mut m = MlpModel::new(GameKind::Cleanup, fc, FlatLayout::of(&train_set[0], false), &[64, 32, 32, 5], 7);
    m.fit_normalization(train_set).unwrap();
    let cfg = TrainerConfig {
        learning_rate: 3e-4,
        batch_size: 64,
        max_steps: 50_000,
        eval_every: 500,
        patience: 20,
        seed: 1,
        ..TrainerConfig::default()
    };
    let (best, curve) = train(m, &cfg, train_set, val).map_err(|e| e.to_string())?;
    let v = best.loss(&val.iter().collect::<Vec<_>>()).unwrap();
    ensure(v <= 1.1, || format!("validation MSE {v} against noise floor 1"))?;
    Ok(format!(
        "grad rel err mlp {mlp_err:.1e}, rfm {rfm_err:.1e}; permutation {worst_perm:.1e}; counts {counts:?}; noise-floor MSE {v:.3} by step {}",
        curve.best_step
    ))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let tasks = [
        (SocialMetric::CollectiveReturn, Goal::Maximize),
        (SocialMetric::CollectiveReturn, Goal::Minimize),
        (SocialMetric::GiniIndex, Goal::Maximize),
        (SocialMetric::GiniIndex, Goal::Minimize),
    ];
    let mut non_null = 0;
    for i in 0..50u64 {
        let game = if i % 2 == 0 { GameKind::Cleanup } else { GameKind::Harvest };
        let families = Family::for_game(game);
        let family = families[(i / 2) as usize % families.len()];
        let (metric, goal) = tasks[(i / 2) as usize % tasks.len()];
        let seed = 1000 + i;
        let mut policies = episode_policies(game, seed);
        for p in &mut policies {
            p.deterministic = true;
            p.epsilon = 0.0;
        }
        let init = Scenario::new(game).initial_state(seed, &policies);
        let mut runner = EpisodeRunner::new(init, &policies, seed, RecordOptions::outcomes_only()).map_err(|e| e.to_string())?;
        runner.run_until(intervene_t(game)).map_err(|e| e.to_string())?;
        let state = runner.state().clone();
        let streams = runner.streams().to_vec();
        let set = candidates_for(&state, family, seed, 15).map_err(|e| e.to_string())?;

        let mut values = Vec::new();
        for c in &set.candidates {
            let edited = apply(c, &state).map_err(|e| e.to_string())?;
            let mut r = EpisodeRunner::resume(edited, &policies, streams.clone(), RecordOptions::outcomes_only()).map_err(|e| e.to_string())?;
            r.run_to_end().map_err(|e| e.to_string())?;
            values.push(metric.value(&r.state().returns_so_far()));
        }
        let exhaustive = argbest(&values, goal).ok_or("no candidates")?;
        // The oracle gets unrelated player streams: deterministic players
        // must not depend on them.
        let oracle = RolloutOracle {
            policies: &policies,
            streams: (0..policies.len()).map(|p| split_rng(seed, &format!("oracle/{}", player_label(p)))).collect(),
        };
        let chosen = oboe_select(&oracle, &state, &set.candidates, metric, goal).map_err(|e| e.to_string())?;
        ensure(chosen == exhaustive, || {
            format!("episode {i} ({}, {}): oracle chose {chosen}, exhaustive search {exhaustive}", game.name(), family.name())
        })?;
        non_null += (chosen != 0) as usize;
    }
    Ok(format!("50/50 episodes agree ({non_null} chose a non-null intervention)"))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    // Null always scores 1; the other candidate scores 0 or 2 with equal
    // probability in each of five completions.
    let mut expected = 0.0;
    for pattern in 0u32..32 {
        let vals: Vec<f64> = (0..5).map(|j| if pattern >> j & 1 == 1 { 2.0 } else { 0.0 }).collect();
        let estimate = vals[1..].iter().sum::<f64>() / 4.0;
        expected += if estimate > 1.0 { vals[0] } else { 1.0 };
    }
    expected /= 32.0;
    let mut rng = split_rng(7, "acceptance-degenerate");
    let row = |v: f64| Some(vec![v, 0.0, 0.0, 0.0, 0.0]);
    let outcomes: Vec<f64> = (0..10_000)
        .map(|i| {
            let ep = EpisodeOutcomes {
                episode_index: i,
                family: Family::MoveWaste,
                candidates: vec![Intervention::Null, Intervention::MoveWaste { direction: Direction::Up }],
                returns: vec![
                    (0..5).map(|_| row(1.0)).collect(),
                    (0..5).map(|_| row(if rng.random::<bool>() { 2.0 } else { 0.0 })).collect(),
                ],
            };
            cv_select(&ep, SocialMetric::CollectiveReturn, Goal::Maximize, Holdout::default()).unwrap().outcome
        })
        .collect();
    let (m, se) = (mean(&outcomes), std_error(&outcomes));
    ensure((m - expected).abs() <= 3.0 * se, || format!("mean {m} vs exact {expected} (se {se})"))?;
    Ok(format!("mean {m:.4} vs exact {expected:.4}, |diff| = {:.2} se", (m - expected).abs() / se))
}

// ---------------------------------------------------------------- 8

#[derive(Deserialize)]
struct WelchCase {
    a: Vec<f64>,
    b: Vec<f64>,
    p: String,
}

fn criterion_8() -> Check {
    let pairwise = |r: &[f64]| {
        let r: Vec<f64> = r.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = r.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let s: f64 = r.iter().flat_map(|a| r.iter().map(move |b| (a - b).abs())).sum();
        s / (2.0 * r.len() as f64 * total)
    };
    let mut rng = split_rng(8, "acceptance-gini");
    let mut worst_gini: f64 = 0.0;
    for i in 0..10_000 {
        let scale = [1.0, 100.0, 2000.0][i % 3];
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(-0.2..1.0) * scale).collect();
        worst_gini = worst_gini.max((gini(&r) - pairwise(&r)).abs());
    }
    ensure(worst_gini <= 1e-12, || format!("gini deviates by {worst_gini:e}"))?;

    for _ in 0..1000 {
        let cv: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..100.0)).collect();
        let random: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..100.0)).collect();
        let (c, r) = (mean(&cv), mean(&random));
        if c == r {
            continue;
        }
        ensure(effectiveness(c, r, c) == Some(1.0) && effectiveness(r, r, c) == Some(0.0), || {
            "effectiveness of CV or random is not exactly 1 or 0".into()
        })?;
        let e = effectiveness_with_se(&cv, &random, &cv).map_err(|e| e.to_string())?;
        ensure(e.value == Some(1.0) && e.std_error == Some(0.0), || format!("CV effectiveness {e:?}"))?;
    }

    let cases: Vec<WelchCase> = serde_json::from_str(include_str!("../../agents/tests/data/welch_reference.json")).map_err(|e| e.to_string())?;
    ensure(cases.len() == 100, || "reference needs 100 cases".into())?;
    let mut worst_p: f64 = 0.0;
    for c in &cases {
        let p: f64 = c.p.parse().map_err(|_| "bad reference p")?;
        worst_p = worst_p.max((welch_greater(&c.a, &c.b).map_err(|e| e.to_string())?.p - p).abs());
    }
    ensure(worst_p < 1e-6, || format!("Welch p deviates by {worst_p:e}"))?;
    Ok(format!("gini worst {worst_gini:.1e}; effectiveness exact; Welch p worst {worst_p:.1e} on 100 cases"))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Check {
    let root = std::env::var_os("OBOE_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../runs/desk"));
    let config = RunConfig::from_toml(DEFAULT_CONFIG, &[format!("out_dir={:?}", root.to_string_lossy())]).map_err(|e| e.to_string())?;
    let start = Instant::now();
    run_stage(&config, Stage::All).map_err(|e| e.to_string())?;
    let this_call = start.elapsed().as_secs_f64();
    let paths = RunPaths::new(&root);
    let timings: BTreeMap<String, f64> =
        serde_json::from_str(&std::fs::read_to_string(paths.timings()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let fresh: f64 = timings.values().sum();
    ensure(fresh < 3600.0, || format!("fresh run took {fresh:.0} s"))?;
    for f in [
        "table1_baselines.csv",
        "table2_filtering.csv",
        "table3_validation.csv",
        "table4_effects.csv",
        "figure3_effectiveness.csv",
        "summary.json",
    ] {
        ensure(paths.reports().join(f).is_file(), || format!("missing report {f}"))?;
    }
    let summary = load_summary(&paths).map_err(|e| e.to_string())?;
    for agent in ["mlp", "rfm"] {
        let e = summary.figure.entries.iter().find(|e| e.agent == agent).ok_or("missing figure entry")?;
        let ok = e.mean_effectiveness.is_some_and(f64::is_finite) && e.std_error.is_some_and(f64::is_finite);
        ensure(ok, || format!("{agent} effectiveness {:?} ± {:?}", e.mean_effectiveness, e.std_error))?;
    }
    ensure(!summary.rfm_beats_random.is_empty(), || "the RFM agent beats random on no task at p < 0.05".into())?;
    let fig = |a: &str| summary.figure.entries.iter().find(|e| e.agent == a).and_then(|e| e.mean_effectiveness).unwrap_or(f64::NAN);
    Ok(format!(
        "fresh run {fresh:.0} s (this call {this_call:.0} s); {} significant tasks ({} scope); effectiveness mlp {:.2}, rfm {:.2}; RFM beats random on {}",
        summary.significant_tasks,
        summary.figure.scope,
        fig("mlp"),
        fig("rfm"),
        summary.rfm_beats_random.join(", ")
    ))
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, f64, fn() -> Check); 9] = [
        (1, "determinism", 60.0, criterion_1),
        (2, "dynamics oracles", 120.0, criterion_2),
        (3, "procedural generation", 180.0, criterion_3),
        (4, "interventions", 120.0, criterion_4),
        (5, "models", 600.0, criterion_5),
        (6, "oracle-agent equivalence", 300.0, criterion_6),
        (7, "CV unbiasedness", 120.0, criterion_7),
        (8, "metrics and statistics", 60.0, criterion_8),
        (9, "end-to-end desk run", 3600.0, criterion_9),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        // The end-to-end limit applies to the recorded fresh run, checked inside.
        let result = match result {
            Ok(detail) if n != 9 && secs > limit => Err(format!("took {secs:.1} s, limit {limit} s; {detail}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {n} {name}: PASS ({secs:.1} s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({secs:.1} s) {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
