//! Intervention functions `s'_a(s)`: single state edits applied by a central
//! agent at a fixed timestep, and the per-game candidate generators.
//!
//! Packing rule for `MoveWaste` / `MoveApples`: cells of the region are
//! grouped into lines (columns for up/down/centre, rows for left/right). The
//! number of moved items in each line is kept and they are rewritten onto
//! the line's first cells in the packing order. Up sorts rows ascending,
//! down descending, left/right likewise by column, and "vertical centre"
//! sorts by distance from the line's middle row, the upper cell first on
//! ties, so cells fill alternately just above and below the middle.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::cleanup::{CLEANUP_INTERVENE_T, MOVE_TARGETS};
use crate::engine::{GameKind, GameState};
use crate::error::InterventionError;
use crate::grid::{CellKind, GridPos};
use crate::harvest::HARVEST_INTERVENE_T;
use crate::rng::{split_rng, StreamRng};

/// Packing side for `MoveWaste` / `MoveApples`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    VerticalCenter,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::VerticalCenter,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Intervention {
    Null,
    /// `location` indexes the fixed target list; `target` is where the
    /// player actually lands after relocation off occupied cells.
    MovePlayer { player: usize, location: usize, target: GridPos },
    MoveWaste { direction: Direction },
    MoveApples { direction: Direction },
    AddWall { cells: Vec<GridPos> },
    RemoveWall { cells: Vec<GridPos> },
}

/// Intervention families that define tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MovePlayer,
    MoveWaste,
    MoveApples,
    AddWall,
    RemoveWall,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::MovePlayer,
        Family::MoveWaste,
        Family::MoveApples,
        Family::AddWall,
        Family::RemoveWall,
    ];

    pub fn game(self) -> GameKind {
        match self {
            Family::MovePlayer | Family::MoveWaste | Family::MoveApples => GameKind::Cleanup,
            Family::AddWall | Family::RemoveWall => GameKind::Harvest,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::MovePlayer => "move_player",
            Family::MoveWaste => "move_waste",
            Family::MoveApples => "move_apples",
            Family::AddWall => "add_wall",
            Family::RemoveWall => "remove_wall",
        }
    }

    pub fn for_game(game: GameKind) -> Vec<Family> {
        Family::ALL.into_iter().filter(|f| f.game() == game).collect()
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown intervention family {s:?}"))
    }
}

/// Timestep at which a game's interventions happen.
pub fn intervene_t(game: GameKind) -> u32 {
    match game {
        GameKind::Cleanup => CLEANUP_INTERVENE_T,
        GameKind::Harvest => HARVEST_INTERVENE_T,
    }
}

impl Intervention {
    pub fn family(&self) -> Option<Family> {
        match self {
            Intervention::Null => None,
            Intervention::MovePlayer { .. } => Some(Family::MovePlayer),
            Intervention::MoveWaste { .. } => Some(Family::MoveWaste),
            Intervention::MoveApples { .. } => Some(Family::MoveApples),
            Intervention::AddWall { .. } => Some(Family::AddWall),
            Intervention::RemoveWall { .. } => Some(Family::RemoveWall),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Intervention::Null)
    }

    /// Check the edit against `state` without applying it.
    pub fn validate(&self, state: &GameState) -> Result<(), InterventionError> {
        if let Some(family) = self.family() {
            if family.game() != state.kind {
                return Err(InterventionError::WrongGame {
                    family: family.name(),
                    game: state.kind,
                });
            }
        }
        let in_bounds = |cell: GridPos| {
            if state.grid.contains(cell) {
                Ok(())
            } else {
                Err(InterventionError::OutOfBounds { cell })
            }
        };
        match self {
            Intervention::Null | Intervention::MoveWaste { .. } | Intervention::MoveApples { .. } => Ok(()),
            Intervention::MovePlayer { player, target, .. } => {
                if *player >= state.players.len() {
                    return Err(InterventionError::UnknownPlayer { player: *player });
                }
                in_bounds(*target)?;
                if state.grid.get(*target) == CellKind::Wall {
                    return Err(InterventionError::MoveIntoWall {
                        player: *player,
                        cell: *target,
                    });
                }
                match state.player_at(*target) {
                    Some(other) if other != *player => Err(InterventionError::MoveIntoPlayer {
                        player: *player,
                        other,
                        cell: *target,
                    }),
                    _ => Ok(()),
                }
            }
            Intervention::AddWall { cells } => {
                for &cell in cells {
                    in_bounds(cell)?;
                    if state.player_at(cell).is_some() {
                        return Err(InterventionError::WallOverPlayer { cell });
                    }
                    match state.grid.get(cell) {
                        CellKind::Apple => return Err(InterventionError::WallOverApple { cell }),
                        CellKind::Wall => return Err(InterventionError::WallOverWall { cell }),
                        _ => {}
                    }
                }
                Ok(())
            }
            Intervention::RemoveWall { cells } => {
                for &cell in cells {
                    in_bounds(cell)?;
                    if state.grid.get(cell) != CellKind::Wall {
                        return Err(InterventionError::NotAWall { cell });
                    }
                }
                Ok(())
            }
        }
    }
}

/// Apply `intervention` to a copy of `state`. The timestep, horizon,
/// environment stream and returns are untouched.
pub fn apply(intervention: &Intervention, state: &GameState) -> Result<GameState, InterventionError> {
    intervention.validate(state)?;
    let mut out = state.clone();
    match intervention {
        Intervention::Null => {}
        Intervention::MovePlayer { player, target, .. } => out.players[*player].pos = *target,
        Intervention::MoveWaste { direction } => {
            let cells: Vec<GridPos> = state.layout.aquifer.positions().collect();
            pack(&mut out, &cells, *direction, CellKind::DirtyWater, CellKind::CleanWater);
        }
        Intervention::MoveApples { direction } => {
            let cells: Vec<GridPos> = state
                .layout
                .field
                .positions()
                .filter(|&p| state.player_at(p).is_none() && matches!(state.grid.get(p), CellKind::Apple | CellKind::EmptyField))
                .collect();
            pack(&mut out, &cells, *direction, CellKind::Apple, CellKind::EmptyField);
        }
        Intervention::AddWall { cells } => {
            for &c in cells {
                out.grid.set(c, CellKind::Wall);
            }
        }
        Intervention::RemoveWall { cells } => {
            for &c in cells {
                out.grid.set(c, CellKind::EmptyField);
            }
        }
    }
    Ok(out)
}

/// Repack `item` cells within `cells` toward `direction`; other cells of the
/// region become `background`.
fn pack(state: &mut GameState, cells: &[GridPos], direction: Direction, item: CellKind, background: CellKind) {
    let by_column = matches!(direction, Direction::Up | Direction::Down | Direction::VerticalCenter);
    let mut lines: BTreeMap<usize, Vec<GridPos>> = BTreeMap::new();
    for &p in cells {
        lines.entry(if by_column { p.col } else { p.row }).or_default().push(p);
    }
    for line in lines.values_mut() {
        let count = line.iter().filter(|&&p| state.grid.get(p) == item).count();
        match direction {
            Direction::Up => line.sort_by_key(|p| p.row),
            Direction::Down => line.sort_by_key(|p| std::cmp::Reverse(p.row)),
            Direction::Left => line.sort_by_key(|p| p.col),
            Direction::Right => line.sort_by_key(|p| std::cmp::Reverse(p.col)),
            Direction::VerticalCenter => {
                let lo = line.iter().map(|p| p.row).min().unwrap_or(0);
                let hi = line.iter().map(|p| p.row).max().unwrap_or(0);
                // Twice the distance to the middle keeps everything integral.
                line.sort_by_key(|p| ((2 * p.row).abs_diff(lo + hi), p.row));
            }
        }
        for (i, &p) in line.iter().enumerate() {
            state.grid.set(p, if i < count { item } else { background });
        }
    }
}

/// Candidates for one task on one episode, null intervention first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub family: Family,
    pub seed: u64,
    pub intervene_t: u32,
    pub candidates: Vec<Intervention>,
}

fn check_time(state: &GameState) -> Result<(), InterventionError> {
    let expected = intervene_t(state.kind);
    if state.t != expected {
        return Err(InterventionError::WrongTime {
            expected,
            found: state.t,
        });
    }
    Ok(())
}

/// Nearest non-wall cell not held by another player, by Chebyshev distance,
/// first in row-major order on ties.
pub fn nearest_free_cell(state: &GameState, player: usize, target: GridPos) -> GridPos {
    let free = |p: GridPos| {
        state.grid.get(p) != CellKind::Wall && state.player_at(p).is_none_or(|other| other == player)
    };
    if free(target) {
        return target;
    }
    state
        .grid
        .positions()
        .filter(|&p| free(p))
        .min_by_key(|&p| (p.chebyshev(target), p.row, p.col))
        .unwrap_or(target)
}

/// Fixed Cleanup candidate sets: 35 player moves, or 5 waste or apple
/// packings, each preceded by the null intervention.
pub fn cleanup_candidates(state: &GameState, family: Family) -> Result<CandidateSet, InterventionError> {
    if family.game() != GameKind::Cleanup || state.kind != GameKind::Cleanup {
        return Err(InterventionError::WrongGame {
            family: family.name(),
            game: state.kind,
        });
    }
    check_time(state)?;
    let mut candidates = vec![Intervention::Null];
    match family {
        Family::MovePlayer => {
            for player in 0..state.players.len() {
                for (location, &spot) in MOVE_TARGETS.iter().enumerate() {
                    candidates.push(Intervention::MovePlayer {
                        player,
                        location,
                        target: nearest_free_cell(state, player, spot),
                    });
                }
            }
        }
        Family::MoveWaste => candidates.extend(Direction::ALL.map(|direction| Intervention::MoveWaste { direction })),
        Family::MoveApples => candidates.extend(Direction::ALL.map(|direction| Intervention::MoveApples { direction })),
        Family::AddWall | Family::RemoveWall => unreachable!(),
    }
    Ok(CandidateSet {
        family,
        seed: 0,
        intervene_t: state.t,
        candidates,
    })
}

/// Attempts allowed per requested Harvest candidate.
pub const ATTEMPTS_PER_CANDIDATE: usize = 200;

/// Draw the three-way split of `n` cells from a Dirichlet-multinomial with
/// concentration (1/2, 2, 1/2); returns the sizes of the first two parts.
pub fn dirichlet_multinomial_split(n: usize, rng: &mut StreamRng) -> (usize, usize) {
    let alpha = [0.5, 2.0, 0.5];
    let g: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = g.iter().sum();
    let p0 = g[0] / total;
    let p1 = g[1] / total;
    let n0 = Binomial::new(n as u64, p0.clamp(0.0, 1.0)).expect("valid binomial").sample(rng) as usize;
    let rest = n - n0;
    let cond = if p0 < 1.0 { (p1 / (1.0 - p0)).clamp(0.0, 1.0) } else { 0.0 };
    let n1 = Binomial::new(rest as u64, cond).expect("valid binomial").sample(rng) as usize;
    (n0, n1)
}

/// Contiguous run of cells through `anchor` along one axis satisfying `ok`.
fn extent(state: &GameState, anchor: GridPos, horizontal: bool, ok: &impl Fn(GridPos) -> bool) -> (Vec<GridPos>, Vec<GridPos>) {
    let (dr, dc) = if horizontal { (0, 1) } else { (1, 0) };
    let walk = |sign: isize| {
        let mut out = Vec::new();
        let mut cur = anchor;
        while let Some(next) = state.grid.offset(cur, sign * dr, sign * dc) {
            if !ok(next) {
                break;
            }
            out.push(next);
            cur = next;
        }
        out
    };
    (walk(-1), walk(1))
}

fn is_border(state: &GameState, p: GridPos) -> bool {
    p.row == 0 || p.col == 0 || p.row + 1 == state.grid.height() || p.col + 1 == state.grid.width()
}

/// Procedurally generated wall edits for Harvest: `count` distinct valid
/// candidates after the null intervention.
///
/// Removal anchors are interior wall cells; the segment extends in each
/// direction along the chosen axis by a length uniform on zero to the
/// reachable wall run. Addition anchors are cells free to build on (no wall,
/// player or apple); the maximal free run through the anchor is split in
/// three by a Dirichlet-multinomial(1/2, 2, 1/2) draw and the middle part
/// becomes the new wall.
pub fn harvest_candidates(state: &GameState, family: Family, seed: u64, count: usize) -> Result<CandidateSet, InterventionError> {
    if family.game() != GameKind::Harvest || state.kind != GameKind::Harvest {
        return Err(InterventionError::WrongGame {
            family: family.name(),
            game: state.kind,
        });
    }
    check_time(state)?;
    let mut rng = split_rng(seed, &format!("candidates/{}", family.name()));
    let occupied = state.occupancy();
    let buildable = |p: GridPos| {
        !occupied[state.grid.index(p)] && !matches!(state.grid.get(p), CellKind::Wall | CellKind::Apple)
    };
    let removable = |p: GridPos| state.grid.get(p) == CellKind::Wall && !is_border(state, p);
    let anchors: Vec<GridPos> = match family {
        Family::AddWall => state.grid.positions().filter(|&p| buildable(p)).collect(),
        _ => state.grid.positions().filter(|&p| removable(p)).collect(),
    };

    let mut seen: HashSet<Vec<GridPos>> = HashSet::new();
    let mut candidates = vec![Intervention::Null];
    let mut attempts = 0;
    while seen.len() < count && attempts < ATTEMPTS_PER_CANDIDATE * count && !anchors.is_empty() {
        attempts += 1;
        let anchor = anchors[rng.random_range(0..anchors.len())];
        let horizontal = rng.random::<bool>();
        let mut cells = match family {
            Family::AddWall => {
                let (before, after) = extent(state, anchor, horizontal, &buildable);
                let mut run: Vec<GridPos> = before.into_iter().rev().collect();
                run.push(anchor);
                run.extend(after);
                let (n0, n1) = dirichlet_multinomial_split(run.len(), &mut rng);
                run[n0..n0 + n1].to_vec()
            }
            _ => {
                let (before, after) = extent(state, anchor, horizontal, &removable);
                let a = rng.random_range(0..=before.len());
                let b = rng.random_range(0..=after.len());
                let mut run: Vec<GridPos> = before[..a].iter().rev().copied().collect();
                run.push(anchor);
                run.extend_from_slice(&after[..b]);
                run
            }
        };
        if cells.is_empty() {
            continue;
        }
        cells.sort();
        if seen.insert(cells.clone()) {
            candidates.push(match family {
                Family::AddWall => Intervention::AddWall { cells },
                _ => Intervention::RemoveWall { cells },
            });
        }
    }
    if seen.len() < count {
        return Err(InterventionError::Shortfall {
            family: family.name(),
            wanted: count,
            found: seen.len(),
            partial: candidates,
        });
    }
    Ok(CandidateSet {
        family,
        seed,
        intervene_t: state.t,
        candidates,
    })
}

/// Candidate set for any family.
pub fn candidates_for(state: &GameState, family: Family, seed: u64, harvest_count: usize) -> Result<CandidateSet, InterventionError> {
    match family.game() {
        GameKind::Cleanup => cleanup_candidates(state, family),
        GameKind::Harvest => harvest_candidates(state, family, seed, harvest_count),
    }
}
