//! Procedural Harvest maps: four walled corner rooms holding the apple fields.
//!
//! Per room, in corner order: pick a size, build the inner walls (sometimes
//! perforated), cut an entrance corridor, seed apples, and sometimes knock
//! the walls down and place in-room spawn points. Finally the spawn list is
//! brought to exactly five players.
//!
//! A room's rectangle includes its own walls, which run along the two sides
//! facing the map's centre; the sides against the map border reuse the
//! border wall. Floor outside the rooms is `EmptyField` that never grows
//! apples; holes, corridors and knocked-down walls are `EmptySpace`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{HARVEST_HEIGHT, HARVEST_WIDTH};
use crate::engine::{RoomRect, NUM_PLAYERS};
use crate::grid::{CellKind, CellMask, Grid, GridPos};
use crate::rng::{split_rng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::TopLeft, Corner::TopRight, Corner::BottomLeft, Corner::BottomRight];

    fn is_top(self) -> bool {
        matches!(self, Corner::TopLeft | Corner::TopRight)
    }

    fn is_left(self) -> bool {
        matches!(self, Corner::TopLeft | Corner::BottomLeft)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcGenConfig {
    pub heights: Vec<usize>,
    pub widths: Vec<usize>,
    pub perforation_prob: f64,
    pub hole_prob: f64,
    pub apple_seed_fraction: f64,
    pub walls_removed_prob: f64,
    /// Open cells cut from the entrance into the room.
    pub corridor_length: usize,
}

impl Default for ProcGenConfig {
    fn default() -> Self {
        Self {
            heights: vec![6, 9],
            widths: vec![12, 15],
            perforation_prob: 0.2,
            hole_prob: 0.1,
            apple_seed_fraction: 0.06,
            walls_removed_prob: 0.3,
            corridor_length: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomDescriptor {
    pub corner: Corner,
    pub rect: RoomRect,
    pub height: usize,
    pub width: usize,
    pub perforated: bool,
    /// Every wall location of the room, holes included.
    pub wall_cells: Vec<GridPos>,
    pub holes: Vec<GridPos>,
    pub entrance: Option<GridPos>,
    /// Entrance cell followed by the cells cut inward.
    pub corridor: Vec<GridPos>,
    pub apple_seeds: usize,
    pub walls_removed: bool,
    /// In-room spawn points sampled when the walls were removed.
    pub spawns: Vec<GridPos>,
}

impl RoomDescriptor {
    /// Wall junction at the inner corner of the room.
    pub fn corner_cell(&self) -> GridPos {
        let (row, col) = wall_lines(self.corner, &self.rect);
        GridPos::new(row, col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcGenMap {
    pub seed: u64,
    pub grid: Grid,
    /// In-room cells eligible for apples.
    pub field: CellMask,
    pub rooms: Vec<RoomDescriptor>,
    /// Exactly five player spawn locations.
    pub spawns: Vec<GridPos>,
}

impl ProcGenMap {
    /// Structural invariants every generated map satisfies.
    pub fn check(&self) -> Result<(), String> {
        let fail = |m: String| Err(m);
        if self.rooms.len() != 4 {
            return fail(format!("{} rooms", self.rooms.len()));
        }
        let corners: std::collections::HashSet<Corner> = self.rooms.iter().map(|r| r.corner).collect();
        if corners.len() != 4 {
            return fail("rooms do not occupy four distinct corners".into());
        }
        if self.spawns.len() != NUM_PLAYERS {
            return fail(format!("{} spawn locations", self.spawns.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for &s in &self.spawns {
            if !seen.insert(s) {
                return fail(format!("duplicate spawn {s}"));
            }
            if !self.grid.get(s).is_walkable() {
                return fail(format!("spawn {s} on a wall"));
            }
        }
        for room in &self.rooms {
            let name = format!("{:?} room", room.corner);
            if ![6, 9].contains(&room.height) || ![12, 15].contains(&room.width) {
                return fail(format!("{name}: size {}x{}", room.height, room.width));
            }
            if !room.perforated && !room.holes.is_empty() {
                return fail(format!("{name}: holes in an unperforated wall"));
            }
            if let Some(e) = room.entrance {
                if !room.wall_cells.contains(&e) || e == room.corner_cell() || room.holes.iter().any(|h| h.chebyshev(e) <= 1) {
                    return fail(format!("{name}: entrance {e} is off the wall, at the corner or next to a hole"));
                }
            }
            if room.walls_removed {
                if room.spawns.len() != if room.height == 6 { 1 } else { 2 } {
                    return fail(format!("{name}: {} in-room spawns for height {}", room.spawns.len(), room.height));
                }
                if room.wall_cells.iter().any(|&c| self.grid.get(c) == CellKind::Wall) {
                    return fail(format!("{name}: walls left standing after removal"));
                }
            } else if !room.spawns.is_empty() {
                return fail(format!("{name}: in-room spawns without wall removal"));
            }
        }
        for (i, a) in self.rooms.iter().enumerate() {
            for b in &self.rooms[i + 1..] {
                if self.grid.positions().any(|p| a.rect.contains(p) && b.rect.contains(p)) {
                    return fail(format!("{:?} and {:?} rooms overlap", a.corner, b.corner));
                }
            }
        }
        Ok(())
    }
}

/// Row of the horizontal inner wall and column of the vertical inner wall.
fn wall_lines(corner: Corner, rect: &RoomRect) -> (usize, usize) {
    let row = if corner.is_top() { rect.top + rect.height - 1 } else { rect.top };
    let col = if corner.is_left() { rect.left + rect.width - 1 } else { rect.left };
    (row, col)
}

fn room_rect(corner: Corner, height: usize, width: usize) -> RoomRect {
    let top = if corner.is_top() { 1 } else { HARVEST_HEIGHT - 1 - height };
    let left = if corner.is_left() { 1 } else { HARVEST_WIDTH - 1 - width };
    RoomRect {
        top,
        left,
        height,
        width,
    }
}

fn choose<T: Copy>(rng: &mut StreamRng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

pub fn generate_harvest_map(seed: u64) -> ProcGenMap {
    generate_with(&ProcGenConfig::default(), seed)
}

pub fn generate_with(config: &ProcGenConfig, seed: u64) -> ProcGenMap {
    let mut rng = split_rng(seed, "harvest-map");
    let (h, w) = (HARVEST_HEIGHT, HARVEST_WIDTH);
    let mut grid = Grid::filled(h, w, CellKind::EmptyField);
    for pos in grid.positions().collect::<Vec<_>>() {
        if pos.row == 0 || pos.col == 0 || pos.row == h - 1 || pos.col == w - 1 {
            grid.set(pos, CellKind::Wall);
        }
    }
    let mut field = CellMask::new(h, w);
    let mut rooms = Vec::with_capacity(4);

    for corner in Corner::ALL {
        let height = choose(&mut rng, &config.heights);
        let width = choose(&mut rng, &config.widths);
        let rect = room_rect(corner, height, width);
        let (wall_row, wall_col) = wall_lines(corner, &rect);
        let corner_cell = GridPos::new(wall_row, wall_col);

        // Walls, with independent holes when perforated.
        let mut wall_cells: Vec<GridPos> = (rect.left..rect.left + rect.width)
            .map(|c| GridPos::new(wall_row, c))
            .collect();
        wall_cells.extend(
            (rect.top..rect.top + rect.height)
                .map(|r| GridPos::new(r, wall_col))
                .filter(|&p| p != corner_cell),
        );
        let perforated = rng.random::<f64>() < config.perforation_prob;
        let mut holes = Vec::new();
        for &cell in &wall_cells {
            if perforated && rng.random::<f64>() < config.hole_prob {
                holes.push(cell);
                grid.set(cell, CellKind::EmptySpace);
            } else {
                grid.set(cell, CellKind::Wall);
            }
        }

        // Entrance: a wall cell that is not the corner and not next to a hole.
        let candidates: Vec<GridPos> = wall_cells
            .iter()
            .copied()
            .filter(|&c| c != corner_cell && !holes.contains(&c) && holes.iter().all(|&hole| hole.chebyshev(c) > 1))
            .collect();
        let mut corridor = Vec::new();
        let entrance = if candidates.is_empty() {
            None
        } else {
            let e = choose(&mut rng, &candidates);
            // Cut inward, perpendicular to the wall the entrance sits on.
            let (dr, dc): (isize, isize) = if e.row == wall_row {
                (if corner.is_top() { -1 } else { 1 }, 0)
            } else {
                (0, if corner.is_left() { -1 } else { 1 })
            };
            corridor.push(e);
            let mut cur = e;
            for _ in 0..config.corridor_length {
                match grid.offset(cur, dr, dc) {
                    Some(next) if rect.contains(next) && grid.get(next) != CellKind::Wall => {
                        corridor.push(next);
                        cur = next;
                    }
                    _ => break,
                }
            }
            for &c in &corridor {
                grid.set(c, CellKind::EmptySpace);
            }
            Some(e)
        };

        // Apples: seed cells plus their eligible 8-neighbours.
        let eligible: Vec<GridPos> = (rect.top..rect.top + rect.height)
            .flat_map(|r| (rect.left..rect.left + rect.width).map(move |c| GridPos::new(r, c)))
            .filter(|&p| p.row != wall_row && p.col != wall_col && !corridor.contains(&p))
            .collect();
        for &p in &eligible {
            field.set(p, true);
        }
        let n_seeds = (config.apple_seed_fraction * eligible.len() as f64).floor() as usize;
        for i in sample(&mut rng, eligible.len(), n_seeds).into_iter() {
            let s = eligible[i];
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if let Some(n) = grid.offset(s, dr, dc) {
                        if field.get(n) {
                            grid.set(n, CellKind::Apple);
                        }
                    }
                }
            }
        }

        // Sometimes: in-room spawns and no walls at all.
        let walls_removed = rng.random::<f64>() < config.walls_removed_prob;
        let mut spawns = Vec::new();
        if walls_removed {
            let wanted = if height <= 6 { 1 } else { 2 };
            let bare: Vec<GridPos> = eligible
                .iter()
                .copied()
                .filter(|&p| grid.get(p) != CellKind::Apple)
                .collect();
            let pool = if bare.len() >= wanted { &bare } else { &eligible };
            let mut picked: Vec<usize> = sample(&mut rng, pool.len(), wanted.min(pool.len())).into_vec();
            picked.sort_unstable();
            spawns = picked.into_iter().map(|i| pool[i]).collect();
            for &c in &wall_cells {
                grid.set(c, CellKind::EmptySpace);
            }
        }

        rooms.push(RoomDescriptor {
            corner,
            rect,
            height,
            width,
            perforated,
            wall_cells,
            holes,
            entrance,
            corridor,
            apple_seeds: n_seeds,
            walls_removed,
            spawns,
        });
    }

    // Exactly five spawn points: subsample, or top up from non-room floor.
    let mut spawns: Vec<GridPos> = rooms.iter().flat_map(|r| r.spawns.iter().copied()).collect();
    if spawns.len() > NUM_PLAYERS {
        let mut keep: Vec<usize> = sample(&mut rng, spawns.len(), NUM_PLAYERS).into_vec();
        keep.sort_unstable();
        spawns = keep.into_iter().map(|i| spawns[i]).collect();
    } else if spawns.len() < NUM_PLAYERS {
        let outside: Vec<GridPos> = grid
            .positions()
            .filter(|&p| grid.get(p) == CellKind::EmptyField && !rooms.iter().any(|r| r.rect.contains(p)))
            .collect();
        let extra = NUM_PLAYERS - spawns.len();
        let mut picked: Vec<usize> = sample(&mut rng, outside.len(), extra).into_vec();
        picked.sort_unstable();
        spawns.extend(picked.into_iter().map(|i| outside[i]));
    }

    ProcGenMap {
        seed,
        grid,
        field,
        rooms,
        spawns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_hold_their_invariants() {
        for seed in 0..300 {
            generate_harvest_map(seed).check().unwrap();
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_harvest_map(77), generate_harvest_map(77));
        assert_ne!(generate_harvest_map(77).grid, generate_harvest_map(78).grid);
    }

    #[test]
    fn map_geometry() {
        let map = generate_harvest_map(1);
        assert_eq!(map.grid.width(), 35);
        assert_eq!(map.grid.height(), 23);
        for p in map.grid.positions() {
            if p.row == 0 || p.col == 0 || p.row == 22 || p.col == 34 {
                assert_eq!(map.grid.get(p), CellKind::Wall);
            }
        }
    }

    #[test]
    fn apples_only_in_fields() {
        for seed in 0..50 {
            let map = generate_harvest_map(seed);
            for p in map.grid.positions() {
                if map.grid.get(p) == CellKind::Apple {
                    assert!(map.field.get(p));
                }
            }
        }
    }
}
