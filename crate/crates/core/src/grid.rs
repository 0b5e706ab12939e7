//! Grid coordinates, cell contents and the map container shared by both games.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::MapError;

/// A map coordinate in `(row, col)` order, row 0 at the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPos {
    pub row: usize,
    pub col: usize,
}

impl GridPos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn chebyshev(self, other: GridPos) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    pub fn manhattan(self, other: GridPos) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Non-agent content of a map location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    CleanWater,
    DirtyWater,
    EmptyField,
    Apple,
    Wall,
    EmptySpace,
}

impl CellKind {
    /// Character used in map files.
    ///
    /// ```text
    /// #  wall              ~  clean water        x  dirty water (waste)
    /// .  empty field       A  apple              ,  empty space
    /// ```
    pub fn to_char(self) -> char {
        match self {
            CellKind::Wall => '#',
            CellKind::CleanWater => '~',
            CellKind::DirtyWater => 'x',
            CellKind::EmptyField => '.',
            CellKind::Apple => 'A',
            CellKind::EmptySpace => ',',
        }
    }

    pub fn from_char(c: char) -> Option<CellKind> {
        Some(match c {
            '#' => CellKind::Wall,
            '~' => CellKind::CleanWater,
            'x' => CellKind::DirtyWater,
            '.' => CellKind::EmptyField,
            'A' => CellKind::Apple,
            ',' => CellKind::EmptySpace,
            _ => return None,
        })
    }

    pub fn is_walkable(self) -> bool {
        self != CellKind::Wall
    }
}

/// Absolute facing direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    North,
    East,
    South,
    West,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::North,
        Orientation::East,
        Orientation::South,
        Orientation::West,
    ];

    pub fn index(self) -> usize {
        match self {
            Orientation::North => 0,
            Orientation::East => 1,
            Orientation::South => 2,
            Orientation::West => 3,
        }
    }

    pub fn from_index(i: usize) -> Orientation {
        Self::ALL[i % 4]
    }

    /// `(drow, dcol)` unit step.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Orientation::North => (-1, 0),
            Orientation::East => (0, 1),
            Orientation::South => (1, 0),
            Orientation::West => (0, -1),
        }
    }

    pub fn turn_left(self) -> Orientation {
        Self::from_index(self.index() + 3)
    }

    pub fn turn_right(self) -> Orientation {
        Self::from_index(self.index() + 1)
    }

    pub fn opposite(self) -> Orientation {
        Self::from_index(self.index() + 2)
    }
}

/// Rectangular map of cell contents, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    height: usize,
    width: usize,
    cells: Vec<CellKind>,
}

impl Grid {
    pub fn filled(height: usize, width: usize, kind: CellKind) -> Self {
        Self {
            height,
            width,
            cells: vec![kind; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, pos: GridPos) -> bool {
        pos.row < self.height && pos.col < self.width
    }

    pub fn index(&self, pos: GridPos) -> usize {
        debug_assert!(self.contains(pos), "{pos} outside {}x{}", self.height, self.width);
        pos.row * self.width + pos.col
    }

    pub fn pos(&self, index: usize) -> GridPos {
        GridPos::new(index / self.width, index % self.width)
    }

    pub fn get(&self, pos: GridPos) -> CellKind {
        self.cells[self.index(pos)]
    }

    pub fn set(&mut self, pos: GridPos, kind: CellKind) {
        let i = self.index(pos);
        self.cells[i] = kind;
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    /// Offset `pos` by `(dr, dc)`, `None` when the result leaves the map.
    pub fn offset(&self, pos: GridPos, dr: isize, dc: isize) -> Option<GridPos> {
        let row = pos.row.checked_add_signed(dr)?;
        let col = pos.col.checked_add_signed(dc)?;
        let p = GridPos::new(row, col);
        self.contains(p).then_some(p)
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    pub fn positions(&self) -> impl Iterator<Item = GridPos> + '_ {
        (0..self.cells.len()).map(move |i| self.pos(i))
    }

    /// One string per row using the map-file legend.
    pub fn to_rows(&self) -> Vec<String> {
        self.cells
            .chunks(self.width)
            .map(|row| row.iter().map(|c| c.to_char()).collect())
            .collect()
    }

    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, MapError> {
        let height = rows.len();
        if height == 0 {
            return Err(MapError::Empty);
        }
        let width = rows[0].as_ref().chars().count();
        let mut cells = Vec::with_capacity(height * width);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(MapError::RaggedRow {
                    row: r,
                    expected: width,
                    found: row.chars().count(),
                });
            }
            for (c, ch) in row.chars().enumerate() {
                let kind = CellKind::from_char(ch).ok_or(MapError::UnknownCell { row: r, col: c, ch })?;
                cells.push(kind);
            }
        }
        Ok(Self { height, width, cells })
    }
}

/// Per-cell boolean mask aligned with a [`Grid`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellMask {
    width: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn get(&self, pos: GridPos) -> bool {
        self.bits[pos.row * self.width + pos.col]
    }

    pub fn set(&mut self, pos: GridPos, value: bool) {
        self.bits[pos.row * self.width + pos.col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn positions(&self) -> impl Iterator<Item = GridPos> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| GridPos::new(i / w, i % w))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.bits.len() / self.width
        }
    }

    /// Rows of `'1'`/`'0'` characters.
    pub fn to_rows(&self) -> Vec<String> {
        self.bits
            .chunks(self.width)
            .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect()
    }

    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, MapError> {
        let height = rows.len();
        if height == 0 {
            return Err(MapError::Empty);
        }
        let width = rows[0].as_ref().len();
        let mut mask = CellMask::new(height, width);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(MapError::RaggedRow {
                    row: r,
                    expected: width,
                    found: row.len(),
                });
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '1' => mask.set(GridPos::new(r, c), true),
                    '0' => {}
                    _ => return Err(MapError::UnknownCell { row: r, col: c, ch }),
                }
            }
        }
        Ok(mask)
    }
}
