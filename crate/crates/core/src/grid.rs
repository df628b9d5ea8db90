//! Grid regions: free cells, obstacles, entry points.
//!
//! A region file is a rectangle of `#` (obstacle), `.` (free) and `E` (free
//! entry point) characters, one row per line. Row 0 is the top row, so
//! "north" is decreasing `y`.

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A grid coordinate. `x` is the column, `y` the row (top row is 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

/// Neighbor directions, in the fixed sensing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Self::North, Self::East, Self::South, Self::West];
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegionError {
    #[error("region text is empty")]
    Empty,
    #[error("row {row} has width {found}, expected {expected}")]
    NotRectangular { row: usize, expected: usize, found: usize },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("region has no entry point")]
    NoEntryPoint,
    #[error("free cell {0} is not connected to the entry points")]
    Disconnected(Cell),
    #[error("entry point {0} is not a free cell")]
    EntryNotFree(Cell),
    #[error("region size must be at least 1")]
    ZeroSize,
    #[error("cell {0} is not a free cell of the region")]
    CellNotInRegion(Cell),
    #[error("unknown region spec {0:?}")]
    BadSpec(String),
    #[error("cannot read region file {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// An immutable grid region with 4-neighborhood adjacency.
///
/// Free cells are densely indexed `0..n` in row-major order; the simulator
/// keeps per-cell state in vectors addressed by that index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    name: String,
    width: u32,
    height: u32,
    /// Row-major `width * height` lookup from grid position to dense index.
    lookup: Vec<Option<u32>>,
    cells: Vec<Cell>,
    entry_points: Vec<Cell>,
    /// Per dense index, neighbor indices in N, E, S, W slots.
    adjacency: Vec<[Option<u32>; 4]>,
}

impl Region {
    /// Builds a region from a free-cell mask and entry points, validating
    /// connectivity.
    pub fn new(
        name: impl Into<String>,
        width: u32,
        height: u32,
        free: impl Fn(Cell) -> bool,
        entry_points: Vec<Cell>,
    ) -> Result<Self, RegionError> {
        if width == 0 || height == 0 {
            return Err(RegionError::Empty);
        }
        let mut lookup = vec![None; (width * height) as usize];
        let mut cells = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let c = Cell::new(x, y);
                if free(c) {
                    lookup[(y * width + x) as usize] = Some(cells.len() as u32);
                    cells.push(c);
                }
            }
        }
        if entry_points.is_empty() {
            return Err(RegionError::NoEntryPoint);
        }
        let mut region = Self {
            name: name.into(),
            width,
            height,
            lookup,
            cells,
            entry_points,
            adjacency: Vec::new(),
        };
        for &e in &region.entry_points {
            if region.index_of(e).is_none() {
                return Err(RegionError::EntryNotFree(e));
            }
        }
        region.adjacency = (0..region.cells.len())
            .map(|i| {
                let c = region.cells[i];
                Direction::ALL.map(|d| region.step(c, d).and_then(|n| region.index_of(n)).map(|i| i as u32))
            })
            .collect();
        region.check_connected()?;
        Ok(region)
    }

    fn check_connected(&self) -> Result<(), RegionError> {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::new();
        for &e in &self.entry_points {
            let i = self.index_of(e).expect("validated entry");
            if !seen[i] {
                seen[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for j in self.adjacent_indices(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(RegionError::Disconnected(self.cells[i])),
            None => Ok(()),
        }
    }

    fn step(&self, c: Cell, d: Direction) -> Option<Cell> {
        let (x, y) = (c.x as i64, c.y as i64);
        let (nx, ny) = match d {
            Direction::North => (x, y - 1),
            Direction::East => (x + 1, y),
            Direction::South => (x, y + 1),
            Direction::West => (x - 1, y),
        };
        (nx >= 0 && ny >= 0 && nx < self.width as i64 && ny < self.height as i64)
            .then(|| Cell::new(nx as u32, ny as u32))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of free cells, `n`.
    pub fn n(&self) -> usize {
        self.cells.len()
    }

    /// Number of undirected edges between free cells, `m`.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.iter().flatten().count()).sum::<usize>() / 2
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn entry_points(&self) -> &[Cell] {
        &self.entry_points
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.index_of(c).is_some()
    }

    pub fn is_entry(&self, c: Cell) -> bool {
        self.entry_points.contains(&c)
    }

    pub fn index_of(&self, c: Cell) -> Option<usize> {
        if c.x >= self.width || c.y >= self.height {
            return None;
        }
        self.lookup[(c.y * self.width + c.x) as usize].map(|i| i as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        self.cells[index]
    }

    /// Neighbor slots of a dense index, in N, E, S, W order.
    pub fn adjacency_slots(&self, index: usize) -> [Option<usize>; 4] {
        self.adjacency[index].map(|o| o.map(|i| i as usize))
    }

    pub fn adjacent_indices(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[index].iter().flatten().map(|&i| i as usize)
    }

    /// Free cells at Manhattan distance 1, in N, E, S, W order.
    pub fn neighbors(&self, cell: Cell) -> Result<Vec<Cell>, RegionError> {
        let i = self.index_of(cell).ok_or(RegionError::CellNotInRegion(cell))?;
        Ok(self.adjacent_indices(i).map(|j| self.cells[j]).collect())
    }

    /// Serializes to the region file alphabet, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(((self.width + 1) * self.height) as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                out.push(if self.is_entry(c) {
                    'E'
                } else if self.is_free(c) {
                    '.'
                } else {
                    '#'
                });
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a region file. Entry points are taken in row-major order.
pub fn parse_region(text: &str) -> Result<Region, RegionError> {
    let rows: Vec<&str> = text.strip_suffix('\n').unwrap_or(text).split('\n').collect();
    if rows.len() == 1 && rows[0].is_empty() {
        return Err(RegionError::Empty);
    }
    let width = rows[0].chars().count();
    let mut free = Vec::with_capacity(width * rows.len());
    let mut entries = Vec::new();
    for (y, row) in rows.iter().enumerate() {
        let found = row.chars().count();
        if found != width {
            return Err(RegionError::NotRectangular { row: y, expected: width, found });
        }
        for (x, ch) in row.chars().enumerate() {
            match ch {
                '#' => free.push(false),
                '.' => free.push(true),
                'E' => {
                    free.push(true);
                    entries.push(Cell::new(x as u32, y as u32));
                }
                other => return Err(RegionError::UnknownChar { ch: other, row: y, col: x }),
            }
        }
    }
    let (w, h) = (width as u32, rows.len() as u32);
    Region::new("region", w, h, |c| free[(c.y * w + c.x) as usize], entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Linear,
    Square,
    Sawtooth,
}

/// Builds one of the parametric region families.
///
/// The sawtooth is a one-cell-high corridor of width `2 * size` with a
/// `size`-deep tooth hanging below every odd column, so it has
/// `2 * size + size * size` cells. Every family enters at the top-left cell.
pub fn generate_region(kind: RegionKind, size: u32) -> Result<Region, RegionError> {
    if size == 0 {
        return Err(RegionError::ZeroSize);
    }
    let entry = vec![Cell::new(0, 0)];
    match kind {
        RegionKind::Linear => Region::new(format!("linear-{size}"), size, 1, |_| true, entry),
        RegionKind::Square => Region::new(format!("square-{size}"), size, size, |_| true, entry),
        RegionKind::Sawtooth => Region::new(
            format!("sawtooth-{size}"),
            2 * size,
            size + 1,
            |c| c.y == 0 || c.x % 2 == 1,
            entry,
        ),
    }
}

/// Hand-drawn stand-ins for the three irregular floor plans. They follow the
/// silhouettes loosely and are not exact reproductions.
const COMPLEX_MAPS: [(&str, &str); 3] = [
    ("complex-1-approx", include_str!("../regions/complex1.txt")),
    ("complex-2-approx", include_str!("../regions/complex2.txt")),
    ("complex-3-approx", include_str!("../regions/complex3.txt")),
];

/// One of the bundled approximate complex regions, numbered from 1.
pub fn complex_region(number: usize) -> Result<Region, RegionError> {
    let (name, text) = number
        .checked_sub(1)
        .and_then(|i| COMPLEX_MAPS.get(i))
        .ok_or_else(|| RegionError::BadSpec(format!("complex:{number}")))?;
    Ok(parse_region(text)?.with_name(*name))
}

/// How a run names its region: a generator, a bundled map or a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionSpec {
    Generated(RegionKind, u32),
    Complex(usize),
    File(PathBuf),
}

impl RegionSpec {
    pub fn load(&self) -> Result<Region, RegionError> {
        match self {
            Self::Generated(kind, size) => generate_region(*kind, *size),
            Self::Complex(k) => complex_region(*k),
            Self::File(path) => load_region_file(path),
        }
    }
}

pub fn load_region_file(path: &Path) -> Result<Region, RegionError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RegionError::Io { path: path.to_owned(), message: e.to_string() })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(parse_region(&text)?.with_name(name))
}

impl FromStr for RegionSpec {
    type Err = RegionError;

    /// `linear:10`, `square:7`, `sawtooth:4`, `complex:2` or `file:path/to/map.txt`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RegionError::BadSpec(s.to_owned());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let size = || arg.trim().parse::<u32>().map_err(|_| bad());
        Ok(match kind.trim() {
            "linear" => Self::Generated(RegionKind::Linear, size()?),
            "square" => Self::Generated(RegionKind::Square, size()?),
            "sawtooth" => Self::Generated(RegionKind::Sawtooth, size()?),
            "complex" => Self::Complex(size()? as usize),
            "file" => Self::File(PathBuf::from(arg.trim())),
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Generated(RegionKind::Linear, s) => write!(f, "linear:{s}"),
            Self::Generated(RegionKind::Square, s) => write!(f, "square:{s}"),
            Self::Generated(RegionKind::Sawtooth, s) => write!(f, "sawtooth:{s}"),
            Self::Complex(k) => write!(f, "complex:{k}"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}
