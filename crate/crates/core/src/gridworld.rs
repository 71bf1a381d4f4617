//! Stochastically labelled gridworld with slip dynamics.
//!
//! Coordinates are `(col, row)` with the origin in the top-left corner, so
//! moving north decreases the row. A move action goes in the intended
//! direction with probability `1 - slip`; otherwise a direction is drawn
//! uniformly from the four moves (the intended one included). `Stay` never
//! slips. Moves across the border leave the agent in place.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::safeguard::LabelSet;

pub const MAX_MAP_LABELS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    North,
    West,
    South,
    East,
    Stay,
}

impl Action {
    /// Declaration order, also used for greedy tie-breaking.
    pub const ALL: [Action; 5] = [Action::North, Action::West, Action::South, Action::East, Action::Stay];
    pub const MOVES: [Action; 4] = [Action::North, Action::West, Action::South, Action::East];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::North => "north",
            Action::West => "west",
            Action::South => "south",
            Action::East => "east",
            Action::Stay => "stay",
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (0, -1),
            Action::West => (-1, 0),
            Action::South => (0, 1),
            Action::East => (1, 0),
            Action::Stay => (0, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvState {
    pub col: usize,
    pub row: usize,
}

impl EnvState {
    pub fn new(col: usize, row: usize) -> Self {
        EnvState { col, row }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Distribution over label sets (bits index [`GridMap::labels`]).
    pub label_dist: Vec<(LabelSet, f64)>,
    pub reward: f64,
}

impl Default for Cell {
    fn default() -> Self {
        Cell {
            label_dist: vec![(LabelSet::EMPTY, 1.0)],
            reward: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: cell ({col}, {row}) is outside the {width}x{height} grid")]
    OutOfBounds {
        line: usize,
        col: usize,
        row: usize,
        width: usize,
        height: usize,
    },
    #[error("line {line}: label probabilities sum to {sum}, above 1")]
    Distribution { line: usize, sum: f64 },
    #[error("line {line}: duplicate cell ({col}, {row})")]
    DuplicateCell { line: usize, col: usize, row: usize },
    #[error("missing 'grid W H' line")]
    MissingGrid,
    #[error("no 'agent c r' start cell declared")]
    NoStart,
    #[error("more than {MAX_MAP_LABELS} distinct labels")]
    TooManyLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    slip: f64,
    horizon: usize,
    step_reward: f64,
    start: Vec<EnvState>,
    labels: Vec<String>,
    cells: Vec<Cell>,
}

pub const DEFAULT_SLIP: f64 = 0.05;
pub const DEFAULT_HORIZON: usize = 100;

impl GridMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn slip(&self) -> f64 {
        self.slip
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn step_reward(&self) -> f64 {
        self.step_reward
    }

    pub fn start_cells(&self) -> &[EnvState] {
        &self.start
    }

    /// Label alphabet of the map, in order of first appearance.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index(&self, s: EnvState) -> usize {
        s.row * self.width + s.col
    }

    pub fn state(&self, index: usize) -> EnvState {
        EnvState::new(index % self.width, index / self.width)
    }

    pub fn states(&self) -> impl Iterator<Item = EnvState> + '_ {
        (0..self.num_cells()).map(|i| self.state(i))
    }

    pub fn in_bounds(&self, s: EnvState) -> bool {
        s.col < self.width && s.row < self.height
    }

    pub fn cell(&self, s: EnvState) -> &Cell {
        &self.cells[self.index(s)]
    }

    /// Reward for arriving in `s`: the cell reward plus the per-step reward.
    pub fn arrival_reward(&self, s: EnvState) -> f64 {
        self.cell(s).reward + self.step_reward
    }

    /// Smallest arrival reward over all cells.
    pub fn min_reward(&self) -> f64 {
        self.states()
            .map(|s| self.arrival_reward(s))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_slip(mut self, slip: f64) -> Self {
        assert!((0.0..=1.0).contains(&slip));
        self.slip = slip;
        self
    }

    /// Position reached by moving one cell in direction `a`, clamped at the border.
    pub fn shift(&self, s: EnvState, a: Action) -> EnvState {
        let (dc, dr) = a.delta();
        let col = s.col as isize + dc;
        let row = s.row as isize + dr;
        if col < 0 || row < 0 || col >= self.width as isize || row >= self.height as isize {
            s
        } else {
            EnvState::new(col as usize, row as usize)
        }
    }

    /// Uniform draw from the start cells.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        self.start[rng.gen_range(0..self.start.len())]
    }

    /// Samples the next position only.
    pub fn sample_move<R: Rng + ?Sized>(&self, s: EnvState, a: Action, rng: &mut R) -> EnvState {
        if a == Action::Stay {
            return s;
        }
        let dir = if rng.gen::<f64>() < self.slip {
            Action::MOVES[rng.gen_range(0..4)]
        } else {
            a
        };
        self.shift(s, dir)
    }

    /// Samples an observed label set at `s` from the cell's distribution.
    pub fn sample_labels<R: Rng + ?Sized>(&self, s: EnvState, rng: &mut R) -> LabelSet {
        sample_dist(&self.cell(s).label_dist, rng)
    }

    /// One environment step: next position, arrival reward and observed labels.
    pub fn env_step<R: Rng + ?Sized>(&self, s: EnvState, a: Action, rng: &mut R) -> (EnvState, f64, LabelSet) {
        let next = self.sample_move(s, a, rng);
        let labels = self.sample_labels(next, rng);
        (next, self.arrival_reward(next), labels)
    }

    /// Exact next-position distribution of [`GridMap::sample_move`], merged
    /// over clamped outcomes and ordered by cell index.
    pub fn transition_distribution(&self, s: EnvState, a: Action) -> Vec<(EnvState, f64)> {
        if a == Action::Stay {
            return vec![(s, 1.0)];
        }
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        *acc.entry(self.index(self.shift(s, a))).or_default() += 1.0 - self.slip;
        for dir in Action::MOVES {
            *acc.entry(self.index(self.shift(s, dir))).or_default() += self.slip / 4.0;
        }
        acc.into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(i, p)| (self.state(i), p))
            .collect()
    }

    /// One character per cell: first letter of the most likely non-empty label
    /// set (upper case when certain), `S` for start cells, `$` for positive
    /// reward, `.` otherwise.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in 0..self.height {
            for col in 0..self.width {
                let s = EnvState::new(col, row);
                let cell = self.cell(s);
                let best = cell
                    .label_dist
                    .iter()
                    .filter(|(l, _)| !l.is_empty())
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                let ch = match best {
                    Some((l, p)) => {
                        let c = self.labels[l.indices().next().unwrap()].chars().next().unwrap_or('?');
                        if *p >= 1.0 {
                            c.to_ascii_uppercase()
                        } else {
                            c.to_ascii_lowercase()
                        }
                    }
                    None if self.start.contains(&s) => 'S',
                    None if cell.reward > 0.0 => '$',
                    None => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn sample_dist<R: Rng + ?Sized>(dist: &[(LabelSet, f64)], rng: &mut R) -> LabelSet {
    if let [(l, _)] = dist {
        return *l;
    }
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for &(l, p) in dist {
        acc += p;
        if u < acc {
            return l;
        }
    }
    dist.last().map_or(LabelSet::EMPTY, |(l, _)| *l)
}

/// Parses a map document:
///
/// ```text
/// grid W H
/// slip p            # default 0.05
/// horizon H         # default 100
/// step_reward x     # default 0
/// agent c r         # repeatable; the start cells
/// cell c r [label <id>[+<id>...] p <prob>]* [reward x]
/// ```
///
/// Probability mass not assigned on a `cell` line goes to the empty label set.
pub fn load_map(text: &str) -> Result<GridMap, MapError> {
    let mut dims: Option<(usize, usize)> = None;
    let mut slip = DEFAULT_SLIP;
    let mut horizon = DEFAULT_HORIZON;
    let mut step_reward = 0.0;
    let mut start: Vec<(usize, EnvState)> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, EnvState, Cell)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let syntax = |message: String| MapError::Syntax { line, message };
        match words[0] {
            "grid" => {
                let [w, h] = numbers::<usize, 2>(&words[1..]).map_err(syntax)?;
                if w == 0 || h == 0 {
                    return Err(syntax("grid dimensions must be positive".into()));
                }
                dims = Some((w, h));
            }
            "slip" => {
                let [p] = numbers::<f64, 1>(&words[1..]).map_err(syntax)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(syntax(format!("slip {p} is not a probability")));
                }
                slip = p;
            }
            "horizon" => {
                let [h] = numbers::<usize, 1>(&words[1..]).map_err(syntax)?;
                if h == 0 {
                    return Err(syntax("horizon must be positive".into()));
                }
                horizon = h;
            }
            "step_reward" => {
                let [x] = numbers::<f64, 1>(&words[1..]).map_err(syntax)?;
                step_reward = x;
            }
            "agent" => {
                let [c, r] = numbers::<usize, 2>(&words[1..]).map_err(syntax)?;
                start.push((line, EnvState::new(c, r)));
            }
            "cell" => {
                if words.len() < 3 {
                    return Err(syntax("expected 'cell c r ...'".into()));
                }
                let [c, r] = numbers::<usize, 2>(&words[1..3]).map_err(syntax)?;
                let cell = parse_cell(line, &words[3..], &mut labels)?;
                cells.push((line, EnvState::new(c, r), cell));
            }
            other => return Err(syntax(format!("unknown keyword '{other}'"))),
        }
    }

    let (width, height) = dims.ok_or(MapError::MissingGrid)?;
    if start.is_empty() {
        return Err(MapError::NoStart);
    }
    let oob = |line, s: EnvState| MapError::OutOfBounds {
        line,
        col: s.col,
        row: s.row,
        width,
        height,
    };
    let mut grid = vec![Cell::default(); width * height];
    let mut seen = vec![false; width * height];
    for (line, s, cell) in cells {
        if s.col >= width || s.row >= height {
            return Err(oob(line, s));
        }
        let i = s.row * width + s.col;
        if seen[i] {
            return Err(MapError::DuplicateCell {
                line,
                col: s.col,
                row: s.row,
            });
        }
        seen[i] = true;
        grid[i] = cell;
    }
    let mut starts = Vec::new();
    for (line, s) in start {
        if s.col >= width || s.row >= height {
            return Err(oob(line, s));
        }
        if !starts.contains(&s) {
            starts.push(s);
        }
    }
    Ok(GridMap {
        width,
        height,
        slip,
        horizon,
        step_reward,
        start: starts,
        labels,
        cells: grid,
    })
}

fn parse_cell(line: usize, words: &[&str], labels: &mut Vec<String>) -> Result<Cell, MapError> {
    let syntax = |message: String| MapError::Syntax { line, message };
    let mut dist: Vec<(LabelSet, f64)> = Vec::new();
    let mut reward = 0.0;
    let mut i = 0;
    while i < words.len() {
        match words[i] {
            "label" => {
                if words.len() < i + 4 || words.get(i + 2) != Some(&"p") {
                    return Err(syntax("expected 'label <id> p <prob>'".into()));
                }
                let mut set = LabelSet::EMPTY;
                for name in words[i + 1].split('+') {
                    if name.is_empty() {
                        return Err(syntax("empty label name".into()));
                    }
                    let idx = match labels.iter().position(|l| l == name) {
                        Some(idx) => idx,
                        None => {
                            if labels.len() == MAX_MAP_LABELS {
                                return Err(MapError::TooManyLabels);
                            }
                            labels.push(name.to_string());
                            labels.len() - 1
                        }
                    };
                    set = set.with(idx);
                }
                let p: f64 = words[i + 3]
                    .parse()
                    .map_err(|_| syntax(format!("bad probability '{}'", words[i + 3])))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(syntax(format!("probability {p} outside [0, 1]")));
                }
                match dist.iter_mut().find(|(l, _)| *l == set) {
                    Some(entry) => entry.1 += p,
                    None => dist.push((set, p)),
                }
                i += 4;
            }
            "reward" => {
                reward = words
                    .get(i + 1)
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| syntax("expected 'reward <x>'".into()))?;
                i += 2;
            }
            other => return Err(syntax(format!("unexpected '{other}' in cell"))),
        }
    }
    let sum: f64 = dist.iter().map(|(_, p)| p).sum();
    if sum > 1.0 + 1e-9 {
        return Err(MapError::Distribution { line, sum });
    }
    let rest = 1.0 - sum;
    if rest > 1e-9 {
        match dist.iter_mut().find(|(l, _)| l.is_empty()) {
            Some(entry) => entry.1 += rest,
            None => dist.push((LabelSet::EMPTY, rest)),
        }
    }
    dist.retain(|(_, p)| *p > 0.0);
    if dist.is_empty() {
        dist.push((LabelSet::EMPTY, 1.0));
    }
    Ok(Cell {
        label_dist: dist,
        reward,
    })
}

fn numbers<T: std::str::FromStr, const N: usize>(words: &[&str]) -> Result<[T; N], String> {
    if words.len() != N {
        return Err(format!("expected {N} numeric argument(s), found {}", words.len()));
    }
    let parsed: Vec<T> = words
        .iter()
        .map(|w| w.parse::<T>().map_err(|_| format!("bad number '{w}'")))
        .collect::<Result<_, _>>()?;
    parsed
        .try_into()
        .map_err(|_| "argument count mismatch".to_string())
}
