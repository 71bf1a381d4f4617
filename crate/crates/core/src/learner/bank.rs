use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::gridworld::{Action, EnvState, GridMap};
use crate::safeguard::{Safeguard, StateId};

const A: usize = Action::COUNT;

#[derive(Debug, Clone, PartialEq)]
struct Table {
    values: Vec<f64>,
    visited: bool,
}

/// One action-value table per safeguard state, indexed by [`StateId`] of the
/// safeguard the bank is keyed to. Tables carry a visited flag that gates the
/// one-time ancestor transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct QBank {
    width: usize,
    height: usize,
    names: Vec<String>,
    tables: Vec<Table>,
}

impl QBank {
    /// Zero-initialized, unvisited tables for every state of `g`.
    pub fn new(map: &GridMap, g: &Safeguard) -> Self {
        Self::with_names(map, g.states().map(|q| g.state_name(q).to_string()).collect())
    }

    pub fn with_names(map: &GridMap, names: Vec<String>) -> Self {
        let cells = map.num_cells();
        QBank {
            width: map.width(),
            height: map.height(),
            tables: names
                .iter()
                .map(|_| Table {
                    values: vec![0.0; cells * A],
                    visited: false,
                })
                .collect(),
            names,
        }
    }

    /// A bank for `g` that imports tables and visited flags of same-named
    /// states from `self`; other states start fresh.
    pub fn rekey(&self, g: &Safeguard) -> QBank {
        let cells = self.width * self.height;
        let mut names = Vec::new();
        let mut tables = Vec::new();
        for q in g.states() {
            let name = g.state_name(q);
            names.push(name.to_string());
            tables.push(match self.names.iter().position(|n| n == name) {
                Some(i) => self.tables[i].clone(),
                None => Table {
                    values: vec![0.0; cells * A],
                    visited: false,
                },
            });
        }
        QBank {
            width: self.width,
            height: self.height,
            names,
            tables,
        }
    }

    pub fn is_keyed_to(&self, g: &Safeguard) -> bool {
        self.names.len() == g.num_states() && g.states().all(|q| self.names[q.0] == g.state_name(q))
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn slot(&self, s: EnvState) -> usize {
        (s.row * self.width + s.col) * A
    }

    pub fn get(&self, q: StateId, s: EnvState, a: Action) -> f64 {
        self.tables[q.0].values[self.slot(s) + a.index()]
    }

    pub fn set(&mut self, q: StateId, s: EnvState, a: Action, v: f64) {
        let i = self.slot(s) + a.index();
        self.tables[q.0].values[i] = v;
    }

    /// The five action values at `s`, in [`Action::ALL`] order.
    pub fn row(&self, q: StateId, s: EnvState) -> &[f64] {
        let i = self.slot(s);
        &self.tables[q.0].values[i..i + A]
    }

    pub fn row_mut(&mut self, q: StateId, s: EnvState) -> &mut [f64] {
        let i = self.slot(s);
        &mut self.tables[q.0].values[i..i + A]
    }

    pub fn max(&self, q: StateId, s: EnvState) -> f64 {
        self.row(q, s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the first action in declaration order.
    pub fn greedy(&self, q: StateId, s: EnvState) -> Action {
        let row = self.row(q, s);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        Action::from_index(best)
    }

    pub fn table(&self, q: StateId) -> &[f64] {
        &self.tables[q.0].values
    }

    pub fn table_mut(&mut self, q: StateId) -> &mut [f64] {
        &mut self.tables[q.0].values
    }

    pub fn is_visited(&self, q: StateId) -> bool {
        self.tables[q.0].visited
    }

    pub fn mark_visited(&mut self, q: StateId) {
        self.tables[q.0].visited = true;
    }

    /// Writes the bank as CSV rows `q,col,row,action,value`, preceded by a
    /// version line and a line listing visited states.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# psl-qbank v1 {}x{}", self.width, self.height)?;
        let visited: Vec<&str> = self
            .names
            .iter()
            .zip(&self.tables)
            .filter(|(_, t)| t.visited)
            .map(|(n, _)| n.as_str())
            .collect();
        writeln!(out, "# visited {}", visited.join(" "))?;
        writeln!(out, "q,col,row,action,value")?;
        for (name, t) in self.names.iter().zip(&self.tables) {
            for row in 0..self.height {
                for col in 0..self.width {
                    for a in Action::ALL {
                        let v = t.values[(row * self.width + col) * A + a.index()];
                        writeln!(out, "{name},{col},{row},{a},{v}")?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads a checkpoint into a bank keyed to `g`. States absent from the
    /// file stay zero and unvisited.
    pub fn read_csv<R: BufRead>(input: R, map: &GridMap, g: &Safeguard) -> Result<QBank, CheckpointError> {
        let mut bank = QBank::new(map, g);
        let mut header_seen = false;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let bad = |m: &str| CheckpointError::Format {
                line: lineno,
                message: m.to_string(),
            };
            if let Some(rest) = line.strip_prefix("# psl-qbank ") {
                let dims = format!("{}x{}", map.width(), map.height());
                if rest != format!("v1 {dims}") {
                    return Err(bad(&format!("expected 'v1 {dims}', found '{rest}'")));
                }
                header_seen = true;
                continue;
            }
            if let Some(rest) = line.strip_prefix("# visited") {
                for name in rest.split_whitespace() {
                    if let Some(q) = g.state_id(name) {
                        bank.mark_visited(q);
                    }
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() || line == "q,col,row,action,value" {
                continue;
            }
            if !header_seen {
                return Err(bad("missing version line"));
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let Some(q) = g.state_id(f[0]) else {
                continue;
            };
            let col: usize = f[1].parse().map_err(|_| bad("bad col"))?;
            let row: usize = f[2].parse().map_err(|_| bad("bad row"))?;
            let a = Action::ALL
                .into_iter()
                .find(|a| a.name() == f[3])
                .ok_or_else(|| bad("bad action"))?;
            let v: f64 = f[4].parse().map_err(|_| bad("bad value"))?;
            if col >= map.width() || row >= map.height() {
                return Err(bad("cell out of bounds"));
            }
            bank.set(q, EnvState::new(col, row), a, v);
        }
        if !header_seen {
            return Err(CheckpointError::Format {
                line: 0,
                message: "missing version line".into(),
            });
        }
        Ok(bank)
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gridworld::load_map;

    #[test]
    fn rekey_imports_same_named_tables() {
        let map = load_map("grid 2 2\nagent 0 0\n").unwrap();
        let g1 = fixtures::safeguard("safeguard-1");
        let g2 = fixtures::safeguard("safeguard-2");
        let mut bank = QBank::new(&map, &g1);
        let q1 = g1.state_id("q1").unwrap();
        bank.set(q1, EnvState::new(1, 1), Action::East, 4.0);
        bank.mark_visited(q1);
        let next = bank.rekey(&g2);
        assert!(next.is_keyed_to(&g2));
        let q1b = g2.state_id("q1").unwrap();
        let q2 = g2.state_id("q2").unwrap();
        assert_eq!(next.get(q1b, EnvState::new(1, 1), Action::East), 4.0);
        assert!(next.is_visited(q1b));
        assert!(!next.is_visited(q2));
    }

    #[test]
    fn greedy_breaks_ties_by_declaration_order() {
        let map = load_map("grid 1 1\nagent 0 0\n").unwrap();
        let g = fixtures::safeguard("basic-lava");
        let mut bank = QBank::new(&map, &g);
        let s = EnvState::new(0, 0);
        assert_eq!(bank.greedy(g.initial(), s), Action::North);
        bank.set(g.initial(), s, Action::South, 1.0);
        bank.set(g.initial(), s, Action::Stay, 1.0);
        assert_eq!(bank.greedy(g.initial(), s), Action::South);
    }

    #[test]
    fn checkpoint_round_trip() {
        let map = load_map("grid 3 2\nagent 0 0\n").unwrap();
        let g = fixtures::safeguard("safeguard-2");
        let mut bank = QBank::new(&map, &g);
        let q1 = g.state_id("q1").unwrap();
        bank.set(q1, EnvState::new(2, 1), Action::Stay, -0.125);
        bank.set(g.initial(), EnvState::new(0, 1), Action::West, 1e-17);
        bank.mark_visited(q1);
        let mut buf = Vec::new();
        bank.write_csv(&mut buf).unwrap();
        let back = QBank::read_csv(buf.as_slice(), &map, &g).unwrap();
        assert_eq!(back, bank);

        let other = load_map("grid 2 2\nagent 0 0\n").unwrap();
        assert!(QBank::read_csv(buf.as_slice(), &other, &g).is_err());
    }
}
