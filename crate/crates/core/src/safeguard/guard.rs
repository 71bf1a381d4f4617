//! Boolean guard formulas over label atoms.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! guard := or
//! or    := and (("or" | "|") and)*
//! and   := not ("&" not)*
//! not   := "!" not | atom
//! atom  := "true" | <label> | "(" or ")"
//! ```
//!
//! The `else` keyword is only legal as a whole guard; see [`GuardSpec`].

use std::fmt;

use super::LabelSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Guard {
    True,
    /// Index into the owning safeguard's alphabet.
    Atom(usize),
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    /// An atom holds iff its label belongs to the observed set.
    pub fn eval(&self, observed: LabelSet) -> bool {
        match self {
            Guard::True => true,
            Guard::Atom(i) => observed.contains(*i),
            Guard::Not(g) => !g.eval(observed),
            Guard::And(a, b) => a.eval(observed) && b.eval(observed),
            Guard::Or(a, b) => a.eval(observed) || b.eval(observed),
        }
    }

    pub fn not(g: Guard) -> Guard {
        Guard::Not(Box::new(g))
    }

    /// Left-folded disjunction; `None` for an empty input.
    pub fn any(guards: impl IntoIterator<Item = Guard>) -> Option<Guard> {
        guards
            .into_iter()
            .reduce(|acc, g| Guard::Or(Box::new(acc), Box::new(g)))
    }

    pub fn all(guards: impl IntoIterator<Item = Guard>) -> Option<Guard> {
        guards
            .into_iter()
            .reduce(|acc, g| Guard::And(Box::new(acc), Box::new(g)))
    }

    /// Renders the formula in the file syntax, resolving atoms through `labels`.
    pub fn display<'a>(&'a self, labels: &'a [String]) -> impl fmt::Display + 'a {
        GuardDisplay { guard: self, labels }
    }

    fn precedence(&self) -> u8 {
        match self {
            Guard::Or(..) => 0,
            Guard::And(..) => 1,
            Guard::Not(_) => 2,
            Guard::True | Guard::Atom(_) => 3,
        }
    }
}

struct GuardDisplay<'a> {
    guard: &'a Guard,
    labels: &'a [String],
}

impl GuardDisplay<'_> {
    fn write(&self, g: &Guard, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let paren = g.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match g {
            Guard::True => f.write_str("true")?,
            Guard::Atom(i) => f.write_str(&self.labels[*i])?,
            Guard::Not(inner) => {
                f.write_str("!")?;
                self.write(inner, 2, f)?;
            }
            Guard::And(a, b) => {
                self.write(a, 1, f)?;
                f.write_str(" & ")?;
                self.write(b, 2, f)?;
            }
            Guard::Or(a, b) => {
                self.write(a, 0, f)?;
                f.write_str(" or ")?;
                self.write(b, 1, f)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for GuardDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.guard, 0, f)
    }
}

/// A guard as written on a `trans` line, before `else` expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuardSpec {
    Else,
    Formula(Guard),
}

/// Error from the guard parser. `column` is 1-based and relative to the guard text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardError {
    pub column: usize,
    pub kind: GuardErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuardErrorKind {
    Syntax(String),
    UndeclaredLabel(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, GuardError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (byte, c) = chars[i];
        let col = text[..byte].chars().count() + 1;
        match c {
            c if c.is_whitespace() => i += 1,
            '!' => {
                out.push((Tok::Not, col));
                i += 1;
            }
            '&' => {
                out.push((Tok::And, col));
                i += 1;
            }
            '|' => {
                out.push((Tok::Or, col));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, col));
                i += 1;
            }
            c if is_ident_char(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i].1) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().map(|(_, c)| *c).collect();
                let tok = if word == "or" { Tok::Or } else { Tok::Ident(word) };
                out.push((tok, col));
            }
            other => {
                return Err(GuardError {
                    column: col,
                    kind: GuardErrorKind::Syntax(format!("unexpected character '{other}'")),
                })
            }
        }
    }
    Ok(out)
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '.'
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
    labels: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, GuardError> {
        Err(GuardError {
            column: self.col(),
            kind: GuardErrorKind::Syntax(msg.into()),
        })
    }

    fn or(&mut self) -> Result<Guard, GuardError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            let rhs = self.and()?;
            lhs = Guard::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Guard, GuardError> {
        let mut lhs = self.not()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            let rhs = self.not()?;
            lhs = Guard::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Guard, GuardError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(Guard::not(self.not()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Guard, GuardError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.syntax("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Tok::Ident(word)) => {
                self.pos += 1;
                match word.as_str() {
                    "true" => Ok(Guard::True),
                    "else" => Err(GuardError {
                        column: col,
                        kind: GuardErrorKind::Syntax(
                            "'else' must be the whole guard".to_string(),
                        ),
                    }),
                    name => match self.labels.iter().position(|l| l == name) {
                        Some(i) => Ok(Guard::Atom(i)),
                        None => Err(GuardError {
                            column: col,
                            kind: GuardErrorKind::UndeclaredLabel(name.to_string()),
                        }),
                    },
                }
            }
            Some(tok) => self.syntax(format!("unexpected token {tok:?}")),
            None => self.syntax("unexpected end of guard"),
        }
    }
}

/// Parses a guard against the declared alphabet `labels`.
pub fn parse_guard(text: &str, labels: &[String]) -> Result<GuardSpec, GuardError> {
    let toks = tokenize(text)?;
    if let [(Tok::Ident(w), _)] = toks.as_slice() {
        if w == "else" {
            return Ok(GuardSpec::Else);
        }
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.chars().count() + 1,
        labels,
    };
    let g = p.or()?;
    if p.pos != p.toks.len() {
        return p.syntax("trailing input after guard");
    }
    Ok(GuardSpec::Formula(g))
}
