use super::guard::{self, GuardErrorKind, GuardSpec};
use super::{Guard, Safeguard, SafeguardError, StateId, Transition};

struct PendingTransition {
    line: usize,
    source: StateId,
    target: StateId,
    guard: GuardSpec,
}

/// Parses a line-oriented safeguard document:
///
/// ```text
/// safeguard <name>
/// labels <id> <id> ...
/// state <id> [initial] [accepting]
/// trans <src> -> <dst> on <guard>
/// ```
///
/// `#` starts a comment. `labels` must precede the first `trans`. An `else`
/// guard is expanded to the negated disjunction of the other guards leaving the
/// same state.
pub fn parse_safeguard(text: &str) -> Result<Safeguard, SafeguardError> {
    let mut name = String::from("unnamed");
    let mut labels: Vec<String> = Vec::new();
    let mut states: Vec<String> = Vec::new();
    let mut accepting: Vec<bool> = Vec::new();
    let mut initial: Option<StateId> = None;
    let mut pending: Vec<PendingTransition> = Vec::new();
    let mut trans_lines: Vec<(usize, &str)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let mut words = trimmed.split_whitespace();
        let keyword = words.next().unwrap();
        match keyword {
            "safeguard" => {
                let n: Vec<&str> = words.collect();
                if n.len() != 1 {
                    return Err(syntax(line, indent + 10, "expected 'safeguard <name>'"));
                }
                name = n[0].to_string();
            }
            "labels" => {
                for w in words {
                    if !w.chars().all(guard::is_ident_char) || w == "true" || w == "else" || w == "or" {
                        return Err(syntax(line, column_of(raw, w), format!("invalid label '{w}'")));
                    }
                    if labels.iter().any(|l| l == w) {
                        return Err(SafeguardError::DuplicateLabel {
                            line,
                            name: w.to_string(),
                        });
                    }
                    labels.push(w.to_string());
                }
            }
            "state" => {
                let id = words
                    .next()
                    .ok_or_else(|| syntax(line, indent + 6, "expected a state name"))?;
                if states.iter().any(|s| s == id) {
                    return Err(SafeguardError::DuplicateState {
                        line,
                        name: id.to_string(),
                    });
                }
                let q = StateId(states.len());
                states.push(id.to_string());
                accepting.push(false);
                for flag in words {
                    match flag {
                        "initial" => {
                            if initial.is_some() {
                                return Err(SafeguardError::MultipleInitial {
                                    line,
                                    name: id.to_string(),
                                });
                            }
                            initial = Some(q);
                        }
                        "accepting" => accepting[q.0] = true,
                        other => {
                            return Err(syntax(
                                line,
                                column_of(raw, other),
                                format!("unknown state flag '{other}'"),
                            ))
                        }
                    }
                }
            }
            "trans" => trans_lines.push((line, raw)),
            other => {
                return Err(syntax(line, indent + 1, format!("unknown keyword '{other}'")));
            }
        }
    }

    // Transitions are resolved after all states and labels are known, so
    // declarations may appear in any order.
    for (line, raw) in trans_lines {
        pending.push(parse_trans(line, raw, &states, &labels)?);
    }

    let initial = initial.ok_or(SafeguardError::MissingInitial)?;
    if states.is_empty() {
        return Err(SafeguardError::NoStates);
    }

    let mut transitions = Vec::with_capacity(pending.len());
    for q in 0..states.len() {
        let outgoing: Vec<&PendingTransition> =
            pending.iter().filter(|t| t.source.0 == q).collect();
        let elses: Vec<&&PendingTransition> = outgoing
            .iter()
            .filter(|t| t.guard == GuardSpec::Else)
            .collect();
        if elses.len() > 1 {
            return Err(SafeguardError::MultipleElse {
                line: elses[1].line,
                state: states[q].clone(),
            });
        }
        let explicit: Vec<Guard> = outgoing
            .iter()
            .filter_map(|t| match &t.guard {
                GuardSpec::Formula(g) => Some(g.clone()),
                GuardSpec::Else => None,
            })
            .collect();
        for t in &outgoing {
            let (guard, is_else) = match &t.guard {
                GuardSpec::Formula(g) => (g.clone(), false),
                GuardSpec::Else => (
                    Guard::any(explicit.iter().cloned()).map_or(Guard::True, Guard::not),
                    true,
                ),
            };
            transitions.push((t.line, Transition {
                source: t.source,
                target: t.target,
                guard,
                is_else,
            }));
        }
    }
    transitions.sort_by_key(|(line, _)| *line);
    let transitions = transitions.into_iter().map(|(_, t)| t).collect();

    Safeguard::from_parts(name, labels, states, initial, accepting, transitions)
}

fn parse_trans(
    line: usize,
    raw: &str,
    states: &[String],
    labels: &[String],
) -> Result<PendingTransition, SafeguardError> {
    let content = raw.split('#').next().unwrap_or("");
    let Some(on_at) = find_word(content, "on") else {
        return Err(syntax(line, content.trim_end().len() + 1, "expected 'on <guard>'"));
    };
    let head: Vec<&str> = content[..on_at].split_whitespace().collect();
    if head.len() != 4 || head[0] != "trans" || head[2] != "->" {
        return Err(syntax(
            line,
            content.len() - content.trim_start().len() + 1,
            "expected 'trans <src> -> <dst> on <guard>'",
        ));
    }
    let resolve = |n: &str| {
        states
            .iter()
            .position(|s| s == n)
            .map(StateId)
            .ok_or_else(|| SafeguardError::UnknownState {
                line,
                name: n.to_string(),
            })
    };
    let source = resolve(head[1])?;
    let target = resolve(head[3])?;

    let guard_start = on_at + 2;
    let guard_text = &content[guard_start..];
    let base_col = content[..guard_start].chars().count();
    let guard = guard::parse_guard(guard_text, labels).map_err(|e| match e.kind {
        GuardErrorKind::Syntax(message) => SafeguardError::Syntax {
            line,
            column: base_col + e.column,
            message,
        },
        GuardErrorKind::UndeclaredLabel(label) => SafeguardError::UndeclaredLabel {
            line,
            column: base_col + e.column,
            label,
        },
    })?;
    Ok(PendingTransition {
        line,
        source,
        target,
        guard,
    })
}

/// Byte offset of the first whitespace-delimited occurrence of `word`.
fn find_word(text: &str, word: &str) -> Option<usize> {
    let mut offset = 0;
    for piece in text.split_inclusive(char::is_whitespace) {
        if piece.trim_end() == word {
            return Some(offset);
        }
        offset += piece.len();
    }
    None
}

fn column_of(raw: &str, word: &str) -> usize {
    raw.find(word).map_or(1, |b| raw[..b].chars().count() + 1)
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> SafeguardError {
    SafeguardError::Syntax {
        line,
        column,
        message: message.into(),
    }
}
