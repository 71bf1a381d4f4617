//! Random deterministic safeguards, for property tests and benchmarks.

use rand::Rng;

use super::{parse_safeguard, Guard, LabelSet, Safeguard};

/// Draws a complete deterministic machine with `num_states` states over
/// `num_labels` labels named `l0, l1, ...`.
///
/// Each state maps every label set to a random target; the guards are
/// disjunctions of minterms. One outgoing transition per state is written as
/// `else` when that state has more than one target. Roughly a third of the
/// states are accepting, and state `q0` is initial. The result goes through the
/// text format so the parser is exercised as well.
pub fn random_safeguard<R: Rng + ?Sized>(rng: &mut R, num_states: usize, num_labels: usize) -> Safeguard {
    assert!(num_states >= 1);
    assert!(num_labels <= super::MAX_LABELS);
    parse_safeguard(&random_safeguard_text(rng, num_states, num_labels))
        .expect("generated safeguard text is well formed")
}

pub fn random_safeguard_text<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_labels: usize,
) -> String {
    let labels: Vec<String> = (0..num_labels).map(|i| format!("l{i}")).collect();
    let mut text = String::from("safeguard random\n");
    if num_labels > 0 {
        text.push_str(&format!("labels {}\n", labels.join(" ")));
    }
    for q in 0..num_states {
        text.push_str(&format!("state q{q}"));
        if q == 0 {
            text.push_str(" initial");
        }
        if rng.gen_bool(1.0 / 3.0) {
            text.push_str(" accepting");
        }
        text.push('\n');
    }
    // Bias towards self-loops and absorbing states so sinks actually occur.
    for q in 0..num_states {
        let absorbing = rng.gen_bool(0.2);
        let mut targets: Vec<Vec<LabelSet>> = vec![Vec::new(); num_states];
        for l in LabelSet::all(num_labels) {
            let t = if absorbing || rng.gen_bool(0.4) {
                q
            } else {
                rng.gen_range(0..num_states)
            };
            targets[t].push(l);
        }
        let used: Vec<usize> = (0..num_states).filter(|t| !targets[*t].is_empty()).collect();
        let else_target = (used.len() > 1 && rng.gen_bool(0.5)).then(|| used[rng.gen_range(0..used.len())]);
        for t in used {
            let guard = if Some(t) == else_target {
                "else".to_string()
            } else {
                minterms(&targets[t], num_labels).display(&labels).to_string()
            };
            text.push_str(&format!("trans q{q} -> q{t} on {guard}\n"));
        }
    }
    text
}

fn minterms(sets: &[LabelSet], num_labels: usize) -> Guard {
    if sets.len() == 1 << num_labels {
        return Guard::True;
    }
    Guard::any(sets.iter().map(|&l| {
        Guard::all((0..num_labels).map(|i| {
            if l.contains(i) {
                Guard::Atom(i)
            } else {
                Guard::not(Guard::Atom(i))
            }
        }))
        .unwrap_or(Guard::True)
    }))
    .unwrap_or(Guard::True)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_machines_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..=10);
            let k = rng.gen_range(0..=4);
            let g = random_safeguard(&mut rng, n, k);
            assert!(g.validate_determinism().is_ok(), "{}", g.to_text());
        }
    }
}
