use rand::Rng;

use crate::gridworld::Action;

/// Boltzmann probabilities `exp(v_a / tau)` normalized, with the maximum
/// subtracted first so large magnitudes cannot overflow.
pub fn boltzmann_probs(values: &[f64], tau: f64) -> [f64; Action::COUNT] {
    debug_assert_eq!(values.len(), Action::COUNT);
    assert!(tau > 0.0, "temperature must be positive");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; Action::COUNT];
    let mut sum = 0.0;
    for (pi, &v) in p.iter_mut().zip(values) {
        *pi = ((v - max) / tau).exp();
        sum += *pi;
    }
    for pi in &mut p {
        *pi /= sum;
    }
    p
}

/// Samples an action from the Boltzmann distribution over `values`.
pub fn boltzmann_action<R: Rng + ?Sized>(values: &[f64], tau: f64, rng: &mut R) -> Action {
    let p = boltzmann_probs(values, tau);
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Action::from_index(i);
        }
    }
    // Rounding left a sliver above the last cumulative sum.
    let last = p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0);
    Action::from_index(last)
}
