//! Exploration schedule, action selection and bootstrap targets.

use rand::Rng;

use super::network::{forward, QNetwork};
use super::replay::Transition;
use super::HyperParams;
use crate::error::Result;
use crate::grouping::ActionIndex;
use crate::rng::SimRng;

/// Linear decay from `eps_hi` at step 0 to `eps_lo` at `eps_decay_steps`, then flat.
pub fn epsilon_at(step: u64, hp: &HyperParams) -> f64 {
    if step >= hp.eps_decay_steps {
        return hp.eps_lo;
    }
    let frac = step as f64 / hp.eps_decay_steps as f64;
    hp.eps_hi + (hp.eps_lo - hp.eps_hi) * frac
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice over `q`.
pub fn select_action(q: &[f64], eps: f64, rng: &mut SimRng) -> ActionIndex {
    assert!(!q.is_empty(), "no actions to choose from");
    let explore: f64 = rng.random();
    if explore < eps {
        ActionIndex(rng.random_range(0..q.len()))
    } else {
        ActionIndex(argmax(q))
    }
}

/// `y_i = r_i + γ·max_a′ Q(s′_i, a′; θ⁻)`.
pub fn compute_targets(batch: &[&Transition], target_net: &QNetwork, gamma: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            let q = forward(target_net, &t.s_next)?;
            Ok(t.r + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

/// Bit-identical copy of the online network.
pub fn sync_target(net: &QNetwork) -> QNetwork {
    net.clone()
}
