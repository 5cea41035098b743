//! Deep Q-network user pairing, implemented from scratch.

mod adam;
mod network;
mod policy;
mod replay;
mod train;

use serde::{Deserialize, Serialize};

use crate::channel::{GroupingState, SystemParams};
use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use network::{forward, loss_and_gradients, QNetwork, Sample};
pub use policy::{argmax, compute_targets, epsilon_at, select_action, sync_target};
pub use replay::{ReplayMemory, Transition};
pub use train::{calibrate, train, write_log_csv, Calibration, EpisodeLog, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub eps_hi: f64,
    pub eps_lo: f64,
    pub eps_decay_steps: u64,
    pub gamma: f64,
    pub capacity: usize,
    pub batch: usize,
    /// Learning steps between target-network syncs.
    pub target_update: u64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub lr: f64,
    /// Length of the random-policy rollout that fixes the reward and state scales.
    pub calibration_steps: usize,
    pub reward_scaling: RewardScaling,
}

/// How raw slot energies are mapped to rewards in `[−1, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardScaling {
    /// `−E / E_ref` with `E_ref` the calibration rollout's mean random-pairing energy.
    Calibrated,
    /// `−(1−γ)·E / Ē(s)` with `Ē(s)` the mean energy over all pairings of the
    /// current slot, so that discounted returns stay inside the tanh range.
    #[default]
    SlotRelative,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eps_hi: 0.5,
            eps_lo: 0.01,
            eps_decay_steps: 2000,
            gamma: 0.7,
            capacity: 20_000,
            batch: 64,
            target_update: 10,
            episodes: 150,
            steps_per_episode: 500,
            lr: 0.01,
            calibration_steps: 200,
            reward_scaling: RewardScaling::default(),
        }
    }
}

impl HyperParams {
    /// Checks every field; errors name the offending field under `prefix`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.eps_lo) {
            return Err(Error::config(field("eps_lo"), "must lie in [0, 1]"));
        }
        if !unit(self.eps_hi) || self.eps_hi < self.eps_lo {
            return Err(Error::config(field("eps_hi"), "must lie in [eps_lo, 1]"));
        }
        if !unit(self.gamma) {
            return Err(Error::config(field("gamma"), "must lie in [0, 1]"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(field("lr"), "must be positive"));
        }
        let counts = [
            ("eps_decay_steps", self.eps_decay_steps as usize),
            ("capacity", self.capacity),
            ("batch", self.batch),
            ("target_update", self.target_update as usize),
            ("episodes", self.episodes),
            ("steps_per_episode", self.steps_per_episode),
            ("calibration_steps", self.calibration_steps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(field(name), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Fixed affine maps that bring states to roughly `[−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateScaling {
    /// Mean of `log10(h)`.
    pub log_gain_mean: f64,
    /// Standard deviation of `log10(h)`.
    pub log_gain_std: f64,
    pub deadline_range_s: [f64; 2],
}

impl StateScaling {
    pub fn new(log_gain_mean: f64, log_gain_std: f64, params: &SystemParams) -> Self {
        Self {
            log_gain_mean,
            log_gain_std: if log_gain_std > 0.0 { log_gain_std } else { 1.0 },
            deadline_range_s: params.deadline_range_s,
        }
    }
}

/// Network input for `state`: scaled log-gains followed by scaled deadlines.
pub fn normalize_state(state: &GroupingState, scaling: &StateScaling) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(2 * state.num_users());
    for g in &state.gains {
        let h = g.value();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("channel gain must be positive, got {h}")));
        }
        x.push((h.log10() - scaling.log_gain_mean) / scaling.log_gain_std);
    }
    let [lo, hi] = scaling.deadline_range_s;
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    for &tau in &state.deadlines {
        x.push(if half > 0.0 { (tau - mid) / half } else { 0.0 });
    }
    Ok(x)
}
