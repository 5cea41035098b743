//! Training loop: ε-greedy interaction, replay, target network.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{forward, loss_and_gradients, QNetwork, Sample};
use super::policy::{compute_targets, epsilon_at, select_action, sync_target};
use super::replay::{ReplayMemory, Transition};
use super::{normalize_state, HyperParams, RewardScaling, StateScaling};
use crate::channel::CellEnv;
use crate::error::{Error, Result};
use crate::grouping::{all_pairings, random_pairing, PairEnergyTable};
use crate::rng::{self, streams};

/// Reward and input scales measured on a random-policy rollout before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Mean per-slot energy of uniformly random pairings.
    pub energy_ref_j: f64,
    pub scaling: StateScaling,
}

impl Calibration {
    /// `clamp(−E / E_ref, −1, 1)`.
    pub fn scaled_reward(&self, energy: f64) -> f64 {
        (-energy / self.energy_ref_j).clamp(-1.0, 1.0)
    }
}

fn scaled_reward(hp: &HyperParams, calibration: &Calibration, energy: f64, slot_mean: f64) -> f64 {
    match hp.reward_scaling {
        RewardScaling::Calibrated => calibration.scaled_reward(energy),
        RewardScaling::SlotRelative => (-(1.0 - hp.gamma) * energy / slot_mean).clamp(-1.0, 1.0),
    }
}

/// Per-episode training record. Energies are raw per-slot means in joules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Mean energy of the pairings the agent chose.
    pub mean_energy_j: f64,
    /// Exploration rate after the episode's last step.
    pub epsilon: f64,
    /// Mean loss over the episode's learning steps (0 if none).
    pub loss_mean: f64,
    /// Mean energy of a uniformly random pairing on the same slots.
    pub random_energy_j: f64,
    /// Mean energy of the best pairing on the same slots.
    pub optimal_energy_j: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: QNetwork,
    pub log: Vec<EpisodeLog>,
    pub calibration: Calibration,
}

/// Random-policy rollout on its own stream; positions are redrawn every slot
/// so the statistics cover the whole cell.
pub fn calibrate(env: &CellEnv, hp: &HyperParams, seed: u64) -> Result<Calibration> {
    let params = env.params().clone();
    let k = env.num_users();
    let mut cal_env = CellEnv::new(params.clone(), k, rng::stream(seed, streams::CALIBRATION))?;
    let mut pick = rng::stream(seed ^ 0x5eed, streams::CALIBRATION);
    let mut energy = 0.0;
    let mut logs = Vec::with_capacity(hp.calibration_steps * k);
    for _ in 0..hp.calibration_steps {
        cal_env.reset();
        let state = cal_env.observe();
        logs.extend(state.gains.iter().map(|g| g.value().log10()));
        let pairing = random_pairing(&mut pick, k)?;
        energy += PairEnergyTable::new(&state, &params)?.energy(&pairing);
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let energy_ref_j = energy / hp.calibration_steps as f64;
    if !(energy_ref_j.is_finite() && energy_ref_j > 0.0) {
        return Err(Error::Internal(format!("calibration energy {energy_ref_j} is unusable")));
    }
    Ok(Calibration {
        energy_ref_j,
        scaling: StateScaling::new(mean, var.sqrt(), &params),
    })
}

/// Runs the DQN pairing algorithm on `env` for `hp.episodes` episodes.
///
/// Every random choice comes from a stream derived from `seed`, so the
/// outcome is a pure function of `(seed, env, hp)`.
pub fn train(env: &mut CellEnv, hp: &HyperParams, seed: u64) -> Result<TrainOutcome> {
    hp.validate("dqn")?;
    let params = env.params().clone();
    let k = env.num_users();
    let pairings = all_pairings(k)?;
    let calibration = calibrate(env, hp, seed)?;
    let scaling = calibration.scaling;

    let mut init_rng = rng::stream(seed, streams::INIT);
    let mut explore_rng = rng::stream(seed, streams::EXPLORATION);
    let mut replay_rng = rng::stream(seed, streams::REPLAY);
    let mut baseline_rng = rng::stream(seed, streams::BASELINE);

    let mut net = QNetwork::random(&QNetwork::dims_for_users(k)?, &mut init_rng)?;
    let mut target = sync_target(&net);
    let mut opt = AdamState::new(&net);
    let mut memory = ReplayMemory::new(hp.capacity);
    let mut global_step: u64 = 0;
    let mut learn_steps: u64 = 0;
    let mut log = Vec::with_capacity(hp.episodes);

    for episode in 0..hp.episodes {
        env.reset();
        let mut state = env.observe();
        let mut x = normalize_state(&state, &scaling)?;
        let (mut chosen_sum, mut random_sum, mut optimal_sum) = (0.0, 0.0, 0.0);
        let (mut loss_sum, mut loss_count) = (0.0, 0usize);

        for _ in 0..hp.steps_per_episode {
            let q = forward(&net, &x)?;
            let eps = epsilon_at(global_step, hp);
            let action = select_action(&q, eps, &mut explore_rng);

            let table = PairEnergyTable::new(&state, &params)?;
            let energy = table.energy(&pairings[action.0]);
            chosen_sum += energy;
            random_sum += table.energy(&random_pairing(&mut baseline_rng, k)?);
            optimal_sum += table.best().1;
            let slot_mean = pairings.iter().map(|p| table.energy(p)).sum::<f64>() / pairings.len() as f64;

            let next_state = env.observe();
            let x_next = normalize_state(&next_state, &scaling)?;
            memory.push(Transition {
                s: x,
                a: action.0,
                r: scaled_reward(hp, &calibration, energy, slot_mean),
                s_next: x_next.clone(),
            });

            if memory.len() >= hp.batch {
                let batch = memory.sample(&mut replay_rng, hp.batch);
                let targets = compute_targets(&batch, &target, hp.gamma)?;
                let samples: Vec<Sample> = batch
                    .iter()
                    .zip(&targets)
                    .map(|(t, &y)| Sample {
                        x: &t.s,
                        action: t.a,
                        target: y,
                    })
                    .collect();
                let (loss, grads) = loss_and_gradients(&net, &samples)?;
                adam_step(&mut opt, &mut net, &grads, hp.lr)?;
                loss_sum += loss;
                loss_count += 1;
                learn_steps += 1;
                if learn_steps.is_multiple_of(hp.target_update) {
                    target = sync_target(&net);
                }
            }

            state = next_state;
            x = x_next;
            global_step += 1;
        }

        let steps = hp.steps_per_episode as f64;
        let record = EpisodeLog {
            episode,
            mean_energy_j: chosen_sum / steps,
            epsilon: epsilon_at(global_step.saturating_sub(1), hp),
            loss_mean: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
            random_energy_j: random_sum / steps,
            optimal_energy_j: optimal_sum / steps,
        };
        log::debug!(
            "episode {episode}: chosen {:.4e} J, random {:.4e} J, optimal {:.4e} J, loss {:.3e}",
            record.mean_energy_j,
            record.random_energy_j,
            record.optimal_energy_j,
            record.loss_mean
        );
        log.push(record);
    }

    if !net.is_finite() {
        return Err(Error::Internal("training produced non-finite parameters".into()));
    }
    Ok(TrainOutcome {
        network: net,
        log,
        calibration,
    })
}

/// Writes the episode log with columns `episode, mean_energy_J, epsilon, loss_mean`.
pub fn write_log_csv(path: &Path, log: &[EpisodeLog]) -> Result<()> {
    let mut out = String::from("episode,mean_energy_J,epsilon,loss_mean\n");
    for r in log {
        writeln!(out, "{},{},{},{}", r.episode, r.mean_energy_j, r.epsilon, r.loss_mean).expect("write to String");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
