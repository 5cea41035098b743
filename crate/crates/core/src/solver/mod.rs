//! Per-pair energy minimization for hybrid-SIC NOMA offloading.
//!
//! A pair consists of a short-deadline primary user `U_m`, whose transmit
//! power is fixed, and a delay-tolerant user `U_n`, whose NOMA power `P_n`,
//! dedicated-slot power `P_r`, dedicated-slot length `t_r` and offloaded
//! fraction `β` are optimized. The decoding order is chosen per pair by
//! comparing the optimum under each order.
//!
//! All rate expressions are `B·ln(1 + SNR)` compared against the task size
//! scaled by [`RateUnit::load_factor`]; the local-computing term always uses
//! the raw bit count.

mod beta;
mod oracle;
mod pair;
mod power;
pub(crate) mod search;

use serde::{Deserialize, Serialize};

use crate::channel::{channel_gain, sample_users, RateUnit, SystemParams};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use beta::{branch_beta_interval, optimal_beta, optimal_beta_at, optimal_time};
pub use oracle::{grid_oracle, kkt_residual, lemma1_gap, GridOracle, KktResidual};
pub use pair::{constraint_slack, solve_indicator, solve_pair, solve_pair_with, solve_with, BetaChoice, SolveSpec, SolverOptions};
pub use power::{branch_allocation, power_alloc_case0, power_alloc_case1};

/// SIC decoding order inside a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeOrder {
    /// `U_m` is decoded first; `U_n` sees no interference (indicator 1).
    PrimaryFirst,
    /// `U_n` is decoded first, treating `U_m` as noise (indicator 0).
    SecondaryFirst,
}

impl DecodeOrder {
    pub const ALL: [DecodeOrder; 2] = [DecodeOrder::PrimaryFirst, DecodeOrder::SecondaryFirst];

    pub fn indicator(self) -> u8 {
        match self {
            DecodeOrder::PrimaryFirst => 1,
            DecodeOrder::SecondaryFirst => 0,
        }
    }

    pub fn from_indicator(indicator: u8) -> Result<Self> {
        match indicator {
            1 => Ok(DecodeOrder::PrimaryFirst),
            0 => Ok(DecodeOrder::SecondaryFirst),
            other => Err(Error::domain(format!("decoding indicator must be 0 or 1, got {other}"))),
        }
    }
}

/// How `U_n` uses the two transmission windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Transmits in both windows with no active interference cap.
    HybridUnconstrained,
    /// Transmits in both windows with `P_n` pinned at the largest value that
    /// still lets `U_m` be decoded first. Only meaningful for `PrimaryFirst`.
    HybridBoundary,
    /// Transmits only alongside `U_m`; no dedicated slot.
    PureNoma,
    /// Transmits only in the dedicated slot.
    Oma,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::HybridUnconstrained, Mode::HybridBoundary, Mode::PureNoma, Mode::Oma];

    pub fn is_hybrid(self) -> bool {
        matches!(self, Mode::HybridUnconstrained | Mode::HybridBoundary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeTag {
    pub order: DecodeOrder,
    pub mode: Mode,
}

impl SchemeTag {
    pub fn new(order: DecodeOrder, mode: Mode) -> Result<Self> {
        if order == DecodeOrder::SecondaryFirst && mode == Mode::HybridBoundary {
            return Err(Error::domain("the boundary hybrid scheme only exists when U_m is decoded first"));
        }
        Ok(Self { order, mode })
    }

    pub fn indicator(self) -> u8 {
        self.order.indicator()
    }

    /// Every valid scheme, in tie-breaking order.
    pub fn all() -> impl Iterator<Item = SchemeTag> {
        DecodeOrder::ALL.into_iter().flat_map(|order| {
            Mode::ALL
                .into_iter()
                .filter_map(move |mode| SchemeTag::new(order, mode).ok())
        })
    }
}

/// Constants of one user pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairContext {
    pub h_m: f64,
    pub h_n: f64,
    pub tau_m: f64,
    pub tau_n: f64,
    pub p_m: f64,
    pub task_bits: f64,
    pub bandwidth: f64,
    pub kappa0: f64,
    pub cycles_per_bit: f64,
    pub rate_unit: RateUnit,
}

impl PairContext {
    /// Builds a context with `U_m` the shorter-deadline user and everything else from `params`.
    pub fn from_users(params: &SystemParams, (h_a, tau_a): (f64, f64), (h_b, tau_b): (f64, f64)) -> Result<Self> {
        let ((h_m, tau_m), (h_n, tau_n)) = if tau_a <= tau_b {
            ((h_a, tau_a), (h_b, tau_b))
        } else {
            ((h_b, tau_b), (h_a, tau_a))
        };
        Self {
            h_m,
            h_n,
            tau_m,
            tau_n,
            p_m: params.primary_power_w,
            task_bits: params.task_bits,
            bandwidth: params.bandwidth_hz,
            kappa0: params.kappa0,
            cycles_per_bit: params.cycles_per_bit,
            rate_unit: params.rate_unit,
        }
        .validated()
    }

    /// Draws a random pair from the cell model of `params`.
    pub fn sample(rng: &mut SimRng, params: &SystemParams) -> Result<Self> {
        let users = sample_users(rng, 2, params)?;
        let a = (channel_gain(&users[0], params)?.value(), users[0].deadline_s);
        let b = (channel_gain(&users[1], params)?.value(), users[1].deadline_s);
        Self::from_users(params, a, b)
    }

    pub fn validated(self) -> Result<Self> {
        let fields = [
            ("h_m", self.h_m),
            ("h_n", self.h_n),
            ("tau_m", self.tau_m),
            ("tau_n", self.tau_n),
            ("p_m", self.p_m),
            ("task_bits", self.task_bits),
            ("bandwidth", self.bandwidth),
            ("kappa0", self.kappa0),
            ("cycles_per_bit", self.cycles_per_bit),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("pair context field {name} must be positive and finite, got {value}")));
            }
        }
        if self.tau_m > self.tau_n {
            return Err(Error::domain(format!(
                "tau_m ({}) must not exceed tau_n ({})",
                self.tau_m, self.tau_n
            )));
        }
        Ok(self)
    }

    /// Task size expressed in the unit the rate expressions deliver.
    pub(crate) fn load(&self) -> f64 {
        self.task_bits * self.rate_unit.load_factor()
    }

    /// `P_m·h_m`.
    pub(crate) fn snr_m(&self) -> f64 {
        self.p_m * self.h_m
    }

    /// `ln(e^{L/(B·τ_m)} − 1)`: log of the SNR `U_m` needs to finish alone.
    pub(crate) fn ln_primary_requirement(&self) -> f64 {
        ln_expm1(self.load() / (self.bandwidth * self.tau_m))
    }

    /// `κ₀·(C·L)³`
    pub(crate) fn local_work(&self) -> f64 {
        self.kappa0 * (self.cycles_per_bit * self.task_bits).powi(3)
    }

    pub(crate) fn slack_time(&self) -> f64 {
        (self.tau_n - self.tau_m).max(0.0)
    }
}

/// A schedule for `U_n` with its energy breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub scheme: SchemeTag,
    pub p_n: f64,
    pub p_r: f64,
    pub t_r: f64,
    pub beta: f64,
    pub e_loc: f64,
    pub e_off: f64,
    pub e_tot: f64,
}

impl AllocationResult {
    pub(crate) fn evaluate(ctx: &PairContext, scheme: SchemeTag, p_n: f64, p_r: f64, t_r: f64, beta: f64) -> Self {
        let e_loc = local_energy_unchecked(ctx, beta, ctx.tau_m + t_r);
        let e_off = offload_energy(ctx.tau_m, p_n, t_r, p_r);
        Self {
            scheme,
            p_n,
            p_r,
            t_r,
            beta,
            e_loc,
            e_off,
            e_tot: e_loc + e_off,
        }
    }
}

/// Achievable rate in nats/s: `B·ln(1 + P_sig·h_sig / (P_int·h_int + 1))`.
pub fn rate_uplink(p_sig: f64, h_sig: f64, p_int: f64, h_int: f64, bandwidth: f64) -> f64 {
    bandwidth * (p_sig * h_sig / (p_int * h_int + 1.0)).ln_1p()
}

/// Energy of executing the `(1 − β)` share locally over `t_total` seconds.
pub fn local_energy(ctx: &PairContext, beta: f64, t_total: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    if t_total < 0.0 || (t_total == 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("local execution needs positive time, got {t_total}")));
    }
    Ok(local_energy_unchecked(ctx, beta, t_total))
}

pub(crate) fn local_energy_unchecked(ctx: &PairContext, beta: f64, t_total: f64) -> f64 {
    let remaining = 1.0 - beta;
    if remaining <= 0.0 {
        return 0.0;
    }
    ctx.local_work() * remaining.powi(3) / (t_total * t_total)
}

fn offload_energy(tau_m: f64, p_n: f64, t_r: f64, p_r: f64) -> f64 {
    // A zero-length slot contributes nothing even when its power formula diverges.
    let dedicated = if t_r == 0.0 { 0.0 } else { t_r * p_r };
    tau_m * p_n + dedicated
}

/// Recomputes the energy breakdown of `alloc`: returns `(E_loc, E_off, E_tot)`.
pub fn total_energy(ctx: &PairContext, alloc: &AllocationResult) -> (f64, f64, f64) {
    let e_loc = local_energy_unchecked(ctx, alloc.beta, ctx.tau_m + alloc.t_r);
    let e_off = offload_energy(ctx.tau_m, alloc.p_n, alloc.t_r, alloc.p_r);
    (e_loc, e_off, e_loc + e_off)
}

/// `ln(eˣ − 1)` for `x > 0` without overflow.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// h_m = h_n = 1 W⁻¹, τ_m = 0.2 s, τ_n = 0.3 s, B = L = 2·10⁶, P_m = 1 W, default CPU constants.
    pub fn unit_gain_pair() -> PairContext {
        PairContext {
            h_m: 1.0,
            h_n: 1.0,
            tau_m: 0.2,
            tau_n: 0.3,
            p_m: 1.0,
            task_bits: 2e6,
            bandwidth: 2e6,
            kappa0: 1e-28,
            cycles_per_bit: 1e3,
            rate_unit: RateUnit::Nats,
        }
    }

    /// A cell-edge-like pair with gains in the range the Table-I geometry produces.
    pub fn typical_pair() -> PairContext {
        PairContext {
            h_m: 2.0e5,
            h_n: 3.0e3,
            tau_m: 0.22,
            tau_n: 0.29,
            ..unit_gain_pair()
        }
    }
}
