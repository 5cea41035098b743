//! Brute-force and optimality-condition checks for the closed-form solver.

use serde::{Deserialize, Serialize};

use super::search::golden_section;
use super::{ln_expm1, AllocationResult, DecodeOrder, Mode, PairContext, SchemeTag};
use crate::error::{Error, Result};

/// Exponent cap that keeps `e^x` finite when inverting the rate constraint.
const MAX_EXPONENT: f64 = 700.0;

/// Discretized minimizer over `(β, t_r)` that recovers the minimal feasible
/// powers at every grid point independently of the closed-form branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridOracle {
    /// Points per axis, endpoints included. Values below 32 are raised to 32.
    pub resolution: usize,
    /// Run one finer pass over the cells around the incumbent.
    pub refine: bool,
}

impl Default for GridOracle {
    fn default() -> Self {
        Self {
            resolution: 128,
            refine: true,
        }
    }
}

/// Grid minimum with the default refinement pass.
pub fn grid_oracle(ctx: &PairContext, resolution: usize) -> AllocationResult {
    GridOracle {
        resolution,
        refine: true,
    }
    .solve(ctx)
}

impl GridOracle {
    pub fn solve(&self, ctx: &PairContext) -> AllocationResult {
        let n = self.resolution.max(32);
        let slack = ctx.slack_time();
        let t_points = if slack > 0.0 { n } else { 1 };
        let mut best: Option<AllocationResult> = None;
        let consider = |cand: Option<AllocationResult>, best: &mut Option<AllocationResult>| {
            if let Some(c) = cand {
                if best.is_none_or(|b| c.e_tot < b.e_tot) {
                    *best = Some(c);
                }
            }
        };

        for i in 0..n {
            let beta = i as f64 / (n - 1) as f64;
            for j in 0..t_points {
                let t_r = if t_points == 1 { 0.0 } else { slack * j as f64 / (t_points - 1) as f64 };
                for order in DecodeOrder::ALL {
                    consider(point_minimum(ctx, order, beta, t_r), &mut best);
                }
            }
        }
        let mut best = best.expect("beta = 0 is feasible under both orders");

        if self.refine {
            const FINE: usize = 33;
            let d_beta = 1.0 / (n - 1) as f64;
            let d_t = if t_points > 1 { slack / (t_points - 1) as f64 } else { 0.0 };
            let (b_lo, b_hi) = ((best.beta - d_beta).max(0.0), (best.beta + d_beta).min(1.0));
            let (t_lo, t_hi) = ((best.t_r - d_t).max(0.0), (best.t_r + d_t).min(slack));
            let mut refined = Some(best);
            for i in 0..FINE {
                let beta = b_lo + (b_hi - b_lo) * i as f64 / (FINE - 1) as f64;
                for j in 0..FINE {
                    let t_r = t_lo + (t_hi - t_lo) * j as f64 / (FINE - 1) as f64;
                    for order in DecodeOrder::ALL {
                        consider(point_minimum(ctx, order, beta, t_r), &mut refined);
                    }
                }
            }
            best = refined.expect("incumbent kept");
        }
        best
    }
}

/// Minimal energy at a fixed `(β, t_r)` and decoding order, found by a 1-D
/// search over `P_n` with `P_r` set to the smallest value meeting `U_n`'s demand.
fn point_minimum(ctx: &PairContext, order: DecodeOrder, beta: f64, t_r: f64) -> Option<AllocationResult> {
    let h_n = ctx.h_n;
    let need = beta * ctx.load() / ctx.bandwidth;
    let (interference, cap) = match order {
        DecodeOrder::PrimaryFirst => {
            let headroom = ctx.snr_m().ln() - ctx.ln_primary_requirement();
            if headroom < 0.0 {
                return None;
            }
            (1.0, headroom.exp_m1() / h_n)
        }
        DecodeOrder::SecondaryFirst => (1.0 + ctx.snr_m(), f64::INFINITY),
    };
    // NOMA-slot power that alone delivers the whole demand
    let alone = interference * (need / ctx.tau_m).exp_m1() / h_n;

    let dedicated = |p_n: f64| -> f64 {
        if t_r == 0.0 {
            return 0.0;
        }
        let rest = need - ctx.tau_m * (p_n * h_n / interference).ln_1p();
        ((rest / t_r).exp_m1() / h_n).max(0.0)
    };
    let energy = |p_n: f64| ctx.tau_m * p_n + t_r * dedicated(p_n);

    let (p_n, p_r) = if t_r == 0.0 {
        if alone > cap * (1.0 + 1e-12) || !alone.is_finite() {
            return None;
        }
        (alone, 0.0)
    } else {
        let hi = alone.min(cap);
        let floor = interference * ((need - MAX_EXPONENT * t_r) / ctx.tau_m).exp_m1() / h_n;
        let lo = floor.max(0.0);
        if lo > hi || !hi.is_finite() {
            return None;
        }
        let (p_n, _) = golden_section(energy, lo, hi, (hi - lo) * 1e-13);
        (p_n, dedicated(p_n))
    };

    let mode = if p_n > 0.0 && p_r > 0.0 {
        if order == DecodeOrder::PrimaryFirst && p_n >= cap * (1.0 - 1e-9) {
            Mode::HybridBoundary
        } else {
            Mode::HybridUnconstrained
        }
    } else if p_r > 0.0 {
        Mode::Oma
    } else if p_n > 0.0 {
        Mode::PureNoma
    } else {
        Mode::HybridUnconstrained
    };
    let alloc = AllocationResult::evaluate(ctx, SchemeTag { order, mode }, p_n, p_r, t_r, beta);
    alloc.e_tot.is_finite().then_some(alloc)
}

/// Optimality-condition residuals of a fixed-`(β, t_r)` power allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `∂ℒ/∂P_n`, `∂ℒ/∂P_r`, in seconds.
    pub stationarity: Vec<f64>,
    /// `λ₁P_n`, `λ₂P_r`, `λ₃g₃`, `λ₄g₄`.
    pub complementarity: Vec<f64>,
    /// Rate shortfall relative to the task load, relative interference-cap
    /// excess, `−P_n`, `−P_r`. Non-positive when feasible.
    pub primal_violation: Vec<f64>,
    /// `max(0, −λᵢ)` for each multiplier.
    pub dual_violation: Vec<f64>,
    /// `[λ₁, λ₂, λ₃, λ₄]` reconstructed from the branch's active set.
    pub multipliers: [f64; 4],
}

impl KktResidual {
    pub fn max_stationarity(&self) -> f64 {
        max_abs(&self.stationarity)
    }

    pub fn max_complementarity(&self) -> f64 {
        max_abs(&self.complementarity)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Reconstructs the multipliers implied by `alloc`'s branch and evaluates the
/// optimality conditions of the power-allocation subproblem at it.
///
/// `indicator` selects the decoding order (1: `U_m` first, 0: `U_n` first);
/// the interference-cap constraint only exists for indicator 1.
pub fn kkt_residual(ctx: &PairContext, alloc: &AllocationResult, indicator: u8) -> Result<KktResidual> {
    let order = DecodeOrder::from_indicator(indicator)?;
    let b = ctx.bandwidth;
    let h = ctx.h_n;
    let (tau, t_r, p_n, p_r) = (ctx.tau_m, alloc.t_r, alloc.p_n, alloc.p_r);
    let snr_m = ctx.snr_m();
    let ln_i = match order {
        DecodeOrder::PrimaryFirst => 0.0,
        DecodeOrder::SecondaryFirst => snr_m.ln_1p(),
    };
    // ln(I + P_n h) and ln(1 + P_r h), kept in the log domain
    let ln_noma = ln_i + (p_n * h / ln_i.exp()).ln_1p();
    let ln_ded = (p_r * h).ln_1p();
    // rate-constraint gradient factors: B·h / (I + P_n h), B·h / (1 + P_r h)
    let grad_n = b * h * (-ln_noma).exp();
    let grad_r = b * h * (-ln_ded).exp();

    let (mut l1, mut l2, mut l4) = (0.0, 0.0, 0.0);
    let l3 = match alloc.scheme.mode {
        Mode::HybridUnconstrained | Mode::HybridBoundary if t_r > 0.0 => {
            let l3 = 1.0 / grad_r;
            if alloc.scheme.mode == Mode::HybridBoundary {
                if order != DecodeOrder::PrimaryFirst {
                    return Err(Error::domain("the boundary scheme requires indicator 1"));
                }
                l4 = (l3 * tau * grad_n - tau) / h;
            }
            l3
        }
        Mode::HybridUnconstrained | Mode::HybridBoundary | Mode::PureNoma => {
            let l3 = 1.0 / grad_n;
            l2 = t_r - l3 * t_r * grad_r;
            l3
        }
        Mode::Oma => {
            let l3 = 1.0 / grad_r;
            l1 = tau - l3 * tau * grad_n;
            l3
        }
    };

    let stationarity = vec![
        tau - l1 - l3 * tau * grad_n + l4 * h,
        t_r - l2 - l3 * t_r * grad_r,
    ];

    let load = ctx.load();
    let delivered = b * (tau * (ln_noma - ln_i) + t_r * ln_ded);
    let g3 = alloc.beta * load - delivered;
    // P_n h + 1 − X/A, scaled by X/A
    let (g4, g4_rel) = match order {
        DecodeOrder::PrimaryFirst => {
            let q = (snr_m.ln() - ctx.ln_primary_requirement()).exp();
            let g = p_n * h + 1.0 - q;
            (g, g / q)
        }
        DecodeOrder::SecondaryFirst => (0.0, 0.0),
    };
    let multipliers = [l1, l2, l3, l4];
    let complementarity = vec![l1 * p_n, l2 * p_r, l3 * g3, l4 * g4];
    let primal_violation = vec![g3 / load, g4_rel, -p_n, -p_r];
    let dual_violation = multipliers.iter().map(|&l| (-l).max(0.0)).collect();
    Ok(KktResidual {
        stationarity,
        complementarity,
        primal_violation,
        dual_violation,
        multipliers,
    })
}

/// Energy excess of `U_n`-first over `U_m`-first hybrid offloading with the
/// whole task offloaded (`β = 1`) and `t_r = τ_n − τ_m`.
///
/// Only defined while `e^{L/(Bτ_m)} − 1 ≤ P_m·h_m ≤ e^{L/(B(τ_n−τ_m))} − 1`.
pub fn lemma1_gap(ctx: &PairContext) -> Result<f64> {
    let b = ctx.bandwidth;
    let load = ctx.load();
    let slack = ctx.slack_time();
    if slack <= 0.0 {
        return Err(Error::domain("the comparison needs tau_n > tau_m"));
    }
    let ln_x = ctx.snr_m().ln();
    let lower = ctx.ln_primary_requirement();
    let upper = ln_expm1(load / (b * slack));
    if ln_x < lower || ln_x > upper {
        return Err(Error::domain(format!(
            "P_m·h_m = {:.6e} outside [{:.6e}, {:.6e}]",
            ctx.snr_m(),
            lower.exp(),
            upper.exp()
        )));
    }
    let h = ctx.h_n;
    let tau_n = ctx.tau_n;
    let e1 = tau_n * (load / (b * tau_n)).exp_m1() / h;
    let ln_d = ctx.snr_m().ln_1p();
    let d = ln_d.exp();
    let e = (load - b * slack * ln_d) / (b * tau_n);
    let e2 = ctx.tau_m * d * e.exp_m1() / h + slack * (d * e.exp() - 1.0) / h;
    Ok(e2 - e1)
}
