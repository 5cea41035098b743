//! Closed-form power allocation for fixed `(β, t_r)`.
//!
//! Feasibility thresholds are compared in the log domain so that very
//! demanding deadlines (huge `e^{L/(Bτ)}`) do not overflow.

use super::{AllocationResult, DecodeOrder, Mode, PairContext, SchemeTag};
use crate::error::{Error, Result};

/// Slack allowed on log-domain threshold comparisons.
pub(crate) const THRESHOLD_TOL: f64 = 1e-12;

/// `P_n`, `P_r` and the effective `t_r` of `scheme` at `(β, t_r)`.
///
/// Pure NOMA always reports `t_r = 0`. No feasibility check is made: the
/// formulas are evaluated wherever they are defined, which is what the
/// monotonicity and stationarity checks need.
pub(crate) fn branch_powers(ctx: &PairContext, scheme: SchemeTag, beta: f64, t_r: f64) -> (f64, f64, f64) {
    let b = ctx.bandwidth;
    let h_n = ctx.h_n;
    // offloaded load in nat-seconds per Hz
    let need = beta * ctx.load() / b;
    let t_total = ctx.tau_m + t_r;
    match (scheme.order, scheme.mode) {
        (DecodeOrder::PrimaryFirst, Mode::HybridUnconstrained) => {
            let p = (need / t_total).exp_m1() / h_n;
            (p, p, t_r)
        }
        (DecodeOrder::PrimaryFirst, Mode::HybridBoundary) => {
            let ln_q = ctx.snr_m().ln() - ctx.ln_primary_requirement();
            let p_n = ln_q.exp_m1() / h_n;
            let p_r = dedicated_power(need - ctx.tau_m * ln_q, t_r, h_n);
            (p_n, p_r, t_r)
        }
        (DecodeOrder::SecondaryFirst, Mode::HybridUnconstrained) => {
            let ln_d = ctx.snr_m().ln_1p();
            // common post-SIC SNR of both windows: ln S = (need + τ_m·ln D) / (τ_m + t_r)
            let excess = (need - t_r * ln_d) / t_total;
            let p_n = ln_d.exp() * excess.exp_m1() / h_n;
            let p_r = (excess + ln_d).exp_m1() / h_n;
            (p_n, p_r, t_r)
        }
        (order, Mode::PureNoma) => {
            let interference = match order {
                DecodeOrder::PrimaryFirst => 1.0,
                DecodeOrder::SecondaryFirst => 1.0 + ctx.snr_m(),
            };
            let p_n = interference * (need / ctx.tau_m).exp_m1() / h_n;
            (p_n, 0.0, 0.0)
        }
        (_, Mode::Oma) => (0.0, dedicated_power(need, t_r, h_n), t_r),
        (DecodeOrder::SecondaryFirst, Mode::HybridBoundary) => unreachable!("rejected by SchemeTag::new"),
    }
}

/// Power that delivers `need` nat-seconds/Hz over a dedicated slot of `t_r` seconds.
fn dedicated_power(need: f64, t_r: f64, h_n: f64) -> f64 {
    if t_r == 0.0 {
        return if need > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (need / t_r).exp_m1() / h_n
}

/// Evaluates `scheme` at `(β, t_r)` with its energy breakdown, without feasibility checks.
pub fn branch_allocation(ctx: &PairContext, scheme: SchemeTag, beta: f64, t_r: f64) -> AllocationResult {
    let (p_n, p_r, t_eff) = branch_powers(ctx, scheme, beta, t_r);
    AllocationResult::evaluate(ctx, scheme, p_n.max(0.0), p_r.max(0.0), t_eff, beta)
}

fn check_inputs(ctx: &PairContext, beta: f64, t_r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    if !(t_r >= 0.0 && t_r <= ctx.slack_time() * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "t_r must lie in [0, {}], got {t_r}",
            ctx.slack_time()
        )));
    }
    Ok(())
}

fn scheme(order: DecodeOrder, mode: Mode) -> SchemeTag {
    SchemeTag { order, mode }
}

/// Every feasible branch when `U_m` is decoded first.
///
/// May be empty: when `P_m·h_m < e^{L/(Bτ_m)} − 1`, `U_m` cannot finish
/// even without interference and this decoding order is infeasible.
pub fn power_alloc_case1(ctx: &PairContext, beta: f64, t_r: f64) -> Result<Vec<AllocationResult>> {
    check_inputs(ctx, beta, t_r)?;
    let mut out = Vec::new();
    let ln_x = ctx.snr_m().ln();
    let ln_a = ctx.ln_primary_requirement();
    let need = beta * ctx.load() / ctx.bandwidth;
    if ln_x < ln_a - THRESHOLD_TOL {
        return Ok(out);
    }
    // headroom of U_m's SNR over its own requirement, ln(P_m h_m / A)
    let headroom = ln_x - ln_a;
    let order = DecodeOrder::PrimaryFirst;

    if t_r > 0.0 {
        if headroom >= need / (ctx.tau_m + t_r) - THRESHOLD_TOL {
            out.push(branch_allocation(ctx, scheme(order, Mode::HybridUnconstrained), beta, t_r));
        }
        if headroom <= need / ctx.tau_m + THRESHOLD_TOL {
            out.push(branch_allocation(ctx, scheme(order, Mode::HybridBoundary), beta, t_r));
        }
    }
    if headroom >= need / ctx.tau_m - THRESHOLD_TOL {
        out.push(branch_allocation(ctx, scheme(order, Mode::PureNoma), beta, t_r));
    }
    if t_r > 0.0 {
        out.push(branch_allocation(ctx, scheme(order, Mode::Oma), beta, t_r));
    }
    Ok(out)
}

/// Every feasible branch when `U_n` is decoded first. Never empty.
pub fn power_alloc_case0(ctx: &PairContext, beta: f64, t_r: f64) -> Result<Vec<AllocationResult>> {
    check_inputs(ctx, beta, t_r)?;
    let mut out = Vec::new();
    let order = DecodeOrder::SecondaryFirst;
    let need = beta * ctx.load() / ctx.bandwidth;
    if t_r > 0.0 && ctx.snr_m().ln_1p() <= need / t_r + THRESHOLD_TOL {
        out.push(branch_allocation(ctx, scheme(order, Mode::HybridUnconstrained), beta, t_r));
    }
    out.push(branch_allocation(ctx, scheme(order, Mode::PureNoma), beta, t_r));
    if t_r > 0.0 {
        out.push(branch_allocation(ctx, scheme(order, Mode::Oma), beta, t_r));
    }
    Ok(out)
}
