//! Dedicated-slot length and offloading ratio.

use super::{DecodeOrder, Mode, PairContext, SchemeTag};
use crate::error::{Error, Result};
use crate::lambertw::lambert_w0_exp;

/// Optimal dedicated-slot length: the whole spare time `τ_n − τ_m`.
///
/// Every branch's energy is non-increasing in `t_r`, so the slot always
/// extends to `U_n`'s deadline.
pub fn optimal_time(ctx: &PairContext) -> f64 {
    ctx.slack_time()
}

/// Stationary offloading ratio of a hybrid branch at `t_r = τ_n − τ_m`, clamped to `[0, 1]`.
pub fn optimal_beta(ctx: &PairContext, scheme: SchemeTag) -> Result<f64> {
    optimal_beta_at(ctx, scheme, optimal_time(ctx))
}

/// Stationary offloading ratio of a hybrid branch at an arbitrary `t_r`, clamped to `[0, 1]`.
///
/// Each hybrid branch's energy has the form `a·(1−β)³ + c·e^{z₂β} + const`,
/// whose stationarity condition `z₁(1−β)² = e^{z₂(1−β)}` is solved by
/// `1 − β = (2/z₂)·W₀(½·z₁^{-1/2}·z₂·e^{z₂/2})`. Everything is carried in the
/// log domain so extreme deadlines cannot overflow the Lambert argument.
pub fn optimal_beta_at(ctx: &PairContext, scheme: SchemeTag, t_r: f64) -> Result<f64> {
    let b = ctx.bandwidth;
    let load = ctx.load();
    let t_total = ctx.tau_m + t_r;
    // ln(3κ₀(CL)³·B·h_n / (T²·L_rate))
    let ln_base = (3.0 * ctx.local_work()).ln() + b.ln() + ctx.h_n.ln() - 2.0 * t_total.ln() - load.ln();

    let (ln_z1, z2) = match (scheme.order, scheme.mode) {
        (DecodeOrder::PrimaryFirst, Mode::HybridUnconstrained) => (ln_base, load / (b * t_total)),
        (DecodeOrder::PrimaryFirst, Mode::HybridBoundary) => {
            if t_r <= 0.0 {
                return Err(Error::domain("the boundary hybrid scheme needs a positive dedicated slot"));
            }
            let ln_q = ctx.snr_m().ln() - ctx.ln_primary_requirement();
            let u = ctx.tau_m / t_r * ln_q;
            (ln_base + u, load / (b * t_r))
        }
        (DecodeOrder::SecondaryFirst, Mode::HybridUnconstrained) => {
            let ln_d = ctx.snr_m().ln_1p();
            (ln_base - ctx.tau_m / t_total * ln_d, load / (b * t_total))
        }
        _ => {
            return Err(Error::domain(format!(
                "no closed-form offloading ratio for {:?}/{:?}",
                scheme.order, scheme.mode
            )))
        }
    };

    let ln_arg = -std::f64::consts::LN_2 - 0.5 * ln_z1 + z2.ln() + 0.5 * z2;
    let w = lambert_w0_exp(ln_arg)?;
    let local_share = 2.0 * w / z2;
    Ok((1.0 - local_share).clamp(0.0, 1.0))
}

/// Range of `β` on which `scheme` is a feasible allocation at slot length `t_r`,
/// or `None` if it is feasible nowhere.
pub fn branch_beta_interval(ctx: &PairContext, scheme: SchemeTag, t_r: f64) -> Option<(f64, f64)> {
    let load_per_hz = ctx.load() / ctx.bandwidth;
    let headroom = ctx.snr_m().ln() - ctx.ln_primary_requirement();
    let clip = |lo: f64, hi: f64| {
        let (lo, hi) = (lo.max(0.0), hi.min(1.0));
        (lo <= hi).then_some((lo, hi))
    };

    match (scheme.order, scheme.mode) {
        (DecodeOrder::PrimaryFirst, _) if headroom < 0.0 => None,
        (_, Mode::HybridUnconstrained | Mode::HybridBoundary | Mode::Oma) if t_r <= 0.0 => None,
        (DecodeOrder::PrimaryFirst, Mode::HybridUnconstrained) => {
            clip(0.0, (ctx.tau_m + t_r) * headroom / load_per_hz)
        }
        (DecodeOrder::PrimaryFirst, Mode::HybridBoundary) => clip(ctx.tau_m * headroom / load_per_hz, 1.0),
        (DecodeOrder::PrimaryFirst, Mode::PureNoma) => clip(0.0, ctx.tau_m * headroom / load_per_hz),
        (DecodeOrder::SecondaryFirst, Mode::HybridUnconstrained) => {
            clip(t_r * ctx.snr_m().ln_1p() / load_per_hz, 1.0)
        }
        (_, Mode::PureNoma | Mode::Oma) => Some((0.0, 1.0)),
        (DecodeOrder::SecondaryFirst, Mode::HybridBoundary) => None,
    }
}
