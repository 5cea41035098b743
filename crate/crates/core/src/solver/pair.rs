//! Hybrid-SIC scheme selection for one pair.

use serde::{Deserialize, Serialize};

use super::beta::{branch_beta_interval, optimal_beta_at, optimal_time};
use super::power::branch_allocation;
use super::search::golden_section;
use super::{AllocationResult, DecodeOrder, Mode, PairContext, SchemeTag};

/// Tolerance of the 1-D search over `β` for the non-hybrid branches.
const BETA_SEARCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Warn when `U_n`-first decoding is chosen although `U_m` could not meet
    /// its deadline even interference-free.
    pub strict_primary_check: bool,
}

/// How `β` is chosen for each candidate branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    Optimized,
    Fixed(f64),
}

/// Restricts the candidate branches considered by [`solve_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveSpec {
    pub orders: Vec<DecodeOrder>,
    pub modes: Vec<Mode>,
    pub beta: BetaChoice,
}

impl Default for SolveSpec {
    fn default() -> Self {
        Self {
            orders: DecodeOrder::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            beta: BetaChoice::Optimized,
        }
    }
}

/// Minimum-energy allocation for `ctx` over both decoding orders.
pub fn solve_pair(ctx: &PairContext) -> AllocationResult {
    solve_pair_with(ctx, &SolverOptions::default())
}

pub fn solve_pair_with(ctx: &PairContext, options: &SolverOptions) -> AllocationResult {
    let best = solve_with(ctx, &SolveSpec::default())
        .expect("pure NOMA with U_n decoded first is always feasible");
    if options.strict_primary_check && best.scheme.order == DecodeOrder::SecondaryFirst {
        let alone = ctx.tau_m * ctx.bandwidth * ctx.snr_m().ln_1p();
        if alone < ctx.load() {
            log::warn!(
                "U_n-first decoding selected but U_m cannot finish alone: {:.4e} < {:.4e}",
                alone,
                ctx.load()
            );
        }
    }
    best
}

/// Best allocation under one decoding order, or `None` if that order is infeasible.
pub fn solve_indicator(ctx: &PairContext, order: DecodeOrder) -> Option<AllocationResult> {
    solve_with(
        ctx,
        &SolveSpec {
            orders: vec![order],
            ..SolveSpec::default()
        },
    )
}

/// Best allocation among the branches admitted by `spec`, at `t_r = τ_n − τ_m`.
///
/// Candidates are visited in [`SchemeTag::all`] order and only a strictly
/// lower energy replaces the incumbent.
pub fn solve_with(ctx: &PairContext, spec: &SolveSpec) -> Option<AllocationResult> {
    let t_r = optimal_time(ctx);
    let mut best: Option<AllocationResult> = None;
    for scheme in SchemeTag::all() {
        if !spec.orders.contains(&scheme.order) || !spec.modes.contains(&scheme.mode) {
            continue;
        }
        let Some(candidate) = branch_candidate(ctx, scheme, t_r, spec.beta) else {
            continue;
        };
        if best.is_none_or(|b| candidate.e_tot < b.e_tot) {
            best = Some(candidate);
        }
    }
    best
}

fn branch_candidate(ctx: &PairContext, scheme: SchemeTag, t_r: f64, choice: BetaChoice) -> Option<AllocationResult> {
    let (lo, hi) = branch_beta_interval(ctx, scheme, t_r)?;
    let beta = match choice {
        BetaChoice::Fixed(beta) => {
            let slack = 1e-12;
            if beta < lo - slack || beta > hi + slack {
                return None;
            }
            beta.clamp(lo, hi)
        }
        BetaChoice::Optimized if scheme.mode.is_hybrid() => optimal_beta_at(ctx, scheme, t_r).ok()?.clamp(lo, hi),
        BetaChoice::Optimized => {
            golden_section(|b| branch_allocation(ctx, scheme, b, t_r).e_tot, lo, hi, BETA_SEARCH_TOL).0
        }
    };
    let alloc = branch_allocation(ctx, scheme, beta, t_r);
    alloc.e_tot.is_finite().then_some(alloc)
}

/// Relative slack of every constraint of the per-pair problem at `alloc`.
///
/// Entries are, in order: `U_n`'s offloaded data, `U_m`'s data when decoded
/// first (0 otherwise), `t_r ≥ 0`, `t_r ≤ τ_n − τ_m`, `β ≥ 0`, `β ≤ 1`,
/// `P_n ≥ 0`, `P_r ≥ 0`. Non-negative means satisfied.
pub fn constraint_slack(ctx: &PairContext, alloc: &AllocationResult) -> Vec<f64> {
    let load = ctx.load();
    let b = ctx.bandwidth;
    let interference = match alloc.scheme.order {
        DecodeOrder::PrimaryFirst => 1.0,
        DecodeOrder::SecondaryFirst => 1.0 + ctx.snr_m(),
    };
    let delivered =
        b * (ctx.tau_m * (alloc.p_n * ctx.h_n / interference).ln_1p() + alloc.t_r * (alloc.p_r * ctx.h_n).ln_1p());
    let secondary = (delivered - alloc.beta * load) / load;
    let primary = match alloc.scheme.order {
        DecodeOrder::PrimaryFirst => {
            let sinr = ctx.snr_m() / (alloc.p_n * ctx.h_n + 1.0);
            (ctx.tau_m * b * sinr.ln_1p() - load) / load
        }
        DecodeOrder::SecondaryFirst => 0.0,
    };
    let slack = ctx.slack_time();
    vec![
        secondary,
        primary,
        alloc.t_r / ctx.tau_n,
        (slack - alloc.t_r) / ctx.tau_n,
        alloc.beta,
        1.0 - alloc.beta,
        alloc.p_n,
        alloc.p_r,
    ]
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::channel::SystemParams;
    use crate::rng;

    fn contexts(n: u64) -> Vec<PairContext> {
        let params = SystemParams::default();
        let mut r = rng::stream(7, rng::streams::ENVIRONMENT);
        (0..n).map(|_| PairContext::sample(&mut r, &params).unwrap()).collect()
    }

    #[test]
    fn equal_deadlines_give_pure_noma() {
        let ctx = PairContext {
            tau_n: 0.22,
            ..typical_pair()
        };
        let best = solve_pair(&ctx);
        assert_eq!(best.t_r, 0.0);
        assert_eq!(best.scheme.mode, Mode::PureNoma);
    }

    #[test]
    fn selection_is_min_over_orders() {
        for ctx in contexts(100) {
            let best = solve_pair(&ctx);
            let by_order: Vec<f64> = DecodeOrder::ALL
                .iter()
                .filter_map(|&o| solve_indicator(&ctx, o))
                .map(|a| a.e_tot)
                .collect();
            let min = by_order.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(best.e_tot, min);
        }
    }

    #[test]
    fn results_are_feasible() {
        for ctx in contexts(200) {
            let best = solve_pair(&ctx);
            for (i, s) in constraint_slack(&ctx, &best).into_iter().enumerate() {
                assert!(s >= -1e-9, "constraint {i} violated by {s}: {best:?}");
            }
            let (l, o, t) = super::super::total_energy(&ctx, &best);
            assert_eq!((l, o, t), (best.e_loc, best.e_off, best.e_tot));
        }
    }

    #[test]
    fn deterministic() {
        let ctx = typical_pair();
        assert_eq!(solve_pair(&ctx), solve_pair(&ctx));
    }

    #[test]
    fn fixed_beta_respects_branch_intervals() {
        let ctx = typical_pair();
        let spec = SolveSpec {
            beta: BetaChoice::Fixed(1.0),
            ..SolveSpec::default()
        };
        let best = solve_with(&ctx, &spec).unwrap();
        assert_eq!(best.beta, 1.0);
        assert_eq!(best.e_loc, 0.0);
        assert!(best.e_tot >= solve_pair(&ctx).e_tot);
    }

    #[test]
    fn restricted_spec_is_never_better() {
        for ctx in contexts(50) {
            let full = solve_pair(&ctx).e_tot;
            let oma = solve_with(
                &ctx,
                &SolveSpec {
                    modes: vec![Mode::Oma],
                    ..SolveSpec::default()
                },
            )
            .unwrap();
            assert_eq!(oma.scheme.mode, Mode::Oma);
            assert!(full <= oma.e_tot);
        }
    }

    #[test]
    fn strict_check_does_not_change_result() {
        let ctx = typical_pair();
        let strict = SolverOptions {
            strict_primary_check: true,
        };
        assert_eq!(solve_pair_with(&ctx, &strict), solve_pair(&ctx));
    }
}
