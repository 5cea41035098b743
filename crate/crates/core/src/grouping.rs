//! User pairings, their action encoding, and pairing-level energy.
//!
//! Pairings are enumerated canonically: the lowest unpaired user is matched
//! with each remaining user in ascending order, recursively. Action `i` is the
//! `i`-th pairing in that order, so there are `(K−1)!!` actions.

use serde::{Deserialize, Serialize};

use crate::channel::{GroupingState, SystemParams};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::solver::{solve_pair, AllocationResult, PairContext};
use rand::Rng;

/// Largest supported user count; beyond this the action space is impractical.
pub const MAX_USERS: usize = 12;

/// A perfect matching of users into pairs, stored canonically: each pair is
/// `(low, high)` and pairs are sorted by their lower index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    /// Validates that `pairs` covers `0..2·pairs.len()` exactly once.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let k = 2 * pairs.len();
        let mut seen = vec![false; k];
        let mut canonical: Vec<(usize, usize)> = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            for u in [a, b] {
                if u >= k || seen[u] {
                    return Err(Error::domain(format!("user {u} missing from or repeated in a pairing of {k} users")));
                }
                seen[u] = true;
            }
            canonical.push((a.min(b), a.max(b)));
        }
        canonical.sort_unstable();
        Ok(Self { pairs: canonical })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn num_users(&self) -> usize {
        2 * self.pairs.len()
    }

    /// Binary assignment matrix `j[k][φ]`: 1 when user `k` is in group `φ`.
    pub fn assignment_matrix(&self) -> Vec<Vec<u8>> {
        let mut j = vec![vec![0u8; self.pairs.len()]; self.num_users()];
        for (phi, &(a, b)) in self.pairs.iter().enumerate() {
            j[a][phi] = 1;
            j[b][phi] = 1;
        }
        j
    }
}

impl TryFrom<Vec<(usize, usize)>> for Pairing {
    type Error = Error;

    fn try_from(pairs: Vec<(usize, usize)>) -> Result<Self> {
        Pairing::new(pairs)
    }
}

impl From<Pairing> for Vec<(usize, usize)> {
    fn from(p: Pairing) -> Self {
        p.pairs
    }
}

/// Index of a pairing in the canonical enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionIndex(pub usize);

fn check_users(k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) || k > MAX_USERS {
        return Err(Error::domain(format!(
            "user count must be even and in [2, {MAX_USERS}], got {k}"
        )));
    }
    Ok(())
}

/// `(k−1)!!` for even `k ≥ 2`; 1 for `k = 0`.
fn double_factorial_odd(k: usize) -> usize {
    (1..k).step_by(2).product()
}

/// Number of pairings of `k` users, `(k−1)!!`.
pub fn enumerate_pairings(k: usize) -> Result<usize> {
    check_users(k)?;
    Ok(double_factorial_odd(k))
}

/// Every pairing of `k` users in canonical order.
pub fn all_pairings(k: usize) -> Result<Vec<Pairing>> {
    let n = enumerate_pairings(k)?;
    (0..n).map(|i| action_to_pairing(ActionIndex(i), k)).collect()
}

pub fn action_to_pairing(idx: ActionIndex, k: usize) -> Result<Pairing> {
    let n = enumerate_pairings(k)?;
    if idx.0 >= n {
        return Err(Error::domain(format!("action {} out of range for {k} users ({n} actions)", idx.0)));
    }
    let mut free: Vec<usize> = (0..k).collect();
    let mut rem = idx.0;
    let mut pairs = Vec::with_capacity(k / 2);
    while !free.is_empty() {
        let m = free.len();
        let block = double_factorial_odd(m - 2);
        let digit = rem / block;
        rem %= block;
        let low = free.remove(0);
        let high = free.remove(digit);
        pairs.push((low, high));
    }
    Ok(Pairing { pairs })
}

pub fn pairing_to_action(pairing: &Pairing) -> Result<ActionIndex> {
    let k = pairing.num_users();
    check_users(k)?;
    let mut partner = vec![0usize; k];
    for &(a, b) in &pairing.pairs {
        partner[a] = b;
        partner[b] = a;
    }
    let mut free: Vec<usize> = (0..k).collect();
    let mut idx = 0;
    while !free.is_empty() {
        let block = double_factorial_odd(free.len() - 2);
        let low = free.remove(0);
        let pos = free
            .iter()
            .position(|&u| u == partner[low])
            .expect("pairing invariants guarantee the partner is still free");
        free.remove(pos);
        idx += pos * block;
    }
    Ok(ActionIndex(idx))
}

fn check_state(state: &GroupingState, pairing: &Pairing) -> Result<()> {
    if state.num_users() != pairing.num_users() || state.deadlines.len() != state.gains.len() {
        return Err(Error::domain(format!(
            "state has {} users but the pairing covers {}",
            state.num_users(),
            pairing.num_users()
        )));
    }
    Ok(())
}

fn pair_context(state: &GroupingState, params: &SystemParams, a: usize, b: usize) -> Result<PairContext> {
    PairContext::from_users(
        params,
        (state.gains[a].value(), state.deadlines[a]),
        (state.gains[b].value(), state.deadlines[b]),
    )
}

/// Optimal allocation of every group under `pairing`, in pair order.
pub fn grouping_allocations(
    state: &GroupingState,
    pairing: &Pairing,
    params: &SystemParams,
) -> Result<Vec<AllocationResult>> {
    check_state(state, pairing)?;
    pairing
        .pairs
        .iter()
        .map(|&(a, b)| Ok(solve_pair(&pair_context(state, params, a, b)?)))
        .collect()
}

/// Sum of the per-group optimal energies under `pairing`.
pub fn grouping_energy(state: &GroupingState, pairing: &Pairing, params: &SystemParams) -> Result<f64> {
    Ok(grouping_allocations(state, pairing, params)?.iter().map(|a| a.e_tot).sum())
}

/// Unscaled reward of a slot: the negated total energy.
pub fn reward(energy: f64) -> f64 {
    -energy
}

/// Optimal energies of all `K(K−1)/2` candidate pairs of one state, so that
/// every pairing can be scored by lookup.
#[derive(Debug, Clone)]
pub struct PairEnergyTable {
    k: usize,
    energies: Vec<f64>,
}

impl PairEnergyTable {
    pub fn new(state: &GroupingState, params: &SystemParams) -> Result<Self> {
        let k = state.num_users();
        check_users(k)?;
        let mut energies = vec![f64::NAN; k * k];
        for a in 0..k {
            for b in (a + 1)..k {
                let e = solve_pair(&pair_context(state, params, a, b)?).e_tot;
                energies[a * k + b] = e;
                energies[b * k + a] = e;
            }
        }
        Ok(Self { k, energies })
    }

    pub fn pair_energy(&self, a: usize, b: usize) -> f64 {
        self.energies[a * self.k + b]
    }

    /// Same value as [`grouping_energy`], summed in the same order.
    pub fn energy(&self, pairing: &Pairing) -> f64 {
        pairing.pairs.iter().map(|&(a, b)| self.pair_energy(a, b)).sum()
    }

    /// Lowest-energy pairing; ties go to the lowest action index.
    pub fn best(&self) -> (Pairing, f64) {
        let mut best: Option<(Pairing, f64)> = None;
        for p in all_pairings(self.k).expect("user count validated at construction") {
            let e = self.energy(&p);
            if best.as_ref().is_none_or(|(_, b)| e < *b) {
                best = Some((p, e));
            }
        }
        best.expect("at least one pairing")
    }
}

/// Minimum of [`grouping_energy`] over all pairings, ties by lowest action index.
pub fn exhaustive_best(state: &GroupingState, params: &SystemParams) -> Result<(Pairing, f64)> {
    Ok(PairEnergyTable::new(state, params)?.best())
}

/// Uniformly random pairing of `k` users.
pub fn random_pairing(rng: &mut SimRng, k: usize) -> Result<Pairing> {
    let n = enumerate_pairings(k)?;
    action_to_pairing(ActionIndex(rng.random_range(0..n)), k)
}
