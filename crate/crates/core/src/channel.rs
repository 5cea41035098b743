//! Cell geometry, Rayleigh fading and per-slot grouping states.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Logarithm base of the achievable-rate expressions.
///
/// `Nats` evaluates `B·ln(1 + SNR)` and compares it against the task size in
/// bits directly. `Bits` uses `B·log₂(1 + SNR)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    #[default]
    Nats,
    Bits,
}

impl RateUnit {
    /// Factor that converts a bit count into the natural-log "load" the rate
    /// expressions are compared against.
    pub fn load_factor(self) -> f64 {
        match self {
            RateUnit::Nats => 1.0,
            RateUnit::Bits => std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub bandwidth_hz: f64,
    pub pathloss_exponent: f64,
    pub noise_psd_dbm_hz: f64,
    pub cell_radius_max_m: f64,
    pub cell_radius_min_m: f64,
    /// Effective switched capacitance of the mobile CPU.
    pub kappa0: f64,
    pub cycles_per_bit: f64,
    pub task_bits: f64,
    /// Fixed transmit power of the short-deadline user in every group.
    pub primary_power_w: f64,
    pub deadline_range_s: [f64; 2],
    pub rate_unit: RateUnit,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 2e6,
            pathloss_exponent: 3.76,
            noise_psd_dbm_hz: -174.0,
            cell_radius_max_m: 1000.0,
            cell_radius_min_m: 50.0,
            kappa0: 1e-28,
            cycles_per_bit: 1e3,
            task_bits: 2e6,
            primary_power_w: 1.0,
            deadline_range_s: [0.2, 0.3],
            rate_unit: RateUnit::Nats,
        }
    }
}

impl SystemParams {
    /// Checks every invariant; the error names the offending field under `prefix`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| {
            if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            }
        };
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("pathloss_exponent", self.pathloss_exponent),
            ("cell_radius_max_m", self.cell_radius_max_m),
            ("cell_radius_min_m", self.cell_radius_min_m),
            ("kappa0", self.kappa0),
            ("cycles_per_bit", self.cycles_per_bit),
            ("task_bits", self.task_bits),
            ("primary_power_w", self.primary_power_w),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(field(name), format!("must be positive and finite, got {value}")));
            }
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(Error::config(field("noise_psd_dbm_hz"), "must be finite"));
        }
        if self.cell_radius_min_m >= self.cell_radius_max_m {
            return Err(Error::config(
                field("cell_radius_min_m"),
                "must be smaller than cell_radius_max_m",
            ));
        }
        let [lo, hi] = self.deadline_range_s;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(Error::config(
                field("deadline_range_s"),
                format!("need 0 < low < high, got [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }

    pub fn noise_power_w(&self) -> Result<f64> {
        noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz)
    }
}

/// Complex small-scale fading coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fading {
    pub re: f64,
    pub im: f64,
}

impl Fading {
    /// Draws from the circularly symmetric `CN(0, 1)`.
    pub fn sample(rng: &mut SimRng) -> Self {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Self {
            re: re * scale,
            im: im * scale,
        }
    }

    pub fn power(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: usize,
    pub distance_m: f64,
    pub deadline_s: f64,
    pub fading: Fading,
}

/// Noise-normalized channel power gain `|H|²/σ²`, in 1/W.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelGain(pub f64);

impl ChannelGain {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Observation of one time slot: a gain and a deadline for each of the K users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingState {
    pub gains: Vec<ChannelGain>,
    pub deadlines: Vec<f64>,
}

impl GroupingState {
    pub fn num_users(&self) -> usize {
        self.gains.len()
    }
}

/// Converts a noise spectral density in dBm/Hz to the noise power in watts over `bandwidth_hz`.
pub fn noise_power(noise_psd_dbm_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if bandwidth_hz.is_nan() || bandwidth_hz <= 0.0 || bandwidth_hz.is_infinite() {
        return Err(Error::domain(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    Ok(10f64.powf((noise_psd_dbm_hz - 30.0) / 10.0) * bandwidth_hz)
}

fn check_user_count(k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::domain(format!("user count must be even and at least 2, got {k}")));
    }
    Ok(())
}

/// Area-uniform radius in the annulus `[r_min, r_max]`.
fn sample_distance(rng: &mut SimRng, params: &SystemParams) -> f64 {
    let (lo, hi) = (params.cell_radius_min_m, params.cell_radius_max_m);
    let u: f64 = rng.random();
    (u * (hi * hi - lo * lo) + lo * lo).sqrt().clamp(lo, hi)
}

fn sample_deadline(rng: &mut SimRng, params: &SystemParams) -> f64 {
    let [lo, hi] = params.deadline_range_s;
    let u: f64 = rng.random();
    lo + u * (hi - lo)
}

pub fn sample_users(rng: &mut SimRng, k: usize, params: &SystemParams) -> Result<Vec<UserProfile>> {
    check_user_count(k)?;
    Ok((0..k)
        .map(|user_id| {
            let distance_m = sample_distance(rng, params);
            let deadline_s = sample_deadline(rng, params);
            let fading = Fading::sample(rng);
            UserProfile {
                user_id,
                distance_m,
                deadline_s,
                fading,
            }
        })
        .collect())
}

/// Computes `h = |h̃|²·d^(−α)/σ²` for one user.
pub fn channel_gain(user: &UserProfile, params: &SystemParams) -> Result<ChannelGain> {
    let sigma2 = params.noise_power_w()?;
    Ok(gain_from_parts(user.fading.power(), user.distance_m, params.pathloss_exponent, sigma2))
}

fn gain_from_parts(fading_power: f64, distance_m: f64, alpha: f64, sigma2: f64) -> ChannelGain {
    // A fading draw of exactly zero has probability zero but would break log-scaled inputs.
    let power = fading_power.max(f64::MIN_POSITIVE);
    ChannelGain(power * distance_m.powf(-alpha) / sigma2)
}

/// Samples the state of one time slot for users at fixed `geometry` distances.
pub fn next_state(
    rng: &mut SimRng,
    params: &SystemParams,
    k: usize,
    geometry: &[f64],
) -> Result<GroupingState> {
    if geometry.len() != k {
        return Err(Error::domain(format!(
            "geometry has {} distances for {k} users",
            geometry.len()
        )));
    }
    let sigma2 = params.noise_power_w()?;
    let mut gains = Vec::with_capacity(k);
    let mut deadlines = Vec::with_capacity(k);
    for &d in geometry {
        let fading = Fading::sample(rng);
        gains.push(gain_from_parts(fading.power(), d, params.pathloss_exponent, sigma2));
        deadlines.push(sample_deadline(rng, params));
    }
    Ok(GroupingState { gains, deadlines })
}

/// A cell of K users. Positions are redrawn per episode by [`CellEnv::reset`];
/// fading and deadlines are redrawn every slot by [`CellEnv::observe`].
#[derive(Debug, Clone)]
pub struct CellEnv {
    params: SystemParams,
    num_users: usize,
    distances: Vec<f64>,
    rng: SimRng,
}

impl CellEnv {
    pub fn new(params: SystemParams, num_users: usize, rng: SimRng) -> Result<Self> {
        check_user_count(num_users)?;
        params.validate("system")?;
        let mut env = Self {
            params,
            num_users,
            distances: Vec::new(),
            rng,
        };
        env.reset();
        Ok(env)
    }

    /// Redraws user positions.
    pub fn reset(&mut self) {
        self.distances = (0..self.num_users)
            .map(|_| sample_distance(&mut self.rng, &self.params))
            .collect();
    }

    pub fn observe(&mut self) -> GroupingState {
        next_state(&mut self.rng, &self.params, self.num_users, &self.distances)
            .expect("environment invariants checked at construction")
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }
}
