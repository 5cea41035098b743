//! Experiment dispatch.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::tables::{emit_plot_script, summarize, ResultTable, TableRow};
use super::{ExperimentConfig, ExperimentId, Sweep};
use crate::channel::{channel_gain, sample_users, CellEnv, SystemParams};
use crate::dqn::{train, write_log_csv, EpisodeLog, HyperParams};
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::solver::{
    local_energy, solve_indicator, solve_pair, solve_with, BetaChoice, DecodeOrder, GridOracle, Mode, PairContext,
    SolveSpec,
};

/// Benchmarks of the per-pair comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Both decoding orders, optimized `β`.
    HybridSic,
    /// Both decoding orders, full offloading.
    HybridSicBetaOne,
    /// `U_n` always decoded first.
    FixedOrder,
    /// `U_n` transmits only in the dedicated slot.
    Oma,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::HybridSic, Scheme::HybridSicBetaOne, Scheme::FixedOrder, Scheme::Oma];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::HybridSic => "hybrid_sic",
            Scheme::HybridSicBetaOne => "hybrid_sic_beta1",
            Scheme::FixedOrder => "fixed_order",
            Scheme::Oma => "oma",
        }
    }
}

/// Per-context energies of every [`Scheme`], in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeEnergies(pub [f64; 4]);

impl SchemeEnergies {
    pub fn get(&self, scheme: Scheme) -> f64 {
        self.0[scheme as usize]
    }
}

fn scheme_energies(ctx: &PairContext) -> Result<SchemeEnergies> {
    let missing = |what: &str| Error::Internal(format!("{what} produced no feasible allocation"));
    let hybrid = solve_pair(ctx).e_tot;
    let beta_one = solve_with(
        ctx,
        &SolveSpec {
            beta: BetaChoice::Fixed(1.0),
            ..SolveSpec::default()
        },
    )
    .ok_or_else(|| missing("full offloading"))?
    .e_tot;
    let fixed = solve_indicator(ctx, DecodeOrder::SecondaryFirst)
        .ok_or_else(|| missing("fixed decoding order"))?
        .e_tot;
    let oma_spec = SolveSpec {
        modes: vec![Mode::Oma],
        ..SolveSpec::default()
    };
    // with equal deadlines there is no dedicated slot, so U_n computes everything locally
    let oma = match solve_with(ctx, &oma_spec) {
        Some(a) => a.e_tot,
        None => local_energy(ctx, 0.0, ctx.tau_n)?,
    };
    Ok(SchemeEnergies([hybrid, beta_one, fixed, oma]))
}

/// Evaluates every benchmark on each context, in input order.
pub fn compare_schemes(contexts: &[PairContext]) -> Result<Vec<SchemeEnergies>> {
    if contexts.is_empty() {
        return Err(Error::domain("scheme comparison needs at least one context"));
    }
    contexts.par_iter().map(scheme_energies).collect()
}

/// `n` independent pairs drawn from `params`; context `i` depends only on `(seed, i)`.
pub fn sample_contexts(params: &SystemParams, seed: u64, n: usize) -> Result<Vec<PairContext>> {
    (0..n)
        .into_par_iter()
        .map(|i| PairContext::sample(&mut trial_rng(seed, i), params))
        .collect()
}

fn trial_rng(seed: u64, trial: usize) -> rng::SimRng {
    rng::stream(rng::trial_seed(seed, trial as u64), streams::ENVIRONMENT)
}

/// Pairs whose long-deadline user has deadline `tau_n`; the other deadline is
/// uniform between the lowest configured deadline and `tau_floor`.
fn deadline_contexts(params: &SystemParams, seed: u64, n: usize, tau_n: f64, tau_floor: f64) -> Result<Vec<PairContext>> {
    let lo = params.deadline_range_s[0];
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = trial_rng(seed, i);
            let users = sample_users(&mut r, 2, params)?;
            let u: f64 = r.random();
            let tau_m = lo + u * (tau_floor - lo);
            let h_m = channel_gain(&users[0], params)?.value();
            let h_n = channel_gain(&users[1], params)?.value();
            PairContext::from_users(params, (h_m, tau_m), (h_n, tau_n))
        })
        .collect()
}

/// Outcome of comparing the closed-form solver against the grid oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub instances: usize,
    pub resolution: usize,
    /// Largest `E_solver − E_oracle`, in joules.
    pub max_excess_j: f64,
    /// Largest `|E_oracle − E_solver| / E_solver`.
    pub max_relative_gap: f64,
    pub excess: Vec<f64>,
    pub relative_gap: Vec<f64>,
}

impl ValidationReport {
    pub const EXCESS_TOL_J: f64 = 1e-9;
    pub const GAP_TOL: f64 = 0.01;

    pub fn passed(&self) -> bool {
        self.max_excess_j <= Self::EXCESS_TOL_J && self.max_relative_gap <= Self::GAP_TOL
    }
}

/// Solves `instances` seeded pairs in closed form and on a grid of `resolution` points per axis.
pub fn validate_solver(params: &SystemParams, seed: u64, instances: usize, resolution: usize) -> Result<ValidationReport> {
    if instances == 0 {
        return Err(Error::config("instances", "must be at least 1"));
    }
    if resolution < 2 {
        return Err(Error::config("resolution", "must be at least 2"));
    }
    params.validate("system")?;
    let oracle = GridOracle {
        resolution,
        refine: true,
    };
    let contexts = sample_contexts(params, seed, instances)?;
    let pairs: Vec<(f64, f64)> = contexts
        .par_iter()
        .map(|ctx| {
            let closed = solve_pair(ctx).e_tot;
            let grid = oracle.solve(ctx).e_tot;
            (closed - grid, (grid - closed).abs() / closed)
        })
        .collect();
    let (excess, relative_gap): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ValidationReport {
        instances,
        resolution,
        max_excess_j: max(&excess),
        max_relative_gap: max(&relative_gap),
        excess,
        relative_gap,
    })
}

/// Files written by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub tables: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub plot_script: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment_id: ExperimentId,
    seed: u64,
    trials: usize,
    num_users: usize,
    output_dir: &'a Path,
    system: &'a SystemParams,
    hyper: &'a HyperParams,
    sweep: &'a Sweep,
    tables: Vec<String>,
    version: &'static str,
}

/// Runs `config` on `threads` worker threads and writes its tables, a
/// manifest and a plot script. Output bytes do not depend on `threads`.
pub fn run(config: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    config.validate()?;
    if threads == 0 {
        return Err(Error::config("threads", "must be at least 1"));
    }
    let dir = config.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let sweep = config.resolved_sweep();
    let tables = pool.install(|| match config.experiment_id {
        ExperimentId::EnergyVsPm | ExperimentId::EnergyVsL | ExperimentId::EnergyVsDeadline => {
            scheme_sweep(config, &sweep)
        }
        ExperimentId::SolverValidate => solver_tables(config, &sweep),
        ExperimentId::ConvergenceLr | ExperimentId::ConvergenceUsers | ExperimentId::EpsilonPolicy => {
            training_tables(config, &sweep, &dir)
        }
    })?;

    let mut paths = Vec::with_capacity(tables.len());
    for t in &tables {
        paths.push(t.write(&dir)?);
    }
    let manifest = Manifest {
        experiment_id: config.experiment_id,
        seed: config.seed,
        trials: config.trials,
        num_users: config.num_users,
        output_dir: &dir,
        system: &config.system,
        hyper: &config.hyper,
        sweep: &sweep,
        tables: tables.iter().map(ResultTable::file_name).collect(),
        version: env!("CARGO_PKG_VERSION"),
    };
    let manifest_path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    let plot_script = emit_plot_script(&dir, &tables)?;
    Ok(RunOutput {
        output_dir: dir,
        tables: paths,
        manifest: manifest_path,
        plot_script,
    })
}

fn x_label(name: &str) -> &'static str {
    match name {
        "primary_power_w" => "P_m (W)",
        "task_bits" => "task size L (bit)",
        "tau_n" => "deadline tau_n (s)",
        _ => "value",
    }
}

fn scheme_sweep(config: &ExperimentConfig, sweep: &Sweep) -> Result<Vec<ResultTable>> {
    let mut rows: Vec<Vec<TableRow>> = vec![Vec::new(); Scheme::ALL.len()];
    let tau_floor = sweep.values.iter().copied().fold(f64::INFINITY, f64::min);
    for &v in &sweep.values {
        let mut params = config.system.clone();
        let contexts = match sweep.name.as_str() {
            "primary_power_w" => {
                params.primary_power_w = v;
                sample_contexts(&params, config.seed, config.trials)?
            }
            "task_bits" => {
                params.task_bits = v;
                sample_contexts(&params, config.seed, config.trials)?
            }
            "tau_n" => deadline_contexts(&params, config.seed, config.trials, v, tau_floor)?,
            other => return Err(Error::config("sweep[0].name", format!("`{other}` is not a scheme sweep"))),
        };
        let energies = compare_schemes(&contexts)?;
        for (s, scheme) in Scheme::ALL.into_iter().enumerate() {
            let samples: Vec<f64> = energies.iter().map(|e| e.get(scheme)).collect();
            let (mean, stderr) = summarize(&samples);
            rows[s].push(TableRow {
                sweep_value: v,
                x: v,
                mean,
                stderr,
            });
        }
    }
    Ok(Scheme::ALL
        .into_iter()
        .zip(rows)
        .map(|(scheme, rows)| ResultTable::new(scheme.name(), x_label(&sweep.name), "mean energy (J)", rows))
        .collect())
}

fn solver_tables(config: &ExperimentConfig, sweep: &Sweep) -> Result<Vec<ResultTable>> {
    let mut tables = Vec::new();
    for &v in &sweep.values {
        let report = validate_solver(&config.system, config.seed, config.trials, v as usize)?;
        let rows = |values: &[f64]| {
            values
                .iter()
                .enumerate()
                .map(|(i, &m)| TableRow {
                    sweep_value: v,
                    x: i as f64,
                    mean: m,
                    stderr: 0.0,
                })
                .collect::<Vec<_>>()
        };
        tables.push(ResultTable::new(
            format!("excess_resolution={v}"),
            "instance",
            "solver minus oracle energy (J)",
            rows(&report.excess),
        ));
        tables.push(ResultTable::new(
            format!("gap_resolution={v}"),
            "instance",
            "relative oracle gap",
            rows(&report.relative_gap),
        ));
    }
    Ok(tables)
}

type Metric = fn(&EpisodeLog) -> f64;

/// One training series: a label, its sweep value, and the settings that differ from the config.
struct Series {
    label: String,
    sweep_value: f64,
    num_users: usize,
    hyper: HyperParams,
}

fn training_series(config: &ExperimentConfig, sweep: &Sweep) -> Vec<Series> {
    let mut series = Vec::new();
    if config.experiment_id == ExperimentId::EpsilonPolicy {
        series.push(Series {
            label: "epsilon=decay".into(),
            sweep_value: config.hyper.eps_hi,
            num_users: config.num_users,
            hyper: config.hyper.clone(),
        });
    }
    for &v in &sweep.values {
        let mut hyper = config.hyper.clone();
        let mut num_users = config.num_users;
        match sweep.name.as_str() {
            "lr" => hyper.lr = v,
            "num_users" => num_users = v as usize,
            "epsilon" => {
                hyper.eps_hi = v;
                hyper.eps_lo = v;
            }
            _ => {}
        }
        series.push(Series {
            label: format!("{}={v}", sweep.name),
            sweep_value: v,
            num_users,
            hyper,
        });
    }
    series
}

fn training_tables(config: &ExperimentConfig, sweep: &Sweep, dir: &Path) -> Result<Vec<ResultTable>> {
    let series = training_series(config, sweep);
    let jobs: Vec<(usize, usize)> = (0..series.len())
        .flat_map(|s| (0..config.trials).map(move |t| (s, t)))
        .collect();
    let logs: Vec<Vec<EpisodeLog>> = jobs
        .par_iter()
        .map(|&(s, t)| {
            let job = &series[s];
            let seed = rng::trial_seed(config.seed, t as u64);
            let mut env = CellEnv::new(config.system.clone(), job.num_users, rng::stream(seed, streams::ENVIRONMENT))?;
            Ok(train(&mut env, &job.hyper, seed)?.log)
        })
        .collect::<Result<_>>()?;

    let mut tables = Vec::new();
    for (s, job) in series.iter().enumerate() {
        let runs: Vec<&Vec<EpisodeLog>> = jobs
            .iter()
            .zip(&logs)
            .filter(|((js, _), _)| *js == s)
            .map(|(_, log)| log)
            .collect();
        for (t, log) in runs.iter().enumerate() {
            write_log_csv(&dir.join(format!("log_{}_trial{t}.csv", job.label)), log)?;
        }
        let curves: [(&str, Metric); 3] = [
            ("dqn", |r| r.mean_energy_j),
            ("random", |r| r.random_energy_j),
            ("optimal", |r| r.optimal_energy_j),
        ];
        for (policy, get) in curves {
            let rows = (0..job.hyper.episodes)
                .map(|ep| {
                    let samples: Vec<f64> = runs.iter().map(|log| get(&log[ep])).collect();
                    let (mean, stderr) = summarize(&samples);
                    TableRow {
                        sweep_value: job.sweep_value,
                        x: ep as f64,
                        mean,
                        stderr,
                    }
                })
                .collect();
            tables.push(ResultTable::new(
                format!("{policy}_{}", job.label),
                "episode",
                "mean energy per slot (J)",
                rows,
            ));
        }
    }
    Ok(tables)
}
