//! Declarative experiment runner and figure-data emitter.

mod experiments;
mod tables;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::SystemParams;
use crate::dqn::HyperParams;
use crate::error::{Error, Result};
use crate::grouping::MAX_USERS;

pub use experiments::{compare_schemes, run, sample_contexts, validate_solver, RunOutput, Scheme, SchemeEnergies, ValidationReport};
pub use tables::{emit_plot_script, summarize, ResultTable, TableRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    ConvergenceLr,
    ConvergenceUsers,
    EpsilonPolicy,
    EnergyVsPm,
    #[serde(rename = "energy_vs_L")]
    EnergyVsL,
    EnergyVsDeadline,
    SolverValidate,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::ConvergenceLr => "convergence_lr",
            ExperimentId::ConvergenceUsers => "convergence_users",
            ExperimentId::EpsilonPolicy => "epsilon_policy",
            ExperimentId::EnergyVsPm => "energy_vs_pm",
            ExperimentId::EnergyVsL => "energy_vs_L",
            ExperimentId::EnergyVsDeadline => "energy_vs_deadline",
            ExperimentId::SolverValidate => "solver_validate",
        }
    }

    /// The one parameter this experiment sweeps, and its values when the config gives none.
    pub fn default_sweep(self) -> Sweep {
        let (name, values): (&str, &[f64]) = match self {
            ExperimentId::ConvergenceLr => ("lr", &[0.1, 0.01, 0.001]),
            ExperimentId::ConvergenceUsers => ("num_users", &[6.0, 8.0, 10.0]),
            ExperimentId::EpsilonPolicy => ("epsilon", &[0.1]),
            ExperimentId::EnergyVsPm => ("primary_power_w", &[0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]),
            ExperimentId::EnergyVsL => ("task_bits", &[1e6, 2e6, 3e6, 4e6]),
            ExperimentId::EnergyVsDeadline => ("tau_n", &[0.25, 0.3, 0.35, 0.4]),
            ExperimentId::SolverValidate => ("resolution", &[128.0]),
        };
        Sweep {
            name: name.to_string(),
            values: values.to_vec(),
        }
    }

    pub fn is_training(self) -> bool {
        matches!(
            self,
            ExperimentId::ConvergenceLr | ExperimentId::ConvergenceUsers | ExperimentId::EpsilonPolicy
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: ExperimentId,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Users per cell in training experiments.
    #[serde(default = "default_users")]
    pub num_users: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub system: SystemParams,
    #[serde(default)]
    pub hyper: HyperParams,
    #[serde(default)]
    pub sweep: Vec<Sweep>,
}

fn default_trials() -> usize {
    1
}

fn default_users() -> usize {
    6
}

impl ExperimentConfig {
    pub fn new(experiment_id: ExperimentId, seed: u64) -> Self {
        Self {
            experiment_id,
            seed,
            trials: default_trials(),
            num_users: default_users(),
            output_dir: None,
            system: SystemParams::default(),
            hyper: HyperParams::default(),
            sweep: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization failed: {e}")))
    }

    /// `output_dir`, or `results/<experiment_id>` when unset.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("results").join(self.experiment_id.name()))
    }

    /// The configured sweep, or the experiment's default one.
    pub fn resolved_sweep(&self) -> Sweep {
        self.sweep
            .first()
            .cloned()
            .unwrap_or_else(|| self.experiment_id.default_sweep())
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate("system")?;
        self.hyper.validate("hyper")?;
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.num_users < 2 || !self.num_users.is_multiple_of(2) || self.num_users > MAX_USERS {
            return Err(Error::config(
                "num_users",
                format!("must be even and within [2, {MAX_USERS}], got {}", self.num_users),
            ));
        }
        if self.sweep.len() > 1 {
            return Err(Error::config("sweep", "at most one swept parameter per experiment"));
        }
        let expected = self.experiment_id.default_sweep().name;
        if let Some(sweep) = self.sweep.first() {
            if sweep.name != expected {
                return Err(Error::config(
                    "sweep[0].name",
                    format!(
                        "`{}` cannot be swept in {}; expected `{expected}`",
                        sweep.name,
                        self.experiment_id.name()
                    ),
                ));
            }
            if sweep.values.is_empty() {
                return Err(Error::config("sweep[0].values", "must not be empty"));
            }
        }
        let sweep = self.resolved_sweep();
        for (i, &v) in sweep.values.iter().enumerate() {
            check_sweep_value(self, &sweep.name, v).map_err(|reason| Error::config(format!("sweep[0].values[{i}]"), reason))?;
        }
        Ok(())
    }
}

fn check_sweep_value(config: &ExperimentConfig, name: &str, v: f64) -> std::result::Result<(), String> {
    if !v.is_finite() {
        return Err(format!("{v} is not finite"));
    }
    let integral = v.fract() == 0.0 && v >= 1.0;
    match name {
        "lr" | "primary_power_w" | "task_bits" if v <= 0.0 => Err(format!("must be positive, got {v}")),
        "epsilon" if !(0.0..=1.0).contains(&v) => Err(format!("must lie in [0, 1], got {v}")),
        "num_users" if !integral || !(v as usize).is_multiple_of(2) || v as usize > MAX_USERS => {
            Err(format!("must be an even user count up to {MAX_USERS}, got {v}"))
        }
        "resolution" if !integral || v < 2.0 => Err(format!("must be an integer of at least 2, got {v}")),
        "tau_n" if v <= config.system.deadline_range_s[0] => Err(format!(
            "must exceed the lowest deadline {} s, got {v}",
            config.system.deadline_range_s[0]
        )),
        _ => Ok(()),
    }
}
