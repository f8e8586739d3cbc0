//! Experiment configuration files.
//!
//! A config is a flat TOML document; unknown keys are rejected. Keys:
//!
//! | key                 | type                  | meaning                                        |
//! |---------------------|-----------------------|------------------------------------------------|
//! | `name`              | string                | label, informational                           |
//! | `system`            | `synthetic` / `pendulum` / `quadrotor` |                               |
//! | `M`                 | int or list           | number of clients                              |
//! | `N_i`               | int or list           | trajectories per client                        |
//! | `T`                 | int                   | trajectory length (steps)                      |
//! | `epsilon`           | float or list         | heterogeneity level (dimensionless)            |
//! | `K_i`               | int or list           | local updates per round                        |
//! | `alpha`             | float                 | learning rate, > 0                             |
//! | `batch_size`        | int, optional         | mini-batch size; omit for full batch           |
//! | `rounds`            | int                   | global rounds `R`                              |
//! | `seeds`             | list of int           | master seeds                                   |
//! | `norm`              | `spectral` / `frobenius` | error-metric norm (default spectral)        |
//! | `delta`             | float in (0, 1)       | confidence level for the diagnostics (0.05)    |
//! | `output_path`       | string, optional      | CSV destination                                |
//! | `noise_std`         | float, optional       | disturbance std, system units                  |
//! | `dt`                | float, optional       | step (s), physical systems only                |
//! | `n_x`, `n_u`        | int, optional         | synthetic dimensions (3, 2)                    |
//! | `theta0`            | `zero` / `nominal`    | server initialization (zero)                   |
//! | `minibatch_scaling` | `sum` / `mean`        | mini-batch gradient scaling (sum)              |
//! | `ridge`             | float >= 0            | ridge for the diagnostic least squares (0)     |
//! | `bmsb_quantile`     | float in (0, 1)       | small-ball quantile (0.25)                     |
//! | `bmsb_directions`   | int                   | probed directions (256)                        |
//!
//! At most one of `M`, `N_i`, `epsilon`, `K_i` may be a list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{DEFAULT_N_DIRECTIONS, DEFAULT_QUANTILE};
use crate::error::{Error, Result};
use crate::federation::MiniBatchScaling;
use crate::linalg::Norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemChoice {
    Synthetic,
    Pendulum,
    Quadrotor,
}

impl SystemChoice {
    pub fn name(self) -> &'static str {
        match self {
            SystemChoice::Synthetic => "synthetic",
            SystemChoice::Pendulum => "pendulum",
            SystemChoice::Quadrotor => "quadrotor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theta0 {
    #[default]
    Zero,
    /// The unperturbed system's parameters.
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn is_list(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

/// The variable an experiment sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "M")]
    Clients,
    #[serde(rename = "N_i")]
    Trajectories,
    #[serde(rename = "epsilon")]
    Epsilon,
    #[serde(rename = "K_i")]
    LocalUpdates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub system: SystemChoice,
    #[serde(rename = "M")]
    pub m: OneOrMany<usize>,
    #[serde(rename = "N_i")]
    pub n_i: OneOrMany<usize>,
    #[serde(rename = "T")]
    pub t: usize,
    pub epsilon: OneOrMany<f64>,
    #[serde(rename = "K_i")]
    pub k_i: OneOrMany<usize>,
    pub alpha: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub n_x: Option<usize>,
    #[serde(default)]
    pub n_u: Option<usize>,
    #[serde(default)]
    pub theta0: Theta0,
    #[serde(default)]
    pub minibatch_scaling: MiniBatchScaling,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default = "default_quantile")]
    pub bmsb_quantile: f64,
    #[serde(default = "default_directions")]
    pub bmsb_directions: usize,
}

fn default_delta() -> f64 {
    0.05
}

fn default_quantile() -> f64 {
    DEFAULT_QUANTILE
}

fn default_directions() -> usize {
    DEFAULT_N_DIRECTIONS
}

/// One concrete setting of the sweepable variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub m: usize,
    pub n_i: usize,
    pub epsilon: f64,
    pub k_i: usize,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::InvalidField {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("M", self.m.values()),
            ("N_i", self.n_i.values()),
            ("K_i", self.k_i.values()),
        ];
        for (field, vals) in &counts {
            if vals.is_empty() {
                return Err(invalid(field, "list must not be empty"));
            }
            if vals.iter().any(|v| *v == 0) {
                return Err(invalid(field, "must be >= 1"));
            }
        }
        let eps = self.epsilon.values();
        if eps.is_empty() {
            return Err(invalid("epsilon", "list must not be empty"));
        }
        if eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(invalid("epsilon", "must be finite and >= 0"));
        }
        let lists = [
            self.m.is_list(),
            self.n_i.is_list(),
            self.epsilon.is_list(),
            self.k_i.is_list(),
        ];
        if lists.iter().filter(|l| **l).count() > 1 {
            return Err(invalid(
                "M/N_i/epsilon/K_i",
                "at most one of M, N_i, epsilon, K_i may be a list",
            ));
        }
        if self.t == 0 {
            return Err(invalid("T", "must be >= 1"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid("alpha", "must be > 0"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", "must lie in (0, 1)"));
        }
        if let Some(b) = self.batch_size {
            if b == 0 {
                return Err(invalid("batch_size", "must be >= 1"));
            }
            let min_cols = self.n_i.values().into_iter().min().unwrap_or(0) * self.t;
            if b > min_cols {
                return Err(invalid("batch_size", format!("exceeds N_i * T = {min_cols}")));
            }
        }
        if let Some(s) = self.noise_std {
            if !(s.is_finite() && s >= 0.0) {
                return Err(invalid("noise_std", "must be finite and >= 0"));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(invalid("dt", "must be > 0"));
            }
            if self.system == SystemChoice::Synthetic {
                return Err(invalid("dt", "not used by the synthetic system"));
            }
        }
        if self.system != SystemChoice::Synthetic && (self.n_x.is_some() || self.n_u.is_some()) {
            return Err(invalid("n_x/n_u", "only the synthetic system has configurable dimensions"));
        }
        if self.n_x == Some(0) || self.n_u == Some(0) {
            return Err(invalid("n_x/n_u", "must be >= 1"));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(invalid("ridge", "must be finite and >= 0"));
        }
        if !(self.bmsb_quantile > 0.0 && self.bmsb_quantile < 1.0) {
            return Err(invalid("bmsb_quantile", "must lie in (0, 1)"));
        }
        if self.bmsb_directions == 0 {
            return Err(invalid("bmsb_directions", "must be >= 1"));
        }
        Ok(())
    }

    pub fn sweep_var(&self) -> Option<SweepVar> {
        if self.m.is_list() {
            Some(SweepVar::Clients)
        } else if self.n_i.is_list() {
            Some(SweepVar::Trajectories)
        } else if self.epsilon.is_list() {
            Some(SweepVar::Epsilon)
        } else if self.k_i.is_list() {
            Some(SweepVar::LocalUpdates)
        } else {
            None
        }
    }

    /// Sweep points in config order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let (m, n, e, k) = (self.m.values(), self.n_i.values(), self.epsilon.values(), self.k_i.values());
        let base = SweepPoint {
            m: m[0],
            n_i: n[0],
            epsilon: e[0],
            k_i: k[0],
        };
        match self.sweep_var() {
            None => vec![base],
            Some(SweepVar::Clients) => m.into_iter().map(|m| SweepPoint { m, ..base }).collect(),
            Some(SweepVar::Trajectories) => n.into_iter().map(|n_i| SweepPoint { n_i, ..base }).collect(),
            Some(SweepVar::Epsilon) => e.into_iter().map(|epsilon| SweepPoint { epsilon, ..base }).collect(),
            Some(SweepVar::LocalUpdates) => k.into_iter().map(|k_i| SweepPoint { k_i, ..base }).collect(),
        }
    }
}
