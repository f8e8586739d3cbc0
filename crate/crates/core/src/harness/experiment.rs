use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, SweepPoint, SystemChoice, Theta0};
use super::record::ExperimentRecord;
use crate::diagnostics::{
    estimate_bmsb, evaluate_bound, gram_check, noise_crossterm_check, BmsbEstimate, BoundReport,
    CrossTermReport, GramReport,
};
use crate::error::{Error, Result};
use crate::federation::{run_federation, ClientState, FederationOptions};
use crate::linalg::{lambda_min, Norm, ParameterMatrix};
use crate::rng::derive_seed;
use crate::systems::{
    make_client_fleet, make_pendulum_system, make_quadrotor_system, make_synthetic_system,
    simulate_batch, HeterogeneitySpec, PendulumParams, QuadrotorParams, SyntheticParams, SystemModel,
    TrajectoryBatch,
};

/// Nominal system for `cfg` and master seed `seed`.
pub fn base_system(cfg: &ExperimentConfig, seed: u64) -> Result<SystemModel> {
    match cfg.system {
        SystemChoice::Synthetic => {
            let mut p = SyntheticParams::default();
            p.n_x = cfg.n_x.unwrap_or(p.n_x);
            p.n_u = cfg.n_u.unwrap_or(p.n_u);
            p.noise_std = cfg.noise_std.unwrap_or(p.noise_std);
            make_synthetic_system(&p, derive_seed(seed, "system", &[]))
        }
        SystemChoice::Pendulum => {
            let mut p = PendulumParams::default();
            p.noise_std = cfg.noise_std.unwrap_or(p.noise_std);
            p.dt = cfg.dt.unwrap_or(p.dt);
            make_pendulum_system(&p)
        }
        SystemChoice::Quadrotor => {
            let mut p = QuadrotorParams::default();
            p.noise_std = cfg.noise_std.unwrap_or(p.noise_std);
            p.dt = cfg.dt.unwrap_or(p.dt);
            make_quadrotor_system(&p)
        }
    }
}

/// A fleet of clients with their data, for one sweep point and seed.
#[derive(Debug, Clone)]
pub struct Problem {
    pub base: SystemModel,
    pub systems: Vec<SystemModel>,
    pub batches: Vec<TrajectoryBatch>,
}

impl Problem {
    pub fn true_thetas(&self) -> Vec<ParameterMatrix> {
        self.systems.iter().map(|s| s.true_theta.clone()).collect()
    }

    /// `max_ij ||theta_i - theta_j||_2` over the fleet.
    pub fn realized_epsilon(&self) -> Result<f64> {
        let mut eps: f64 = 0.0;
        for (i, a) in self.systems.iter().enumerate() {
            for b in &self.systems[i + 1..] {
                eps = eps.max(a.true_theta.distance(&b.true_theta, Norm::Spectral)?);
            }
        }
        Ok(eps)
    }

    pub fn pooled(&self) -> Result<TrajectoryBatch> {
        TrajectoryBatch::concat(&self.batches)
    }
}

/// Builds the clients for `point`. Client `i`'s parameters and data depend
/// only on `(seed, i)` and the point's `epsilon` and `N_i`, so sweeps over
/// `M` or `K_i` share realizations.
pub fn build_problem(cfg: &ExperimentConfig, point: &SweepPoint, seed: u64) -> Result<Problem> {
    let base = base_system(cfg, seed)?;
    let het = HeterogeneitySpec::sample_for(&base, point.epsilon, derive_seed(seed, "heterogeneity", &[]))?;
    let systems = make_client_fleet(&base, &het, point.m, derive_seed(seed, "fleet", &[]))?;
    let batches = systems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            simulate_batch(s, point.n_i, cfg.t, derive_seed(seed, "client-data", &[i as u64]))
                .map_err(|e| e.for_client(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Problem { base, systems, batches })
}

/// Per-seed diagnostics for one sweep point. Fields are `None` when the
/// corresponding computation is undefined for the data (e.g. a rank-deficient
/// Gram matrix).
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub config_id: usize,
    pub seed: u64,
    pub system: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N_i")]
    pub n_i: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub epsilon: f64,
    pub realized_epsilon: f64,
    pub lambda_min_pooled: f64,
    /// Ridge used in the least-squares estimate, 0 unless configured.
    pub ridge: f64,
    pub bmsb: Option<BmsbEstimate>,
    pub gram: Option<GramReport>,
    pub crossterm: Option<Vec<CrossTermReport>>,
    pub bound: Option<BoundReport>,
}

fn ok_or_warn<T>(what: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("{what}: {e}");
            None
        }
    }
}

pub fn diagnose_problem(
    cfg: &ExperimentConfig,
    config_id: usize,
    point: &SweepPoint,
    seed: u64,
    problem: &Problem,
) -> Result<DiagnosticReport> {
    let pooled = problem.pooled()?;
    let lambda_min_pooled = lambda_min(&pooled.gram());
    let realized_epsilon = problem.realized_epsilon()?;
    let sigma = problem.base.regression_noise_std();
    let bmsb = ok_or_warn(
        "bmsb",
        estimate_bmsb(&pooled, cfg.bmsb_directions, cfg.bmsb_quantile, derive_seed(seed, "bmsb", &[])),
    );
    let gram = bmsb
        .as_ref()
        .and_then(|b| ok_or_warn("gram check", gram_check(&problem.batches, b, cfg.delta)));
    let crossterm = ok_or_warn(
        "cross term",
        problem
            .batches
            .iter()
            .map(|b| noise_crossterm_check(&b.noise, &b.features, sigma, cfg.delta, point.m))
            .collect::<Result<Vec<_>>>(),
    );
    let bound = bmsb.as_ref().and_then(|b| {
        ok_or_warn(
            "bound",
            evaluate_bound(&problem.batches, &problem.true_thetas(), sigma, b, cfg.delta, realized_epsilon, cfg.ridge),
        )
    });
    Ok(DiagnosticReport {
        config_id,
        seed,
        system: cfg.system.name().into(),
        m: point.m,
        n_i: point.n_i,
        t: cfg.t,
        epsilon: point.epsilon,
        realized_epsilon,
        lambda_min_pooled,
        ridge: cfg.ridge,
        bmsb,
        gram,
        crossterm,
        bound,
    })
}

fn run_unit(
    cfg: &ExperimentConfig,
    config_id: usize,
    point: &SweepPoint,
    seed: u64,
) -> Result<Vec<ExperimentRecord>> {
    debug!("point {config_id} seed {seed}: {point:?}");
    let problem = build_problem(cfg, point, seed)?;
    let diag = diagnose_problem(cfg, config_id, point, seed, &problem)?;
    let truths = problem.true_thetas();
    let (n_x, n_phi) = problem.base.true_theta.shape();
    let theta0 = match cfg.theta0 {
        Theta0::Zero => ParameterMatrix::zeros(n_x, n_phi),
        Theta0::Nominal => problem.base.true_theta.clone(),
    };
    let clients = problem
        .batches
        .into_iter()
        .enumerate()
        .map(|(i, data)| {
            ClientState::new(i, data, point.k_i, cfg.alpha, cfg.batch_size)
                .map(|c| c.with_scaling(cfg.minibatch_scaling))
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = FederationOptions {
        norm: cfg.norm,
        parallel: true,
    };
    let state = run_federation(clients, theta0, cfg.rounds, &truths, derive_seed(seed, "federation", &[]), opts)?;

    let bound_value = diag.bound.as_ref().map(|b| b.bound_value);
    let observed_error = diag.bound.as_ref().map(|b| b.observed_error);
    let lambda_min_pooled = diag.lambda_min_pooled.is_finite().then_some(diag.lambda_min_pooled);
    Ok(state
        .history
        .iter()
        .map(|h| ExperimentRecord {
            config_id,
            system: cfg.system.name().into(),
            m: point.m,
            n_i: point.n_i,
            t: cfg.t,
            epsilon: point.epsilon,
            k_i: point.k_i,
            alpha: cfg.alpha,
            batch_size: cfg.batch_size,
            round: h.round,
            seed,
            max_error: h.max_error,
            mean_error: h.mean_error,
            lambda_min_pooled,
            bound_value,
            observed_error,
        })
        .collect())
}

fn units(cfg: &ExperimentConfig) -> Vec<(usize, SweepPoint, u64)> {
    cfg.points()
        .into_iter()
        .enumerate()
        .flat_map(|(id, p)| cfg.seeds.iter().map(move |&s| (id, p, s)))
        .collect()
}

/// Outcome of a sweep: rows for every unit that finished, and the first
/// failure in canonical order, if any.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub error: Option<Error>,
}

/// Runs every (sweep point, seed) pair on the current rayon pool. Rows come
/// back sorted by `(config_id, seed, round)` whatever the thread count.
pub fn run_sweep(cfg: &ExperimentConfig) -> ExperimentOutput {
    if let Err(e) = cfg.validate() {
        return ExperimentOutput {
            records: Vec::new(),
            error: Some(e),
        };
    }
    if cfg.ridge != 0.0 {
        warn!("{}: ridge {} used in the bound's least-squares estimate", cfg.name, cfg.ridge);
    }
    let results: Vec<(usize, u64, Result<Vec<ExperimentRecord>>)> = units(cfg)
        .par_iter()
        .map(|(id, p, s)| (*id, *s, run_unit(cfg, *id, p, *s)))
        .collect();
    let mut records = Vec::new();
    let mut error = None;
    for (point, seed, r) in results {
        match r {
            Ok(rows) => records.extend(rows),
            Err(e) if error.is_none() => {
                error = Some(Error::Experiment {
                    point,
                    seed,
                    source: Box::new(e),
                })
            }
            Err(e) => warn!("point {point} seed {seed}: {e}"),
        }
    }
    records.sort_by_key(|r| (r.config_id, r.seed, r.round));
    ExperimentOutput { records, error }
}

/// Runs the sweep and writes the CSV to `cfg.output_path` if set. On failure
/// the rows of the completed units are still written before the error is
/// returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let out = run_sweep(cfg);
    if let Some(path) = &cfg.output_path {
        super::record::write_csv_path(path, &out.records)?;
    }
    match out.error {
        Some(e) => Err(e),
        None => Ok(out.records),
    }
}

/// Diagnostics for every (sweep point, seed) pair, in canonical order.
pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<Vec<DiagnosticReport>> {
    cfg.validate()?;
    units(cfg)
        .par_iter()
        .map(|(id, p, s)| {
            build_problem(cfg, p, *s)
                .and_then(|prob| diagnose_problem(cfg, *id, p, *s, &prob))
                .map_err(|e| Error::Experiment {
                    point: *id,
                    seed: *s,
                    source: Box::new(e),
                })
        })
        .collect()
}
