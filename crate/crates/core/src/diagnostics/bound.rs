use serde::{Deserialize, Serialize};

use super::BmsbEstimate;
use crate::error::{Error, Result};
use crate::estimation::lse_pooled_average;
use crate::linalg::{Norm, ParameterMatrix};
use crate::systems::TrajectoryBatch;

/// Problem sizes entering the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub n_x: usize,
    pub n_phi: usize,
    pub m: usize,
    /// `T * sum_i N_i`
    pub total_samples: usize,
    pub delta: f64,
    pub epsilon: f64,
}

/// `C1 sqrt((n_x + n_phi + ln(2M/delta)) / (T sum N_i)) + C2 epsilon`.
pub fn bound_value(c1: f64, c2: f64, t: &BoundTerms) -> f64 {
    let log_term = (2.0 * t.m as f64 / t.delta).ln();
    c1 * ((t.n_x + t.n_phi) as f64 + log_term).sqrt() / (t.total_samples as f64).sqrt() + c2 * t.epsilon
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `8 sigma_w / s_phi^2`
    pub c1: f64,
    /// `b_phi / s_phi^2 + 1/2`
    pub c2: f64,
    pub b_phi: f64,
    pub sigma_w: f64,
    pub terms: BoundTerms,
    /// Noise-driven part of the bound.
    pub first_term: f64,
    pub bound_value: f64,
    /// Same bound with `b_phi = n_x + n_phi`, the dimensional value the
    /// cross-term argument assumes.
    pub bound_value_dimensional: f64,
    /// `max_i ||theta_LSE - theta_i*||_2` for the averaged per-client LSE.
    pub observed_error: f64,
}

/// Evaluates the finite-sample bound for the given client data.
///
/// `epsilon` is the heterogeneity level, `max_ij ||theta_i* - theta_j*||`.
/// `b_phi` is taken as the largest `||phi||^2` over every client's columns.
/// `ridge` is added to each client's Gram matrix before the solve; use 0.
pub fn evaluate_bound(
    batches: &[TrajectoryBatch],
    true_thetas: &[ParameterMatrix],
    sigma_w: f64,
    bmsb: &BmsbEstimate,
    delta: f64,
    epsilon: f64,
    ridge: f64,
) -> Result<BoundReport> {
    if !(bmsb.s_phi > 0.0) {
        return Err(Error::DegenerateExcitation("s_phi must be > 0".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config("delta must lie in (0, 1)".into()));
    }
    if batches.is_empty() || batches.len() != true_thetas.len() {
        return Err(Error::Shape("need one true parameter matrix per client batch".into()));
    }
    let theta_lse = lse_pooled_average(batches, ridge)?;
    let observed_error = true_thetas
        .iter()
        .map(|t| theta_lse.distance(t, Norm::Spectral))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let b_phi = batches
        .iter()
        .flat_map(|b| b.features.column_iter().map(|c| c.norm_squared()))
        .fold(0.0, f64::max);
    let s2 = bmsb.s_phi * bmsb.s_phi;
    let c1 = 8.0 * sigma_w / s2;
    let c2 = b_phi / s2 + 0.5;
    let terms = BoundTerms {
        n_x: batches[0].n_x(),
        n_phi: batches[0].n_phi(),
        m: batches.len(),
        total_samples: batches.iter().map(|b| b.n_cols()).sum(),
        delta,
        epsilon,
    };
    Ok(BoundReport {
        c1,
        c2,
        b_phi,
        sigma_w,
        terms,
        first_term: bound_value(c1, c2, &BoundTerms { epsilon: 0.0, ..terms }),
        bound_value: bound_value(c1, c2, &terms),
        bound_value_dimensional: bound_value(c1, (terms.n_x + terms.n_phi) as f64 / s2 + 0.5, &terms),
        observed_error,
    })
}
