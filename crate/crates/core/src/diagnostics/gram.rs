use serde::{Deserialize, Serialize};

use super::BmsbEstimate;
use crate::error::{Error, Result};
use crate::linalg::lambda_min;
use crate::systems::TrajectoryBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientGram {
    pub n_samples: usize,
    pub lambda_min: f64,
    /// `s_phi^2 N_i T / 2`
    pub threshold: f64,
    pub passes: bool,
    /// Whether `N_i T` met the sample-size precondition.
    pub sample_size_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub per_client: Vec<ClientGram>,
    pub pooled_lambda_min: f64,
    /// `s_phi^2 N_tot / 2`
    pub pooled_threshold: f64,
    pub pooled_passes: bool,
    /// Minimum `N_i T` required for the per-client guarantee.
    pub sample_size_threshold: f64,
}

/// `(4 / p_phi) [n_phi ln 9 + ln(M / delta)]`.
pub fn sample_size_threshold(p_phi: f64, n_phi: usize, m: usize, delta: f64) -> f64 {
    4.0 / p_phi * (n_phi as f64 * 9f64.ln() + (m as f64 / delta).ln())
}

/// Minimum eigenvalues of each client's Gram matrix and of their sum,
/// against the `s_phi^2 n / 2` lower bounds.
pub fn gram_check(batches: &[TrajectoryBatch], bmsb: &BmsbEstimate, delta: f64) -> Result<GramReport> {
    if !(bmsb.s_phi > 0.0) {
        return Err(Error::DegenerateExcitation("s_phi must be > 0".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config("delta must lie in (0, 1)".into()));
    }
    let first = batches
        .first()
        .ok_or_else(|| Error::InsufficientData("no client batches".into()))?;
    let n_phi = first.n_phi();
    if batches.iter().any(|b| b.n_phi() != n_phi) {
        return Err(Error::Shape("client batches disagree on n_phi".into()));
    }
    let s2 = bmsb.s_phi * bmsb.s_phi;
    let min_samples = sample_size_threshold(bmsb.p_phi, n_phi, batches.len(), delta);

    let mut pooled = nalgebra::DMatrix::zeros(n_phi, n_phi);
    let per_client = batches
        .iter()
        .map(|b| {
            let g = b.gram();
            let lambda_min = lambda_min(&g);
            pooled += g;
            let threshold = 0.5 * s2 * b.n_cols() as f64;
            ClientGram {
                n_samples: b.n_cols(),
                lambda_min,
                threshold,
                passes: lambda_min >= threshold,
                sample_size_ok: b.n_cols() as f64 >= min_samples,
            }
        })
        .collect();
    let n_tot: usize = batches.iter().map(|b| b.n_cols()).sum();
    let pooled_lambda_min = lambda_min(&pooled);
    let pooled_threshold = 0.5 * s2 * n_tot as f64;
    Ok(GramReport {
        per_client,
        pooled_lambda_min,
        pooled_threshold,
        pooled_passes: pooled_lambda_min >= pooled_threshold,
        sample_size_threshold: min_samples,
    })
}
