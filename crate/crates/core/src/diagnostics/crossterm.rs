use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTermReport {
    /// `||W Phi^T||_2`
    pub observed: f64,
    /// `4 sigma sqrt(n (n_x + n_phi + ln(2M/delta)))`
    pub bound: f64,
    /// Same with `n_x + n_phi` replaced by the empirical `b_phi`.
    pub bound_bphi: f64,
    /// `max_j ||phi_j||^2`
    pub b_phi: f64,
    pub passes: bool,
}

/// `4 sigma_w sqrt(n_samples (dim + ln(2M/delta)))`.
pub fn crossterm_bound(sigma_w: f64, n_samples: usize, dim: f64, m: usize, delta: f64) -> f64 {
    4.0 * sigma_w * (n_samples as f64 * (dim + (2.0 * m as f64 / delta).ln())).sqrt()
}

pub fn noise_crossterm_check(
    noise: &DMatrix<f64>,
    features: &DMatrix<f64>,
    sigma_w: f64,
    delta: f64,
    m: usize,
) -> Result<CrossTermReport> {
    if noise.ncols() != features.ncols() {
        return Err(Error::Shape(format!(
            "noise has {} columns, features {}",
            noise.ncols(),
            features.ncols()
        )));
    }
    if !(sigma_w > 0.0) {
        return Err(Error::Config("sigma_w must be > 0".into()));
    }
    if !(delta > 0.0 && delta < 1.0) || m == 0 {
        return Err(Error::Config("need delta in (0, 1) and M >= 1".into()));
    }
    let n = features.ncols();
    let observed = spectral_norm(&(noise * features.transpose()));
    let b_phi = features
        .column_iter()
        .map(|c| c.norm_squared())
        .fold(0.0, f64::max);
    let dim = (noise.nrows() + features.nrows()) as f64;
    let bound = crossterm_bound(sigma_w, n, dim, m, delta);
    Ok(CrossTermReport {
        observed,
        bound,
        bound_bphi: crossterm_bound(sigma_w, n, b_phi, m, delta),
        b_phi,
        passes: observed <= bound,
    })
}
