//! Unconditional direction-sampling proxy for the small-ball condition
//! `Pr(|v^T phi| >= s) >= p` over all unit directions `v`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::systems::TrajectoryBatch;

pub const DEFAULT_QUANTILE: f64 = 0.25;
pub const DEFAULT_N_DIRECTIONS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmsbEstimate {
    /// Small-ball radius `s_phi`.
    pub s_phi: f64,
    /// Small-ball probability `p_phi`.
    pub p_phi: f64,
    pub n_directions: usize,
    pub n_samples: usize,
}

/// `n` directions uniform on the unit sphere in `R^dim`.
pub fn sample_unit_directions(dim: usize, n: usize, seed: u64) -> Vec<DVector<f64>> {
    (0..n)
        .map(|k| {
            let mut rng = substream(seed, "bmsb-direction", &[k as u64]);
            loop {
                let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let n = v.norm();
                if n > 0.0 {
                    break v / n;
                }
            }
        })
        .collect()
}

/// Linear-interpolation empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn projections(features: &DMatrix<f64>, v: &DVector<f64>) -> Vec<f64> {
    (features.transpose() * v).iter().map(|x| x.abs()).collect()
}

/// Worst-direction fraction of columns with `|v^T phi| >= s`.
pub fn exceedance_frequency(features: &DMatrix<f64>, directions: &[DVector<f64>], s: f64) -> f64 {
    let n = features.ncols() as f64;
    directions
        .iter()
        .map(|v| projections(features, v).iter().filter(|a| **a >= s).count() as f64 / n)
        .fold(1.0, f64::min)
}

/// `s_phi` is the smallest per-direction `quantile` of `|v^T phi|`; `p_phi`
/// the worst-direction exceedance frequency at that radius.
pub fn estimate_bmsb_with_directions(
    features: &DMatrix<f64>,
    directions: &[DVector<f64>],
    quantile: f64,
) -> Result<BmsbEstimate> {
    if features.ncols() < 2 {
        return Err(Error::InsufficientData("small-ball estimate needs >= 2 columns".into()));
    }
    if directions.is_empty() {
        return Err(Error::Config("need at least one direction".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Config("quantile must lie in (0, 1)".into()));
    }
    if directions.iter().any(|v| v.len() != features.nrows()) {
        return Err(Error::Shape("direction dimension != n_phi".into()));
    }
    if features.column_iter().all(|c| c.iter().all(|x| *x == 0.0)) {
        return Err(Error::DegenerateExcitation("all feature columns are zero".into()));
    }
    let mut s_phi = f64::INFINITY;
    for (k, v) in directions.iter().enumerate() {
        let mut a = projections(features, v);
        a.sort_by(f64::total_cmp);
        let s = quantile_sorted(&a, quantile);
        if s <= 0.0 {
            return Err(Error::DegenerateExcitation(format!(
                "direction {k} is unexcited at quantile {quantile}"
            )));
        }
        s_phi = s_phi.min(s);
    }
    Ok(BmsbEstimate {
        s_phi,
        p_phi: exceedance_frequency(features, directions, s_phi),
        n_directions: directions.len(),
        n_samples: features.ncols(),
    })
}

/// Estimate from `n_directions` seeded random directions.
pub fn estimate_bmsb(
    batch: &TrajectoryBatch,
    n_directions: usize,
    quantile: f64,
    seed: u64,
) -> Result<BmsbEstimate> {
    let dirs = sample_unit_directions(batch.n_phi(), n_directions, seed);
    estimate_bmsb_with_directions(&batch.features, &dirs, quantile)
}
