use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::ExperimentRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    #[serde(rename = "M")]
    pub m: usize,
    pub inv_sqrt_m: f64,
    /// Mean over seeds of the final-round `max_error`.
    pub mean_final_error: f64,
    pub n_seeds: usize,
}

/// Least-squares fit of `log(error) = intercept + slope * log(M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<ScalingPoint>,
}

/// Final-round `max_error` per `(config_id, seed)`.
pub fn final_errors(records: &[ExperimentRecord]) -> BTreeMap<(usize, u64), &ExperimentRecord> {
    let mut last: BTreeMap<(usize, u64), &ExperimentRecord> = BTreeMap::new();
    for r in records {
        let e = last.entry((r.config_id, r.seed)).or_insert(r);
        if r.round > e.round {
            *e = r;
        }
    }
    last
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (my - slope * mx, slope, r2)
}

/// Fits the final error of an `M` sweep against `M` on log-log axes. Every
/// other sweep variable must be constant across the records.
pub fn sqrt_m_scaling(records: &[ExperimentRecord]) -> Result<ScalingReport> {
    let finals = final_errors(records);
    let first = finals
        .values()
        .next()
        .ok_or_else(|| Error::InsufficientData("no records".into()))?;
    if finals
        .values()
        .any(|r| r.n_i != first.n_i || r.k_i != first.k_i || r.epsilon != first.epsilon || r.t != first.t)
    {
        return Err(Error::Config("records are not an M sweep: N_i, T, K_i or epsilon vary".into()));
    }
    let mut by_m: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in finals.values() {
        by_m.entry(r.m).or_default().push(r.max_error);
    }
    if by_m.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 distinct M values, got {}",
            by_m.len()
        )));
    }
    let points: Vec<ScalingPoint> = by_m
        .into_iter()
        .map(|(m, errs)| ScalingPoint {
            m,
            inv_sqrt_m: 1.0 / (m as f64).sqrt(),
            mean_final_error: errs.iter().sum::<f64>() / errs.len() as f64,
            n_seeds: errs.len(),
        })
        .collect();
    if points.iter().any(|p| !(p.mean_final_error > 0.0 && p.mean_final_error.is_finite())) {
        return Err(Error::InsufficientData("final errors must be positive and finite".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| (p.m as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean_final_error.ln()).collect();
    let (intercept, slope, r_squared) = linear_fit(&x, &y);
    Ok(ScalingReport {
        slope,
        intercept,
        r_squared,
        points,
    })
}
