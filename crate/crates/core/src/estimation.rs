//! Closed-form least squares and the normalized error metric.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_same_shape, entrywise_mean, Norm, ParameterMatrix};
use crate::systems::TrajectoryBatch;

/// `argmin_theta ||X+ - theta Phi||_F^2 (+ ridge ||theta||_F^2)`, solved
/// through a Cholesky factorization of `Phi Phi^T + ridge I`.
pub fn lse_client(batch: &TrajectoryBatch, ridge: f64) -> Result<ParameterMatrix> {
    if batch.n_cols() == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::Config("ridge must be finite and >= 0".into()));
    }
    let n_phi = batch.n_phi();
    let gram = batch.gram() + DMatrix::identity(n_phi, n_phi) * ridge;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi <= 0.0 || lo <= hi * f64::EPSILON * n_phi as f64 {
        return Err(Error::RankDeficient { lambda_min: lo });
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient { lambda_min: lo })?;
    let rhs = &batch.features * batch.targets.transpose();
    ParameterMatrix::new(chol.solve(&rhs).transpose())
}

/// Per-client least squares, then the entry-wise average.
pub fn lse_pooled_average(batches: &[TrajectoryBatch], ridge: f64) -> Result<ParameterMatrix> {
    let first = batches
        .first()
        .ok_or_else(|| Error::InsufficientData("no client batches".into()))?;
    let estimates = batches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if (b.n_x(), b.n_phi()) != (first.n_x(), first.n_phi()) {
                return Err(Error::Shape("client batches disagree on (n_x, n_phi)".into()).for_client(i));
            }
            lse_client(b, ridge).map_err(|e| e.for_client(i))
        })
        .collect::<Result<Vec<_>>>()?;
    entrywise_mean(&estimates)
}

/// `||theta_hat - theta_true|| / ||theta_true||` in the spectral norm.
pub fn estimation_error(theta_hat: &ParameterMatrix, theta_true: &ParameterMatrix) -> Result<f64> {
    estimation_error_with(theta_hat, theta_true, Norm::Spectral)
}

pub fn estimation_error_with(
    theta_hat: &ParameterMatrix,
    theta_true: &ParameterMatrix,
    norm: Norm,
) -> Result<f64> {
    check_same_shape(theta_hat, theta_true)?;
    let denom = theta_true.norm(norm);
    if denom == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    Ok(theta_hat.distance(theta_true, norm)? / denom)
}

/// Per-client normalized errors of one global model at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub round: usize,
    pub per_client: Vec<f64>,
    pub max_error: f64,
    pub mean_error: f64,
}

impl ErrorRecord {
    pub fn evaluate(
        round: usize,
        global: &ParameterMatrix,
        true_thetas: &[ParameterMatrix],
        norm: Norm,
    ) -> Result<Self> {
        if true_thetas.is_empty() {
            return Err(Error::InsufficientData("no clients to evaluate".into()));
        }
        let per_client = true_thetas
            .iter()
            .map(|t| estimation_error_with(global, t, norm))
            .collect::<Result<Vec<_>>>()?;
        let max_error = per_client.iter().copied().fold(0.0, f64::max);
        let mean_error = per_client.iter().sum::<f64>() / per_client.len() as f64;
        Ok(Self {
            round,
            per_client,
            max_error,
            mean_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::systems::{make_synthetic_system, simulate_batch, SyntheticParams};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, "estimation-test", &[]);
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    /// Normal equations solved by Gauss-Jordan elimination with partial
    /// pivoting, written out over scalars.
    fn elimination_oracle(phi: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        let (p, n) = (phi.nrows(), phi.ncols());
        let q = y.nrows();
        let mut aug = vec![vec![0.0; p + q]; p];
        for i in 0..p {
            for j in 0..p {
                aug[i][j] = (0..n).map(|k| phi[(i, k)] * phi[(j, k)]).sum();
            }
            for r in 0..q {
                aug[i][p + r] = (0..n).map(|k| phi[(i, k)] * y[(r, k)]).sum();
            }
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|a, b| aug[*a][col].abs().total_cmp(&aug[*b][col].abs()))
                .unwrap();
            aug.swap(col, piv);
            let d = aug[col][col];
            for v in aug[col].iter_mut() {
                *v /= d;
            }
            for row in 0..p {
                if row != col {
                    let f = aug[row][col];
                    for k in 0..p + q {
                        aug[row][k] -= f * aug[col][k];
                    }
                }
            }
        }
        DMatrix::from_fn(q, p, |r, i| aug[i][p + r])
    }

    #[test]
    fn scalar_mean_of_two_points() {
        let b = TrajectoryBatch::from_regression(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 3.0]),
        )
        .unwrap();
        let theta = lse_client(&b, 0.0).unwrap();
        assert!((theta.as_matrix()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_elimination_oracle() {
        let phi = random_matrix(3, 20, 1);
        let y = random_matrix(2, 20, 2);
        let b = TrajectoryBatch::from_regression(phi.clone(), y.clone()).unwrap();
        let theta = lse_client(&b, 0.0).unwrap();
        let oracle = elimination_oracle(&phi, &y);
        assert!((theta.as_matrix() - oracle).amax() < 1e-10);
    }

    #[test]
    fn exact_recovery_noise_free() {
        let mut sys = make_synthetic_system(&SyntheticParams::default(), 5).unwrap();
        sys.noise_std = 0.0;
        let b = simulate_batch(&sys, 10, 5, 3).unwrap();
        let theta = lse_client(&b, 0.0).unwrap();
        assert!((theta.as_matrix() - sys.true_theta.as_matrix()).amax() < 1e-10);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let phi = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let y = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let b = TrajectoryBatch::from_regression(phi, y).unwrap();
        match lse_client(&b, 0.0) {
            Err(Error::RankDeficient { lambda_min }) => assert!(lambda_min.abs() < 1e-9),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        // The ridge escape hatch makes the solve well posed.
        assert!(lse_client(&b, 1e-6).is_ok());
    }

    #[test]
    fn lse_is_the_unique_minimizer() {
        let b = TrajectoryBatch::from_regression(random_matrix(4, 30, 3), random_matrix(2, 30, 4)).unwrap();
        let theta = lse_client(&b, 0.0).unwrap();
        let loss = |t: &DMatrix<f64>| (&b.targets - t * &b.features).norm_squared();
        let best = loss(theta.as_matrix());
        for k in 0..20 {
            let delta = random_matrix(2, 4, 100 + k) * 1e-3;
            assert!(loss(&(theta.as_matrix() + delta)) > best);
        }
    }

    #[test]
    fn pooled_average_of_two_exact_clients() {
        let mut s1 = make_synthetic_system(&SyntheticParams::default(), 1).unwrap();
        let mut s2 = make_synthetic_system(&SyntheticParams::default(), 2).unwrap();
        s1.noise_std = 0.0;
        s2.noise_std = 0.0;
        let b1 = simulate_batch(&s1, 5, 5, 1).unwrap();
        let b2 = simulate_batch(&s2, 5, 5, 2).unwrap();
        let avg = lse_pooled_average(&[b1, b2], 0.0).unwrap();
        let want = (s1.true_theta.as_matrix() + s2.true_theta.as_matrix()) / 2.0;
        assert!((avg.as_matrix() - want).amax() < 1e-10);
    }

    #[test]
    fn pooled_average_matches_componentwise_oracle() {
        let batches: Vec<_> = (0..3)
            .map(|i| {
                TrajectoryBatch::from_regression(random_matrix(3, 15, 10 + i), random_matrix(2, 15, 20 + i))
                    .unwrap()
            })
            .collect();
        let got = lse_pooled_average(&batches, 0.0).unwrap();
        let mut want = DMatrix::zeros(2, 3);
        for b in &batches {
            want += elimination_oracle(&b.features, &b.targets);
        }
        want /= 3.0;
        assert!((got.as_matrix() - want).amax() < 1e-10);
    }

    #[test]
    fn pooled_average_reports_failing_client() {
        let good = TrajectoryBatch::from_regression(random_matrix(2, 10, 1), random_matrix(1, 10, 2)).unwrap();
        let bad = TrajectoryBatch::from_regression(DMatrix::zeros(2, 10), random_matrix(1, 10, 3)).unwrap();
        match lse_pooled_average(&[good, bad], 0.0) {
            Err(Error::Client { client: 1, source }) => {
                assert!(matches!(*source, Error::RankDeficient { .. }))
            }
            other => panic!("{other:?}"),
        }
    }

    /// Largest singular value by power iteration on `A^T A`.
    fn power_iteration_norm(a: &DMatrix<f64>) -> f64 {
        let ata = a.transpose() * a;
        let mut v = nalgebra::DVector::from_element(ata.ncols(), 1.0);
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = &ata * &v;
            let next = w.norm();
            v = w / next;
            if (next - lambda).abs() < 1e-14 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }

    #[test]
    fn error_metric_examples() {
        let t = ParameterMatrix::from(random_matrix(3, 5, 7));
        assert_eq!(estimation_error(&t, &t).unwrap(), 0.0);
        let twice = ParameterMatrix::from(t.as_matrix() * 2.0);
        assert!((estimation_error(&twice, &t).unwrap() - 1.0).abs() < 1e-12);

        let h = ParameterMatrix::from(random_matrix(3, 5, 8));
        let oracle = power_iteration_norm(&(h.as_matrix() - t.as_matrix()))
            / power_iteration_norm(t.as_matrix());
        assert!((estimation_error(&h, &t).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn error_metric_rejects_zero_truth() {
        let z = ParameterMatrix::zeros(2, 2);
        assert!(matches!(estimation_error(&z, &z), Err(Error::UndefinedMetric)));
    }

    #[test]
    fn error_metric_is_orthogonally_invariant() {
        let h = ParameterMatrix::from(random_matrix(3, 4, 1));
        let t = ParameterMatrix::from(random_matrix(3, 4, 2));
        let q = random_matrix(3, 3, 3).qr().q();
        let hq = ParameterMatrix::from(&q * h.as_matrix());
        let tq = ParameterMatrix::from(&q * t.as_matrix());
        let a = estimation_error(&h, &t).unwrap();
        let b = estimation_error(&hq, &tq).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn error_record_takes_max_over_clients() {
        let t1 = ParameterMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let t2 = ParameterMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let g = ParameterMatrix::from_row_slice(1, 2, &[1.5, 0.0]);
        let r = ErrorRecord::evaluate(3, &g, &[t1, t2], Norm::Spectral).unwrap();
        assert_eq!(r.per_client, vec![0.5, 0.25]);
        assert_eq!(r.max_error, 0.5);
        assert_eq!(r.mean_error, 0.375);
    }
}
