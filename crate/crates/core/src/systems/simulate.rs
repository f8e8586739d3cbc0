use nalgebra::DMatrix;
use rayon::prelude::*;

use super::SystemModel;
use crate::error::{Error, Result};
use crate::linalg::ParameterMatrix;
use crate::rng::substream;

/// `N` trajectories of length `T` from one client, stored column-wise in
/// time-major order within each trajectory (column `j * T + t`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub states: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
    /// Regressors `Phi`, `n_phi x (N T)`.
    pub features: DMatrix<f64>,
    /// Targets `X+`, `n_x x (N T)`.
    pub targets: DMatrix<f64>,
    /// Disturbance as it entered each target column.
    pub noise: DMatrix<f64>,
    pub n_traj: usize,
    pub traj_len: usize,
}

impl TrajectoryBatch {
    /// Batch from raw regression data; states and inputs are left empty and
    /// the noise is unknown (recorded as zero).
    pub fn from_regression(features: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if features.ncols() != targets.ncols() {
            return Err(Error::Shape(format!(
                "features have {} columns, targets {}",
                features.ncols(),
                targets.ncols()
            )));
        }
        let n = features.ncols();
        Ok(Self {
            states: DMatrix::zeros(0, n),
            inputs: DMatrix::zeros(0, n),
            noise: DMatrix::zeros(targets.nrows(), n),
            features,
            targets,
            n_traj: n,
            traj_len: 1,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_phi(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_x(&self) -> usize {
        self.targets.nrows()
    }

    /// `Phi Phi^T`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.features * self.features.transpose()
    }

    /// `X+ - theta Phi`.
    pub fn residual(&self, theta: &ParameterMatrix) -> DMatrix<f64> {
        &self.targets - theta.as_matrix() * &self.features
    }

    /// Column-wise concatenation.
    pub fn concat(batches: &[TrajectoryBatch]) -> Result<TrajectoryBatch> {
        let first = batches
            .first()
            .ok_or_else(|| Error::InsufficientData("no batches to concatenate".into()))?;
        if batches
            .iter()
            .any(|b| b.n_phi() != first.n_phi() || b.n_x() != first.n_x())
        {
            return Err(Error::Shape("batches disagree on (n_x, n_phi)".into()));
        }
        let cat = |f: fn(&TrajectoryBatch) -> &DMatrix<f64>| {
            let rows = f(first).nrows();
            let total: usize = batches.iter().map(|b| f(b).ncols()).sum();
            let mut out = DMatrix::zeros(rows, total);
            let mut at = 0;
            for b in batches {
                let m = f(b);
                if m.nrows() == rows {
                    out.columns_mut(at, m.ncols()).copy_from(m);
                }
                at += m.ncols();
            }
            out
        };
        Ok(TrajectoryBatch {
            states: cat(|b| &b.states),
            inputs: cat(|b| &b.inputs),
            features: cat(|b| &b.features),
            targets: cat(|b| &b.targets),
            noise: cat(|b| &b.noise),
            n_traj: batches.iter().map(|b| b.n_traj).sum(),
            traj_len: first.traj_len,
        })
    }
}

struct Trajectory {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    features: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
}

fn run_trajectory(sys: &SystemModel, index: usize, traj_len: usize, seed: u64) -> Result<Trajectory> {
    let mut rng = substream(seed, "trajectory", &[index as u64]);
    let mut x = sys.sample_initial_state(&mut rng);
    let mut out = Trajectory {
        states: Vec::with_capacity(traj_len),
        inputs: Vec::with_capacity(traj_len),
        features: Vec::with_capacity(traj_len),
        targets: Vec::with_capacity(traj_len),
        noise: Vec::with_capacity(traj_len),
    };
    for t in 0..traj_len {
        let u = sys.sample_input(&x, &mut rng);
        let w = sys.sample_disturbance(&mut rng);
        let step = sys.step(&x, &u, &w);
        if step
            .next_state
            .iter()
            .any(|v| !v.is_finite() || v.abs() > sys.blowup_threshold)
        {
            return Err(Error::SimulationDiverged {
                trajectory: index,
                step: t,
                threshold: sys.blowup_threshold,
            });
        }
        out.states.push(std::mem::replace(&mut x, step.next_state));
        out.inputs.push(u);
        out.features.push(step.features.iter().copied().collect());
        out.targets.push(step.target.iter().copied().collect());
        out.noise.push(step.noise.iter().copied().collect());
    }
    Ok(out)
}

/// Simulates `n_traj` independent trajectories of `traj_len` steps.
/// Trajectory `j` draws from substream `j` of `seed`, so results do not
/// depend on evaluation order or on `n_traj`.
pub fn simulate_batch(
    sys: &SystemModel,
    n_traj: usize,
    traj_len: usize,
    seed: u64,
) -> Result<TrajectoryBatch> {
    if n_traj == 0 || traj_len == 0 {
        return Err(Error::Config("simulate_batch needs n_traj >= 1 and traj_len >= 1".into()));
    }
    let trajs: Vec<Trajectory> = (0..n_traj)
        .into_par_iter()
        .map(|j| run_trajectory(sys, j, traj_len, seed))
        .collect::<Result<_>>()?;

    let n = n_traj * traj_len;
    let assemble = |rows: usize, pick: fn(&Trajectory) -> &Vec<Vec<f64>>| {
        let mut m = DMatrix::zeros(rows, n);
        for (j, tr) in trajs.iter().enumerate() {
            for (t, col) in pick(tr).iter().enumerate() {
                m.column_mut(j * traj_len + t).copy_from_slice(col);
            }
        }
        m
    };
    Ok(TrajectoryBatch {
        states: assemble(sys.n_state(), |t| &t.states),
        inputs: assemble(sys.n_input(), |t| &t.inputs),
        features: assemble(sys.n_phi(), |t| &t.features),
        targets: assemble(sys.n_target(), |t| &t.targets),
        noise: assemble(sys.n_target(), |t| &t.noise),
        n_traj,
        traj_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{
        make_pendulum_system, make_quadrotor_system, make_synthetic_system, synthetic,
        PendulumParams, QuadrotorParams, SyntheticParams,
    };

    fn noise_free(mut sys: SystemModel) -> SystemModel {
        sys.noise_std = 0.0;
        sys
    }

    #[test]
    fn column_counts() {
        let sys = make_synthetic_system(&SyntheticParams::default(), 0).unwrap();
        let b = simulate_batch(&sys, 10, 5, 1).unwrap();
        assert_eq!(b.n_cols(), 50);
        assert_eq!(b.targets.ncols(), 50);
        let b = simulate_batch(&sys, 1, 1, 1).unwrap();
        assert_eq!(b.n_cols(), 1);
    }

    #[test]
    fn noise_free_batches_reconstruct_exactly() {
        let systems = [
            noise_free(make_synthetic_system(&SyntheticParams::default(), 4).unwrap()),
            noise_free(make_pendulum_system(&PendulumParams::default()).unwrap()),
            noise_free(make_quadrotor_system(&QuadrotorParams::default()).unwrap()),
        ];
        for sys in systems {
            let b = simulate_batch(&sys, 6, 10, 2).unwrap();
            // Matrix-vector and matrix-matrix products may sum in different orders.
            let scale = b.targets.norm().max(1.0);
            assert!(b.residual(&sys.true_theta).norm() <= 1e-13 * scale, "{}", sys.name());
        }
    }

    #[test]
    fn targets_are_noisy_reconstruction() {
        let sys = make_pendulum_system(&PendulumParams::default()).unwrap();
        let b = simulate_batch(&sys, 4, 5, 2).unwrap();
        let r = b.residual(&sys.true_theta) - &b.noise;
        assert!(r.amax() < 1e-15);
        assert!(b.noise.amax() > 0.0);
    }

    #[test]
    fn synthetic_targets_are_next_states() {
        let sys = make_synthetic_system(&SyntheticParams::default(), 4).unwrap();
        let b = simulate_batch(&sys, 3, 5, 2).unwrap();
        for j in 0..3 {
            for t in 0..4 {
                assert_eq!(b.targets.column(j * 5 + t), b.states.column(j * 5 + t + 1));
            }
        }
    }

    #[test]
    fn zero_dynamics_hold_state() {
        let p = SyntheticParams {
            n_x: 1,
            n_u: 1,
            noise_std: 0.0,
            x0_std: 0.0,
            ..Default::default()
        };
        let sys = synthetic::from_matrices(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), &p).unwrap();
        let b = simulate_batch(&sys, 3, 6, 9).unwrap();
        assert!(b.states.iter().all(|x| *x == 0.0));
        assert!(b.targets.iter().all(|x| *x == 0.0));

        // From a nonzero start the state is A sin(x) + B u = 0 after one step.
        let p = SyntheticParams { x0_std: 1.0, ..p };
        let sys = synthetic::from_matrices(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), &p).unwrap();
        let b = simulate_batch(&sys, 3, 6, 9).unwrap();
        for j in 0..3 {
            assert_ne!(b.states[(0, j * 6)], 0.0);
            for t in 1..6 {
                assert_eq!(b.states[(0, j * 6 + t)], 0.0);
            }
        }
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let sys = make_pendulum_system(&PendulumParams::default()).unwrap();
        let a = simulate_batch(&sys, 8, 5, 77).unwrap();
        let b = simulate_batch(&sys, 8, 5, 77).unwrap();
        assert_eq!(a, b);
        let c = simulate_batch(&sys, 4, 5, 77).unwrap();
        assert_eq!(a.features.columns(0, 20), c.features);
    }

    #[test]
    fn divergence_is_reported() {
        let p = SyntheticParams { n_x: 1, n_u: 1, ..Default::default() };
        let mut sys =
            synthetic::from_matrices(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1e9), &p).unwrap();
        sys.input_spec = crate::systems::Noise::gaussian(1, 1.0);
        let err = simulate_batch(&sys, 2, 3, 0).unwrap_err();
        assert!(matches!(err, Error::SimulationDiverged { trajectory: 0, step: 0, .. }));
    }

    #[test]
    fn concat_stacks_columns() {
        let sys = make_synthetic_system(&SyntheticParams::default(), 0).unwrap();
        let a = simulate_batch(&sys, 2, 5, 1).unwrap();
        let b = simulate_batch(&sys, 3, 5, 2).unwrap();
        let c = TrajectoryBatch::concat(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.n_cols(), 25);
        assert_eq!(c.features.columns(10, 15), b.features);
        assert_eq!(c.n_traj, 5);
    }
}
