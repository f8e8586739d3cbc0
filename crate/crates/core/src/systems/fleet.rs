use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{SystemKind, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::rng::substream;

/// Shared perturbation directions: `V` acts on the first parameter block,
/// `U` (when present) on the second.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDirections {
    pub v: DMatrix<f64>,
    pub u: Option<DMatrix<f64>>,
}

/// Client heterogeneity: `A_i = A_0 + gamma_1 V`, `B_i = B_0 + gamma_2 U`,
/// with `gamma ~ U(0, epsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneitySpec {
    pub epsilon: f64,
    pub directions: PerturbationDirections,
}

fn unit_frobenius(rows: usize, cols: usize, rng: &mut crate::rng::SimRng) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = m.norm();
        if n > 0.0 {
            return m / n;
        }
    }
}

impl HeterogeneitySpec {
    pub fn new(epsilon: f64, directions: PerturbationDirections) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Config("epsilon must be finite and >= 0".into()));
        }
        Ok(Self { epsilon, directions })
    }

    /// Directions for `base`, drawn from the seeded standard normal and
    /// normalized to unit Frobenius norm. The quadrotor perturbs only
    /// `theta_1`, so its direction is the fixed scalar 1.
    pub fn sample_for(base: &SystemModel, epsilon: f64, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, "perturbation-directions", &[]);
        let directions = match &base.kind {
            SystemKind::Synthetic { a, b } => PerturbationDirections {
                v: unit_frobenius(a.nrows(), a.ncols(), &mut rng),
                u: Some(unit_frobenius(b.nrows(), b.ncols(), &mut rng)),
            },
            SystemKind::Pendulum { .. } => PerturbationDirections {
                v: unit_frobenius(1, 1, &mut rng),
                u: Some(unit_frobenius(1, 1, &mut rng)),
            },
            SystemKind::Quadrotor { .. } => PerturbationDirections {
                v: DMatrix::from_element(1, 1, 1.0),
                u: None,
            },
        };
        Self::new(epsilon, directions)
    }

    /// `c` such that `max_ij ||theta_i - theta_j||_2 <= c * epsilon` for any
    /// fleet built from `base` with these directions.
    pub fn spread_constant(&self, base: &SystemModel) -> f64 {
        let v = spectral_norm(&self.directions.v);
        let u = self.directions.u.as_ref().map_or(0.0, spectral_norm);
        match &base.kind {
            SystemKind::Synthetic { .. } => v + u,
            SystemKind::Pendulum { gravity, .. } => base.dt * (gravity * v + u),
            SystemKind::Quadrotor { .. } => v,
        }
    }
}

/// `m` clients derived from `base`. Client `i` draws its `gamma`s from its own
/// substream, so client `i` is the same system whatever `m` is.
pub fn make_client_fleet(
    base: &SystemModel,
    het: &HeterogeneitySpec,
    m: usize,
    seed: u64,
) -> Result<Vec<SystemModel>> {
    if m == 0 {
        return Err(Error::Config("fleet needs M >= 1".into()));
    }
    if !(het.epsilon.is_finite() && het.epsilon >= 0.0) {
        return Err(Error::Config("epsilon must be finite and >= 0".into()));
    }
    (0..m)
        .map(|i| {
            let mut rng = substream(seed, "client-gamma", &[i as u64]);
            let g1 = het.epsilon * rng.random::<f64>();
            let g2 = het.epsilon * rng.random::<f64>();
            base.perturbed(g1, g2, &het.directions)
        })
        .collect()
}
