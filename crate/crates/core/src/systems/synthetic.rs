use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Expr, FeatureMap, InitialState, Noise, SystemKind, SystemModel, DEFAULT_BLOWUP_THRESHOLD};
use crate::error::{Error, Result};
use crate::linalg::ParameterMatrix;
use crate::rng::substream;

/// Synthetic system `x+ = A sin(x) + B u + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub n_x: usize,
    pub n_u: usize,
    pub noise_std: f64,
    pub input_std: f64,
    pub x0_std: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_x: 3,
            n_u: 2,
            noise_std: 1.0,
            input_std: 1.0,
            x0_std: 1.0,
        }
    }
}

pub(super) fn theta_from(a: &DMatrix<f64>, b: &DMatrix<f64>) -> ParameterMatrix {
    let n_x = a.nrows();
    let mut theta = DMatrix::zeros(n_x, a.ncols() + b.ncols());
    theta.view_mut((0, 0), a.shape()).copy_from(a);
    theta.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    ParameterMatrix::from(theta)
}

/// Builds the synthetic system with nominal `(A0, B0)` drawn once from the
/// seeded standard normal. Open loop: `x0`, `u` and `w` are zero-mean with the
/// configured standard deviations.
pub fn make_synthetic_system(p: &SyntheticParams, seed: u64) -> Result<SystemModel> {
    if p.n_x == 0 || p.n_u == 0 {
        return Err(Error::Config("synthetic system needs n_x >= 1 and n_u >= 1".into()));
    }
    let mut rng = substream(seed, "synthetic-nominal", &[]);
    let mut draw = |r, c| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = draw(p.n_x, p.n_x);
    let b = draw(p.n_x, p.n_u);
    from_matrices(a, b, p)
}

/// Synthetic system with explicit `(A, B)`.
pub(crate) fn from_matrices(a: DMatrix<f64>, b: DMatrix<f64>, p: &SyntheticParams) -> Result<SystemModel> {
    let (n_x, n_u) = (a.nrows(), b.ncols());
    let terms = (0..n_x)
        .map(|i| Expr::sin(Expr::State(i)))
        .chain((0..n_u).map(Expr::Input))
        .collect();
    let sys = SystemModel {
        true_theta: theta_from(&a, &b),
        kind: SystemKind::Synthetic { a, b },
        feature_map: FeatureMap::new(n_x, n_u, terms)?,
        noise_std: p.noise_std,
        input_spec: Noise::gaussian(n_u, p.input_std),
        policy: None,
        x0_spec: InitialState::Independent(Noise::gaussian(n_x, p.x0_std)),
        dt: 1.0,
        blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
    };
    sys.validate()?;
    Ok(sys)
}
