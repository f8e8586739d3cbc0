//! Linearly-parameterized nonlinear systems `x+ = theta * phi(x, u) + w`,
//! the three concrete instances, client heterogeneity and trajectory
//! generation.

mod features;
mod fleet;
mod pendulum;
mod quadrotor;
mod simulate;
mod synthetic;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use features::{Expr, FeatureMap, TermKind};
pub use fleet::{make_client_fleet, HeterogeneitySpec, PerturbationDirections};
pub use pendulum::{make_pendulum_system, PendulumParams};
pub use quadrotor::{make_quadrotor_system, quadrotor_unknowns, HoverGains, QuadrotorParams};
pub use simulate::{simulate_batch, TrajectoryBatch};
pub use synthetic::{make_synthetic_system, SyntheticParams};

use crate::error::{Error, Result};
use crate::linalg::ParameterMatrix;
use crate::rng::SimRng;

/// Default blow-up threshold on any state entry.
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e6;

/// Zero-mean, per-coordinate independent distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    /// Standard deviation per coordinate.
    Gaussian(Vec<f64>),
    /// `U(-a, a)` with half-width `a` per coordinate.
    Uniform(Vec<f64>),
}

impl Noise {
    pub fn gaussian(dim: usize, std: f64) -> Self {
        Noise::Gaussian(vec![std; dim])
    }

    pub fn uniform(dim: usize, half_width: f64) -> Self {
        Noise::Uniform(vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            Noise::Gaussian(s) | Noise::Uniform(s) => s.len(),
        }
    }

    fn scales(&self) -> &[f64] {
        match self {
            Noise::Gaussian(s) | Noise::Uniform(s) => s,
        }
    }

    /// Per-coordinate standard deviation.
    pub fn std(&self) -> Vec<f64> {
        match self {
            Noise::Gaussian(s) => s.clone(),
            Noise::Uniform(a) => a.iter().map(|a| a / 3f64.sqrt()).collect(),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.scales().iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config(format!("{what} scale must be finite and >= 0")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        match self {
            Noise::Gaussian(s) => s
                .iter()
                .map(|s| s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Noise::Uniform(a) => a
                .iter()
                .map(|a| a * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        }
    }
}

/// Initial-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Independent(Noise),
    /// Quadrotor near hover: uniform position, Gaussian velocity and body
    /// rates, attitude from a Gaussian rotation vector.
    NearHover {
        position_half_width: f64,
        velocity_std: f64,
        tilt_std: f64,
        rate_std: f64,
    },
}

/// Deterministic state feedback `pi(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// `u = -kp * angle - kd * rate`.
    PendulumPd { kp: f64, kd: f64 },
    Hover(quadrotor::HoverController),
}

impl Policy {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Policy::PendulumPd { kp, kd } => vec![-kp * x[0] - kd * x[1]],
            Policy::Hover(c) => c.eval(x),
        }
    }
}

/// System-specific physical description; determines how a step advances
/// the state and how parameter perturbations map onto `theta`.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    /// `x+ = A sin(x) + B u + w`.
    Synthetic { a: DMatrix<f64>, b: DMatrix<f64> },
    /// `angle'' = -A g sin(angle) + B u + w`, Euler-discretized; `a`, `b` are
    /// this client's (possibly perturbed) `A` and `B`.
    Pendulum {
        mass: f64,
        length: f64,
        gravity: f64,
        a: f64,
        b: f64,
    },
    /// Rigid-body quadrotor with state `(p, v, q, omega)`.
    Quadrotor {
        mass: f64,
        inertia: [f64; 3],
        gravity: f64,
    },
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Synthetic { .. } => "synthetic",
            SystemKind::Pendulum { .. } => "pendulum",
            SystemKind::Quadrotor { .. } => "quadrotor",
        }
    }
}

/// One step of the dynamics.
#[derive(Debug, Clone)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub features: DVector<f64>,
    /// Regression target, equal to `theta * features + noise`.
    pub target: DVector<f64>,
    /// Disturbance as it enters the regression target.
    pub noise: DVector<f64>,
}

/// A dynamical system definition.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub kind: SystemKind,
    pub feature_map: FeatureMap,
    pub true_theta: ParameterMatrix,
    /// Disturbance scale `sigma_w` in the system's physical units.
    pub noise_std: f64,
    /// Exploration noise `eta` (the whole input when there is no policy).
    pub input_spec: Noise,
    pub policy: Option<Policy>,
    pub x0_spec: InitialState,
    pub dt: f64,
    pub blowup_threshold: f64,
}

impl SystemModel {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn n_state(&self) -> usize {
        self.feature_map.n_x()
    }

    pub fn n_input(&self) -> usize {
        self.feature_map.n_u()
    }

    pub fn n_phi(&self) -> usize {
        self.feature_map.n_phi()
    }

    /// Rows of `theta` (dimension of the regression target).
    pub fn n_target(&self) -> usize {
        self.true_theta.shape().0
    }

    /// Multiplier from `w` to the disturbance in the regression target.
    pub fn noise_gain(&self) -> f64 {
        match self.kind {
            SystemKind::Pendulum { .. } => self.dt,
            _ => 1.0,
        }
    }

    /// Standard deviation of the disturbance seen by the regression.
    pub fn regression_noise_std(&self) -> f64 {
        self.noise_gain() * self.noise_std
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be finite and >= 0".into()));
        }
        self.input_spec.validate("input")?;
        if self.input_spec.dim() != self.n_input() {
            return Err(Error::Config("input distribution dimension != n_u".into()));
        }
        if let InitialState::Independent(n) = &self.x0_spec {
            n.validate("initial state")?;
            if n.dim() != self.n_state() {
                return Err(Error::Config("initial-state dimension != n_x".into()));
            }
        }
        if let Some(p) = &self.policy {
            let probe = vec![0.0; self.n_state()];
            if p.eval(&probe).len() != self.n_input() {
                return Err(Error::Config("policy output dimension != n_u".into()));
            }
        }
        if self.true_theta.shape().1 != self.n_phi() {
            return Err(Error::Shape(format!(
                "theta has {} columns, feature map has {} features",
                self.true_theta.shape().1,
                self.n_phi()
            )));
        }
        if !(self.dt > 0.0 && self.blowup_threshold > 0.0) {
            return Err(Error::Config("dt and blow-up threshold must be > 0".into()));
        }
        Ok(())
    }

    pub fn sample_initial_state(&self, rng: &mut SimRng) -> Vec<f64> {
        match &self.x0_spec {
            InitialState::Independent(n) => n.sample(rng),
            InitialState::NearHover {
                position_half_width,
                velocity_std,
                tilt_std,
                rate_std,
            } => quadrotor::sample_near_hover(
                rng,
                *position_half_width,
                *velocity_std,
                *tilt_std,
                *rate_std,
            ),
        }
    }

    /// `u = pi(x) + eta`.
    pub fn sample_input(&self, x: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let eta = self.input_spec.sample(rng);
        match &self.policy {
            Some(p) => p.eval(x).iter().zip(&eta).map(|(a, b)| a + b).collect(),
            None => eta,
        }
    }

    pub fn sample_disturbance(&self, rng: &mut SimRng) -> Vec<f64> {
        Noise::gaussian(self.n_target(), self.noise_std).sample(rng)
    }

    /// Advances `x` under input `u` and disturbance `w` (length `n_target`).
    pub fn step(&self, x: &[f64], u: &[f64], w: &[f64]) -> Step {
        let features = self.feature_map.eval(x, u);
        let noise = DVector::from_iterator(w.len(), w.iter().map(|w| self.noise_gain() * w));
        let target = self.true_theta.as_matrix() * &features + &noise;
        let next_state = match &self.kind {
            SystemKind::Synthetic { .. } => target.iter().copied().collect(),
            SystemKind::Pendulum { .. } => vec![x[0] + self.dt * x[1], x[1] + target[0]],
            SystemKind::Quadrotor { gravity, .. } => {
                quadrotor::integrate(x, target.as_slice(), *gravity, self.dt)
            }
        };
        Step {
            next_state,
            features,
            target,
            noise,
        }
    }

    /// Same system with `theta` rebuilt after perturbing the nominal
    /// parameters by `gamma1 * V` and `gamma2 * U`.
    pub fn perturbed(
        &self,
        gamma1: f64,
        gamma2: f64,
        dirs: &PerturbationDirections,
    ) -> Result<SystemModel> {
        let mut out = self.clone();
        match &mut out.kind {
            SystemKind::Synthetic { a, b } => {
                let u = dirs
                    .u
                    .as_ref()
                    .ok_or_else(|| Error::Config("synthetic system needs a U direction".into()))?;
                if dirs.v.shape() != a.shape() || u.shape() != b.shape() {
                    return Err(Error::Shape("perturbation directions do not match (A, B)".into()));
                }
                *a += &dirs.v * gamma1;
                *b += u * gamma2;
                out.true_theta = synthetic::theta_from(a, b);
            }
            SystemKind::Pendulum {
                a, b, gravity, ..
            } => {
                let u = dirs
                    .u
                    .as_ref()
                    .ok_or_else(|| Error::Config("pendulum needs a U direction".into()))?;
                if dirs.v.shape() != (1, 1) || u.shape() != (1, 1) {
                    return Err(Error::Shape("pendulum directions must be 1x1".into()));
                }
                *a += gamma1 * dirs.v[(0, 0)];
                *b += gamma2 * u[(0, 0)];
                out.true_theta = pendulum::theta_from(*a, *b, *gravity, self.dt);
            }
            SystemKind::Quadrotor { .. } => {
                if dirs.v.shape() != (1, 1) {
                    return Err(Error::Shape("quadrotor direction must be 1x1 (theta_1 only)".into()));
                }
                let mut theta = out.true_theta.clone().into_matrix();
                for k in 0..3 {
                    theta[(k, k)] += gamma1 * dirs.v[(0, 0)];
                }
                out.true_theta = ParameterMatrix::new(theta)?;
            }
        }
        Ok(out)
    }
}

/// Default instance of every implemented system, for structural checks on
/// their feature maps.
pub fn system_registry() -> Vec<SystemModel> {
    vec![
        make_synthetic_system(&SyntheticParams::default(), 0).expect("default synthetic system"),
        make_pendulum_system(&PendulumParams::default()).expect("default pendulum"),
        make_quadrotor_system(&QuadrotorParams::default()).expect("default quadrotor"),
    ]
}
