use super::{Expr, FeatureMap, InitialState, Noise, Policy, SystemKind, SystemModel, DEFAULT_BLOWUP_THRESHOLD};
use crate::error::{Error, Result};
use crate::linalg::ParameterMatrix;

/// Pendulum `angle'' = -A g sin(angle) + B u + w` with `A = 1/l`,
/// `B = 1/(m l^2)`, driven by `u = -kp angle - kd rate + eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    /// kg
    pub mass: f64,
    /// m
    pub length: f64,
    /// m/s^2
    pub gravity: f64,
    /// s
    pub dt: f64,
    pub kp: f64,
    pub kd: f64,
    /// Disturbance std on the angular acceleration (rad/s^2).
    pub noise_std: f64,
    /// `eta ~ U(-input_noise_max, input_noise_max)` (N m).
    pub input_noise_max: f64,
    /// Initial angle `~ U(-a, a)` (rad).
    pub initial_angle_max: f64,
    /// Initial rate `~ U(-a, a)` (rad/s).
    pub initial_rate_max: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            dt: 0.1,
            kp: 2.0,
            kd: 1.0,
            noise_std: 3.0,
            input_noise_max: 1.0,
            initial_angle_max: 0.5,
            initial_rate_max: 0.25,
        }
    }
}

/// Regression row for the rate update: `rate+ - rate = [-dt A g, dt B] [sin(angle); u]`.
pub(super) fn theta_from(a: f64, b: f64, gravity: f64, dt: f64) -> ParameterMatrix {
    ParameterMatrix::from_row_slice(1, 2, &[-dt * a * gravity, dt * b])
}

/// Builds the forward-Euler pendulum over state `(angle, rate)`. The
/// regression target is the scalar rate increment.
pub fn make_pendulum_system(p: &PendulumParams) -> Result<SystemModel> {
    let positive = [("mass", p.mass), ("length", p.length), ("dt", p.dt), ("gravity", p.gravity)];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("pendulum {name} must be > 0")));
        }
    }
    let a = 1.0 / p.length;
    let b = 1.0 / (p.mass * p.length * p.length);
    let sys = SystemModel {
        kind: SystemKind::Pendulum {
            mass: p.mass,
            length: p.length,
            gravity: p.gravity,
            a,
            b,
        },
        feature_map: FeatureMap::new(2, 1, vec![Expr::sin(Expr::State(0)), Expr::Input(0)])?,
        true_theta: theta_from(a, b, p.gravity, p.dt),
        noise_std: p.noise_std,
        input_spec: Noise::uniform(1, p.input_noise_max),
        policy: Some(Policy::PendulumPd { kp: p.kp, kd: p.kd }),
        x0_spec: InitialState::Independent(Noise::Uniform(vec![
            p.initial_angle_max,
            p.initial_rate_max,
        ])),
        dt: p.dt,
        blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
    };
    sys.validate()?;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn default_layout() {
        let sys = make_pendulum_system(&PendulumParams::default()).unwrap();
        assert_eq!(sys.n_target(), 1);
        assert_eq!(sys.n_phi(), 2);
        assert_eq!(sys.n_state(), 2);
        assert!((sys.regression_noise_std() - 0.1 * sys.noise_std).abs() < 1e-15);
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let sys = make_pendulum_system(&PendulumParams::default()).unwrap();
        let s = sys.step(&[0.0, 0.0], &[0.0], &[0.0]);
        assert_eq!(s.next_state, vec![0.0, 0.0]);
    }

    #[test]
    fn single_euler_step_at_horizontal() {
        let sys = make_pendulum_system(&PendulumParams::default()).unwrap();
        let s = sys.step(&[FRAC_PI_2, 0.0], &[0.0], &[0.0]);
        // -dt * g * sin(pi/2) / l
        let expected = -0.1 * 9.81 * FRAC_PI_2.sin() / 1.0;
        assert!((s.next_state[1] - expected).abs() < 1e-12);
        assert!((expected + 0.981).abs() < 1e-12);
        assert_eq!(s.next_state[0], FRAC_PI_2);
    }

    #[test]
    fn disturbance_enters_rate_scaled_by_dt() {
        let sys = make_pendulum_system(&PendulumParams::default()).unwrap();
        let s = sys.step(&[0.0, 0.0], &[0.0], &[2.0]);
        assert!((s.next_state[1] - 0.2).abs() < 1e-15);
        assert!((s.noise[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_constants() {
        for p in [
            PendulumParams { mass: 0.0, ..Default::default() },
            PendulumParams { length: -1.0, ..Default::default() },
            PendulumParams { dt: 0.0, ..Default::default() },
        ] {
            assert!(matches!(make_pendulum_system(&p), Err(Error::Config(_))));
        }
    }
}
