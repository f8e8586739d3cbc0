//! Quadrotor with state `x = (p[0..3], v[3..6], q[6..10], omega[10..13])`,
//! `q = (w, x, y, z)` body-to-inertial, and input `u = (thrust, tau_x,
//! tau_y, tau_z)`.
//!
//! Regression targets are the translational acceleration with gravity
//! removed and the angular acceleration, `[v' + g e_z; omega'] = theta * phi`,
//! where `phi = [f R e_z; tau_x; w_y w_z; tau_y; w_z w_x; tau_z; w_x w_y]`
//! (9 features) and `theta` (6 x 9) holds the seven physical unknowns:
//!
//! ```text
//! theta_1 = 1/m                  (rows 0..3, diagonal of the thrust block)
//! theta_2 = 1/I_xx,  theta_3 = (I_yy - I_zz)/I_xx
//! theta_4 = 1/I_yy,  theta_5 = (I_zz - I_xx)/I_yy
//! theta_6 = 1/I_zz,  theta_7 = (I_xx - I_yy)/I_zz
//! ```

use nalgebra::{DMatrix, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Expr, FeatureMap, InitialState, Noise, Policy, SystemKind, SystemModel, DEFAULT_BLOWUP_THRESHOLD};
use crate::error::{Error, Result};
use crate::linalg::ParameterMatrix;
use crate::rng::SimRng;

const QW: usize = 6;
const QX: usize = 7;
const QY: usize = 8;
const QZ: usize = 9;
const WX: usize = 10;
const WY: usize = 11;
const WZ: usize = 12;

/// PD gains for the hover controller.
#[derive(Debug, Clone, PartialEq)]
pub struct HoverGains {
    pub kp_z: f64,
    pub kd_z: f64,
    pub k_attitude: [f64; 3],
    pub k_rate: [f64; 3],
}

impl Default for HoverGains {
    fn default() -> Self {
        Self {
            kp_z: 2.0,
            kd_z: 1.5,
            k_attitude: [0.4, 0.4, 0.2],
            k_rate: [0.08, 0.08, 0.05],
        }
    }
}

/// Hover stabilizer: thrust `m (g - kp_z z - kd_z v_z)`, torques PD on the
/// quaternion attitude error and body rates. Uses nominal mass.
#[derive(Debug, Clone, PartialEq)]
pub struct HoverController {
    pub mass: f64,
    pub gravity: f64,
    pub gains: HoverGains,
}

impl HoverController {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.gains;
        let thrust = self.mass * (self.gravity - g.kp_z * x[2] - g.kd_z * x[5]);
        let sign = if x[QW] < 0.0 { -1.0 } else { 1.0 };
        let err = [2.0 * sign * x[QX], 2.0 * sign * x[QY], 2.0 * sign * x[QZ]];
        let rate = [x[WX], x[WY], x[WZ]];
        let mut u = vec![thrust];
        u.extend((0..3).map(|k| -g.k_attitude[k] * err[k] - g.k_rate[k] * rate[k]));
        u
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// (I_xx, I_yy, I_zz) in kg m^2
    pub inertia: [f64; 3],
    pub gravity: f64,
    /// s
    pub dt: f64,
    pub gains: HoverGains,
    /// Disturbance std on the accelerations.
    pub noise_std: f64,
    /// Half-width of the uniform thrust perturbation (N).
    pub thrust_noise_max: f64,
    /// Half-width of the uniform torque perturbation (N m).
    pub torque_noise_max: f64,
    pub position_half_width: f64,
    pub velocity_std: f64,
    pub tilt_std: f64,
    pub rate_std: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.3,
            inertia: [0.0347563, 0.0458929, 0.0977],
            gravity: 9.81,
            dt: 0.01,
            gains: HoverGains::default(),
            noise_std: 0.1,
            thrust_noise_max: 2.0,
            torque_noise_max: 0.5,
            position_half_width: 1.0,
            velocity_std: 0.5,
            tilt_std: 0.2,
            rate_std: 1.0,
        }
    }
}

fn theta_from(mass: f64, [ixx, iyy, izz]: [f64; 3]) -> ParameterMatrix {
    let mut t = DMatrix::zeros(6, 9);
    for k in 0..3 {
        t[(k, k)] = 1.0 / mass;
    }
    t[(3, 3)] = 1.0 / ixx;
    t[(3, 4)] = (iyy - izz) / ixx;
    t[(4, 5)] = 1.0 / iyy;
    t[(4, 6)] = (izz - ixx) / iyy;
    t[(5, 7)] = 1.0 / izz;
    t[(5, 8)] = (ixx - iyy) / izz;
    ParameterMatrix::from(t)
}

/// The seven physical unknowns read back out of a 6 x 9 parameter matrix.
pub fn quadrotor_unknowns(theta: &ParameterMatrix) -> Result<[f64; 7]> {
    if theta.shape() != (6, 9) {
        return Err(Error::Shape(format!("expected (6, 9), got {:?}", theta.shape())));
    }
    let t = theta.as_matrix();
    Ok([
        t[(0, 0)],
        t[(3, 3)],
        t[(3, 4)],
        t[(4, 5)],
        t[(4, 6)],
        t[(5, 7)],
        t[(5, 8)],
    ])
}

fn feature_terms() -> Vec<Expr> {
    use Expr::{Const, Input, State};
    let two = || Const(2.0);
    let thrust = || Input(0);
    vec![
        // f * 2 (qx qz + qw qy)
        Expr::product([
            two(),
            thrust(),
            Expr::sum([
                Expr::product([State(QX), State(QZ)]),
                Expr::product([State(QW), State(QY)]),
            ]),
        ]),
        // f * 2 (qy qz - qw qx)
        Expr::product([
            two(),
            thrust(),
            Expr::sum([
                Expr::product([State(QY), State(QZ)]),
                Expr::product([Const(-1.0), State(QW), State(QX)]),
            ]),
        ]),
        // f * (1 - 2 (qx^2 + qy^2))
        Expr::product([
            thrust(),
            Expr::sum([
                Const(1.0),
                Expr::product([Const(-2.0), State(QX), State(QX)]),
                Expr::product([Const(-2.0), State(QY), State(QY)]),
            ]),
        ]),
        Input(1),
        Expr::product([State(WY), State(WZ)]),
        Input(2),
        Expr::product([State(WZ), State(WX)]),
        Input(3),
        Expr::product([State(WX), State(WY)]),
    ]
}

pub fn make_quadrotor_system(p: &QuadrotorParams) -> Result<SystemModel> {
    let positive = [
        ("mass", p.mass),
        ("I_xx", p.inertia[0]),
        ("I_yy", p.inertia[1]),
        ("I_zz", p.inertia[2]),
        ("dt", p.dt),
        ("gravity", p.gravity),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("quadrotor {name} must be > 0")));
        }
    }
    let sys = SystemModel {
        kind: SystemKind::Quadrotor {
            mass: p.mass,
            inertia: p.inertia,
            gravity: p.gravity,
        },
        feature_map: FeatureMap::new(13, 4, feature_terms())?,
        true_theta: theta_from(p.mass, p.inertia),
        noise_std: p.noise_std,
        input_spec: Noise::Uniform(vec![
            p.thrust_noise_max,
            p.torque_noise_max,
            p.torque_noise_max,
            p.torque_noise_max,
        ]),
        policy: Some(Policy::Hover(HoverController {
            mass: p.mass,
            gravity: p.gravity,
            gains: p.gains.clone(),
        })),
        x0_spec: InitialState::NearHover {
            position_half_width: p.position_half_width,
            velocity_std: p.velocity_std,
            tilt_std: p.tilt_std,
            rate_std: p.rate_std,
        },
        dt: p.dt,
        blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
    };
    sys.validate()?;
    Ok(sys)
}

pub(super) fn sample_near_hover(
    rng: &mut SimRng,
    position_half_width: f64,
    velocity_std: f64,
    tilt_std: f64,
    rate_std: f64,
) -> Vec<f64> {
    let mut normal = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let vel: Vec<f64> = (0..3).map(|_| normal(velocity_std)).collect();
    let rotvec = Vector3::from_fn(|_, _| normal(tilt_std));
    let rates: Vec<f64> = (0..3).map(|_| normal(rate_std)).collect();
    let pos: Vec<f64> = (0..3)
        .map(|_| position_half_width * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    let q = UnitQuaternion::from_scaled_axis(rotvec);
    let mut x = pos;
    x.extend(vel);
    x.extend([q.w, q.i, q.j, q.k]);
    x.extend(rates);
    x
}

/// One forward-Euler step given the regression output
/// `acc = [v' + g e_z; omega']`; the quaternion is renormalized.
pub(super) fn integrate(x: &[f64], acc: &[f64], gravity: f64, dt: f64) -> Vec<f64> {
    let mut next = x.to_vec();
    for k in 0..3 {
        next[k] = x[k] + dt * x[3 + k];
        next[3 + k] = x[3 + k] + dt * acc[k];
        next[WX + k] = x[WX + k] + dt * acc[3 + k];
    }
    next[5] -= dt * gravity;

    let (w, qx, qy, qz) = (x[QW], x[QX], x[QY], x[QZ]);
    let (ox, oy, oz) = (x[WX], x[WY], x[WZ]);
    let dq = [
        -0.5 * (qx * ox + qy * oy + qz * oz),
        0.5 * (w * ox + qy * oz - qz * oy),
        0.5 * (w * oy + qz * ox - qx * oz),
        0.5 * (w * oz + qx * oy - qy * ox),
    ];
    let mut q = [w + dt * dq[0], qx + dt * dq[1], qy + dt * dq[2], qz + dt * dq[3]];
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.iter_mut().for_each(|v| *v /= n);
    next[QW..=QZ].copy_from_slice(&q);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn hover_state() -> Vec<f64> {
        let mut x = vec![0.0; 13];
        x[QW] = 1.0;
        x
    }

    #[test]
    fn dimensions() {
        let sys = make_quadrotor_system(&QuadrotorParams::default()).unwrap();
        assert_eq!(sys.n_state(), 13);
        assert_eq!(sys.n_input(), 4);
        assert_eq!(sys.n_phi(), 9);
        assert_eq!(sys.n_target(), 6);
        let nz = sys.true_theta.as_matrix().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nz, 9);
    }

    #[test]
    fn unknowns_match_physical_definitions() {
        let p = QuadrotorParams::default();
        let sys = make_quadrotor_system(&p).unwrap();
        let [ixx, iyy, izz] = p.inertia;
        let got = quadrotor_unknowns(&sys.true_theta).unwrap();
        let want = [
            1.0 / p.mass,
            1.0 / ixx,
            (iyy - izz) / ixx,
            1.0 / iyy,
            (izz - ixx) / iyy,
            1.0 / izz,
            (ixx - iyy) / izz,
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let p = QuadrotorParams::default();
        let sys = make_quadrotor_system(&p).unwrap();
        let x = hover_state();
        let u = [p.mass * p.gravity, 0.0, 0.0, 0.0];
        let s = sys.step(&x, &u, &[0.0; 6]);
        for (a, b) in s.next_state.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        // The controller commands hover thrust at the origin.
        let pi = sys.policy.as_ref().unwrap().eval(&x);
        assert!((pi[0] - p.mass * p.gravity).abs() < 1e-12);
        assert!(pi[1..].iter().all(|t| *t == 0.0));
    }

    /// Euler equations and Newton's law evaluated directly, compared against
    /// the regression layout.
    #[test]
    fn regression_layout_matches_rigid_body_equations() {
        let p = QuadrotorParams::default();
        let sys = make_quadrotor_system(&p).unwrap();
        let mut rng = substream(5, "quad-test", &[]);
        for _ in 0..20 {
            let x = sys.sample_initial_state(&mut rng);
            let u = sys.sample_input(&x, &mut rng);
            let s = sys.step(&x, &u, &[0.0; 6]);

            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                x[QW], x[QX], x[QY], x[QZ],
            ));
            let thrust_dir = q * Vector3::z();
            let lin = thrust_dir * (u[0] / p.mass);
            let i = Vector3::from(p.inertia);
            let w = Vector3::new(x[WX], x[WY], x[WZ]);
            let tau = Vector3::new(u[1], u[2], u[3]);
            let iw = i.component_mul(&w);
            let ang = (tau - w.cross(&iw)).component_div(&i);
            let want = [lin.x, lin.y, lin.z, ang.x, ang.y, ang.z];
            for k in 0..6 {
                assert!(
                    (s.target[k] - want[k]).abs() < 1e-10 * (1.0 + want[k].abs()),
                    "row {k}: {} vs {}",
                    s.target[k],
                    want[k]
                );
            }
        }
    }

    #[test]
    fn quaternion_stays_unit() {
        let sys = make_quadrotor_system(&QuadrotorParams::default()).unwrap();
        let mut rng = substream(9, "quad-test", &[]);
        let mut x = sys.sample_initial_state(&mut rng);
        for _ in 0..200 {
            let u = sys.sample_input(&x, &mut rng);
            let w = sys.sample_disturbance(&mut rng);
            x = sys.step(&x, &u, &w).next_state;
            let n: f64 = x[QW..=QZ].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inertia() {
        let p = QuadrotorParams {
            inertia: [0.1, 0.0, 0.1],
            ..Default::default()
        };
        assert!(matches!(make_quadrotor_system(&p), Err(Error::Config(_))));
    }
}
