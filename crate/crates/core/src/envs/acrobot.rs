//! Two-link acrobot with torque on the middle joint, following the book
//! dynamics: unit link lengths and masses, centres of mass at 0.5, unit moments
//! of inertia, torques {−1, 0, +1}, one RK4 step over dt = 0.2. Angles wrap to
//! `[−π, π]`, velocities clip to 4π and 9π. The episode ends when the tip rises
//! one link length above the pivot.

use std::f64::consts::PI;

use rand::Rng;

use super::{check_finite, check_range, ControlEnvSpec};
use crate::features::Observation;
use crate::mdp::{Simulator, Step};
use crate::{Error, Result};

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcrobotState {
    pub theta1: f64,
    pub theta2: f64,
    pub dtheta1: f64,
    pub dtheta2: f64,
}

impl Observation for AcrobotState {
    fn observation(&self) -> Vec<f64> {
        vec![
            self.theta1.cos(),
            self.theta1.sin(),
            self.theta2.cos(),
            self.theta2.sin(),
            self.dtheta1,
            self.dtheta2,
        ]
    }
}

impl AcrobotState {
    fn swung_up(&self) -> bool {
        -self.theta1.cos() - (self.theta2 + self.theta1).cos() > 1.0
    }
}

#[derive(Clone, Debug)]
pub struct Acrobot {
    state: AcrobotState,
}

pub fn make_acrobot() -> (Acrobot, ControlEnvSpec) {
    (
        Acrobot {
            state: AcrobotState {
                theta1: 0.0,
                theta2: 0.0,
                dtheta1: 0.0,
                dtheta2: 0.0,
            },
        },
        ControlEnvSpec {
            name: "acrobot",
            state_dim: 6,
            action_count: 3,
            max_steps: 500,
            reward_convention: "-1 per step, 0 on the step that swings the tip up",
            bounds: vec![
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-MAX_VEL_1, MAX_VEL_1),
                (-MAX_VEL_2, MAX_VEL_2),
            ],
        },
    )
}

fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2) = (LINK_MASS_1, LINK_MASS_2);
    let (l1, lc1, lc2) = (LINK_LENGTH_1, LINK_COM_1, LINK_COM_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * GRAVITY * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * GRAVITY * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(s: [f64; 4], torque: f64, h: f64) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2], a[3] + c * k[3]];
    let k1 = derivatives(s, torque);
    let k2 = derivatives(add(s, k1, h / 2.0), torque);
    let k3 = derivatives(add(s, k2, h / 2.0), torque);
    let k4 = derivatives(add(s, k3, h), torque);
    let mut out = s;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap(angle: f64) -> f64 {
    let mut a = angle;
    while a > PI {
        a -= 2.0 * PI;
    }
    while a < -PI {
        a += 2.0 * PI;
    }
    a
}

impl Simulator for Acrobot {
    type State = AcrobotState;

    fn action_count(&self) -> usize {
        3
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> AcrobotState {
        let mut u = || rng.random_range(-0.1..0.1);
        self.state = AcrobotState {
            theta1: u(),
            theta2: u(),
            dtheta1: u(),
            dtheta2: u(),
        };
        self.state
    }

    fn set_state(&mut self, state: &AcrobotState) -> Result<()> {
        check_finite("acrobot", &[state.theta1, state.theta2, state.dtheta1, state.dtheta2])?;
        check_range("theta1", state.theta1, -PI, PI)?;
        check_range("theta2", state.theta2, -PI, PI)?;
        check_range("dtheta1", state.dtheta1, -MAX_VEL_1, MAX_VEL_1)?;
        check_range("dtheta2", state.dtheta2, -MAX_VEL_2, MAX_VEL_2)?;
        self.state = *state;
        Ok(())
    }

    fn state(&self) -> AcrobotState {
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, _rng: &mut R) -> Result<Step<AcrobotState>> {
        let torque = *TORQUES.get(action).ok_or(Error::Index {
            what: "action",
            index: action,
            limit: 3,
        })?;
        let s = self.state;
        let [t1, t2, d1, d2] = rk4([s.theta1, s.theta2, s.dtheta1, s.dtheta2], torque, DT);
        self.state = AcrobotState {
            theta1: wrap(t1),
            theta2: wrap(t2),
            dtheta1: d1.clamp(-MAX_VEL_1, MAX_VEL_1),
            dtheta2: d2.clamp(-MAX_VEL_2, MAX_VEL_2),
        };
        let terminal = self.state.swung_up();
        Ok(Step {
            reward: if terminal { 0.0 } else { -1.0 },
            next_state: self.state,
            terminal,
        })
    }
}
