//! Cart-pole balancing with the usual constants: cart mass 1.0, pole mass 0.1,
//! pole half-length 0.5, force ±10 N, explicit Euler with τ = 0.02 s. The
//! episode ends when `|x| > 2.4` or `|θ| > 12°`.

use rand::Rng;

use super::{check_finite, check_range, ControlEnvSpec};
use crate::features::Observation;
use crate::mdp::{Simulator, Step};
use crate::{Error, Result};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl Observation for CartpoleState {
    fn observation(&self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

impl CartpoleState {
    fn failed(&self) -> bool {
        self.x.abs() > X_LIMIT || self.theta.abs() > THETA_LIMIT
    }
}

#[derive(Clone, Debug)]
pub struct Cartpole {
    state: CartpoleState,
}

pub fn make_cartpole() -> (Cartpole, ControlEnvSpec) {
    (
        Cartpole::default(),
        ControlEnvSpec {
            name: "cartpole",
            state_dim: 4,
            action_count: 2,
            max_steps: 500,
            reward_convention: "+1 per step, 0 on the step the pole falls",
            bounds: vec![
                (-X_LIMIT, X_LIMIT),
                (-3.0, 3.0),
                (-THETA_LIMIT, THETA_LIMIT),
                (-3.5, 3.5),
            ],
        },
    )
}

impl Default for Cartpole {
    fn default() -> Self {
        Self {
            state: CartpoleState {
                x: 0.0,
                x_dot: 0.0,
                theta: 0.0,
                theta_dot: 0.0,
            },
        }
    }
}

impl Simulator for Cartpole {
    type State = CartpoleState;

    fn action_count(&self) -> usize {
        2
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> CartpoleState {
        let mut u = || rng.random_range(-0.05..0.05);
        self.state = CartpoleState {
            x: u(),
            x_dot: u(),
            theta: u(),
            theta_dot: u(),
        };
        self.state
    }

    /// Accepts `|x| ≤ 4.8`, `|θ| ≤ 0.418` and finite velocities.
    fn set_state(&mut self, state: &CartpoleState) -> Result<()> {
        check_finite("cartpole", &state.observation())?;
        check_range("cart position", state.x, -2.0 * X_LIMIT, 2.0 * X_LIMIT)?;
        check_range("pole angle", state.theta, -2.0 * THETA_LIMIT, 2.0 * THETA_LIMIT)?;
        self.state = *state;
        Ok(())
    }

    fn state(&self) -> CartpoleState {
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, _rng: &mut R) -> Result<Step<CartpoleState>> {
        if action >= 2 {
            return Err(Error::Index {
                what: "action",
                index: action,
                limit: 2,
            });
        }
        let s = self.state;
        let force = if action == 1 { FORCE } else { -FORCE };
        let (sin, cos) = s.theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * s.theta_dot * s.theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        self.state = CartpoleState {
            x: s.x + TAU * s.x_dot,
            x_dot: s.x_dot + TAU * x_acc,
            theta: s.theta + TAU * s.theta_dot,
            theta_dot: s.theta_dot + TAU * theta_acc,
        };
        let terminal = self.state.failed();
        Ok(Step {
            reward: if terminal { 0.0 } else { 1.0 },
            next_state: self.state,
            terminal,
        })
    }
}
