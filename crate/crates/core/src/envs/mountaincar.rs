//! Under-powered car in a valley: force 0.001, gravity 0.0025, height
//! `sin(3p)`, velocity clipped to ±0.07 and position to `[−1.2, 0.6]`. The car
//! stops dead against the left wall. The goal is `p ≥ 0.5`.

use rand::Rng;

use super::{check_finite, check_range, ControlEnvSpec};
use crate::features::Observation;
use crate::mdp::{Simulator, Step};
use crate::{Error, Result};

const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;
const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountaincarState {
    pub position: f64,
    pub velocity: f64,
}

impl Observation for MountaincarState {
    fn observation(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }
}

#[derive(Clone, Debug)]
pub struct Mountaincar {
    state: MountaincarState,
}

pub fn make_mountaincar() -> (Mountaincar, ControlEnvSpec) {
    (
        Mountaincar {
            state: MountaincarState {
                position: -0.5,
                velocity: 0.0,
            },
        },
        ControlEnvSpec {
            name: "mountaincar",
            state_dim: 2,
            action_count: 3,
            max_steps: 200,
            reward_convention: "-1 per step, 0 on the step that reaches the goal",
            bounds: vec![(MIN_POSITION, MAX_POSITION), (-MAX_SPEED, MAX_SPEED)],
        },
    )
}

impl Simulator for Mountaincar {
    type State = MountaincarState;

    fn action_count(&self) -> usize {
        3
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> MountaincarState {
        self.state = MountaincarState {
            position: rng.random_range(-0.6..-0.4),
            velocity: 0.0,
        };
        self.state
    }

    fn set_state(&mut self, state: &MountaincarState) -> Result<()> {
        check_finite("mountaincar", &state.observation())?;
        check_range("position", state.position, MIN_POSITION, MAX_POSITION)?;
        check_range("velocity", state.velocity, -MAX_SPEED, MAX_SPEED)?;
        self.state = *state;
        Ok(())
    }

    fn state(&self) -> MountaincarState {
        self.state
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, _rng: &mut R) -> Result<Step<MountaincarState>> {
        if action >= 3 {
            return Err(Error::Index {
                what: "action",
                index: action,
                limit: 3,
            });
        }
        let s = self.state;
        let mut velocity = s.velocity + (action as f64 - 1.0) * FORCE - (3.0 * s.position).cos() * GRAVITY;
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        let position = (s.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        self.state = MountaincarState { position, velocity };
        let terminal = position >= GOAL;
        Ok(Step {
            reward: if terminal { 0.0 } else { -1.0 },
            next_state: self.state,
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn left_bound_round_trips() {
        let (mut env, spec) = make_mountaincar();
        assert_eq!((spec.action_count, spec.state_dim, spec.max_steps), (3, 2, 200));
        let s = MountaincarState {
            position: MIN_POSITION,
            velocity: 0.0,
        };
        env.set_state(&s).unwrap();
        assert_eq!(env.state(), s);
        assert!(env
            .set_state(&MountaincarState {
                position: -1.3,
                velocity: 0.0
            })
            .is_err());
    }

    #[test]
    fn wall_stops_the_car() {
        let (mut env, _) = make_mountaincar();
        env.set_state(&MountaincarState {
            position: -1.19,
            velocity: -0.05,
        })
        .unwrap();
        let st = env.step(0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(st.next_state.position, MIN_POSITION);
        assert_eq!(st.next_state.velocity, 0.0);
    }

    #[test]
    fn reset_range() {
        let (mut env, _) = make_mountaincar();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = env.reset(&mut rng);
            assert!((-0.6..-0.4).contains(&s.position) && s.velocity == 0.0);
        }
    }

    #[test]
    fn energy_pumping_reaches_the_goal() {
        let (mut env, _) = make_mountaincar();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        let mut reached = false;
        for _ in 0..200 {
            let a = if env.state().velocity >= 0.0 { 2 } else { 0 };
            let st = env.step(a, &mut rng).unwrap();
            if st.terminal {
                assert_eq!(st.reward, 0.0);
                reached = true;
                break;
            }
        }
        assert!(reached);
    }
}
