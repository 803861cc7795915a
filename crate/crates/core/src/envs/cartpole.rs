//! Cartpole balancing with the classic published constants: Euler
//! integration at 20 ms, force 10 N, pole half-length 0.5 m, failure at
//! 12 degrees or 2.4 m, reward 1 per step, 500-step cap, initial state
//! uniform in [-0.05, 0.05]^4.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::Action;

use super::{ActionSpace, Env, EnvSpec, Transition};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const X_THRESHOLD: f64 = 2.4;
const MAX_STEPS: usize = 500;

pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
    steps: usize,
    live: bool,
}

impl CartPole {
    pub fn new() -> Self {
        CartPole {
            spec: EnvSpec::new(4, ActionSpace::Discrete { n: 2 }, MAX_STEPS)
                .expect("static spec is valid"),
            state: [0.0; 4],
            steps: 0,
            live: false,
        }
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        for v in self.state.iter_mut() {
            *v = rng.uniform_in(-0.05, 0.05);
        }
        self.steps = 0;
        self.live = true;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        if !self.live {
            return Err(Error::Sequencing("cartpole stepped outside a live episode".into()));
        }
        if !self.spec.action_space.contains(action) {
            return Err(Error::EnvFault(format!("cartpole got action {action:?}")));
        }
        let force = match action {
            Action::Discrete(1) => FORCE_MAG,
            _ => -FORCE_MAG,
        };
        let [x, x_dot, theta, theta_dot] = self.state;
        let cos = theta.cos();
        let sin = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;

        let next = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        let prev = self.state;
        self.state = next;
        self.steps += 1;

        let done = next[0].abs() > X_THRESHOLD || next[2].abs() > THETA_THRESHOLD;
        let truncated = self.steps >= MAX_STEPS;
        if done || truncated {
            self.live = false;
        }
        Ok(Transition {
            state: prev.to_vec(),
            action: action.clone(),
            reward: 1.0,
            next_state: next.to_vec(),
            done,
            truncated,
        })
    }
}
