//! Point-mass reacher: a damped 2-D double integrator pushed toward the
//! origin. Observation [px, py, vx, vy]; action is a force in [-1, 1]^2
//! (clamped); reward is the negated squared distance to the goal after the
//! move. Episodes only end by the 200-step cap.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::Action;

use super::{ActionSpace, Env, EnvSpec, Transition};

const DT: f64 = 0.1;
const DAMPING: f64 = 0.95;
const MAX_STEPS: usize = 200;

pub struct PointMass {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
    live: bool,
}

impl PointMass {
    pub fn new() -> Self {
        PointMass {
            spec: EnvSpec::new(
                4,
                ActionSpace::Continuous { dim: 2, low: vec![-1.0, -1.0], high: vec![1.0, 1.0] },
                MAX_STEPS,
            )
            .expect("static spec is valid"),
            pos: [0.0; 2],
            vel: [0.0; 2],
            steps: 0,
            live: false,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        self.pos = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
        self.vel = [0.0, 0.0];
        self.steps = 0;
        self.live = true;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        if !self.live {
            return Err(Error::Sequencing("point mass stepped outside a live episode".into()));
        }
        if !self.spec.action_space.contains(action) {
            return Err(Error::EnvFault(format!("point mass got action {action:?}")));
        }
        let force = match action {
            Action::Continuous(f) => [f[0].clamp(-1.0, 1.0), f[1].clamp(-1.0, 1.0)],
            Action::Discrete(_) => unreachable!("space check rejects discrete actions"),
        };
        let prev = self.observation();
        for i in 0..2 {
            self.vel[i] = DAMPING * self.vel[i] + DT * force[i];
            self.pos[i] += DT * self.vel[i];
        }
        self.steps += 1;
        let truncated = self.steps >= MAX_STEPS;
        if truncated {
            self.live = false;
        }
        let reward = -(self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1]);
        Ok(Transition {
            state: prev,
            action: action.clone(),
            reward,
            next_state: self.observation(),
            done: false,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_force_from_rest_leaves_position_fixed() {
        let mut env = PointMass::new();
        let s = env.reset(7);
        let t = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(t.next_state[0], s[0]);
        assert_eq!(t.next_state[1], s[1]);
        assert_eq!(t.reward, -(s[0] * s[0] + s[1] * s[1]));
    }

    #[test]
    fn velocity_decays_by_the_damping_factor_when_coasting() {
        let mut env = PointMass::new();
        env.reset(13);
        env.step(&Action::Continuous(vec![1.0, -0.5])).unwrap();
        let v_before = env.vel;
        let t = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(t.next_state[2], DAMPING * v_before[0]);
        assert_eq!(t.next_state[3], DAMPING * v_before[1]);
    }

    #[test]
    fn oversized_forces_clamp_to_the_unit_box() {
        let mut a = PointMass::new();
        let mut b = PointMass::new();
        a.reset(21);
        b.reset(21);
        let ta = a.step(&Action::Continuous(vec![10.0, -42.0])).unwrap();
        let tb = b.step(&Action::Continuous(vec![1.0, -1.0])).unwrap();
        assert_eq!(ta.next_state, tb.next_state);
        assert_eq!(ta.reward.to_bits(), tb.reward.to_bits());
    }

    #[test]
    fn ends_only_by_truncation_at_the_cap() {
        let mut env = PointMass::new();
        env.reset(3);
        for i in 1..=MAX_STEPS {
            let t = env.step(&Action::Continuous(vec![0.3, 0.3])).unwrap();
            assert!(!t.done);
            assert_eq!(t.truncated, i == MAX_STEPS);
        }
        assert!(env.step(&Action::Continuous(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn steady_push_toward_goal_improves_reward() {
        let mut env = PointMass::new();
        let s = env.reset(31);
        let mut last = -(s[0] * s[0] + s[1] * s[1]);
        for _ in 0..30 {
            let toward = [-env.pos[0], -env.pos[1]];
            let t = env.step(&Action::Continuous(toward.to_vec())).unwrap();
            last = t.reward;
        }
        assert!(last > -(s[0] * s[0] + s[1] * s[1]));
        assert!(last > -0.5);
    }
}
