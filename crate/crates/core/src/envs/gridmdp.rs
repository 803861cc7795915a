//! Interactive wrapper around a random [`TabularMdp`]: one-hot
//! observations, table-driven stochastic transitions, no terminal states,
//! truncation at a fixed cap. The underlying tables stay exposed so exact
//! analysis can run beside sampled trajectories.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::Action;

use super::tabular::TabularMdp;
use super::{ActionSpace, Env, EnvSpec, Transition};

const MAX_STEPS: usize = 64;

/// Construction seed for the registry's default table; fixed so every run
/// sees the same MDP.
const DEFAULT_TABLE_SEED: u64 = 7;

pub struct GridMdp {
    spec: EnvSpec,
    mdp: TabularMdp,
    rng: Rng,
    state: usize,
    steps: usize,
    live: bool,
}

impl GridMdp {
    pub fn new(mdp: TabularMdp) -> Self {
        let spec = EnvSpec::new(
            mdp.num_states,
            ActionSpace::Discrete { n: mdp.num_actions },
            MAX_STEPS,
        )
        .expect("tabular mdp dimensions are positive");
        GridMdp { spec, mdp, rng: Rng::new(0), state: 0, steps: 0, live: false }
    }

    /// The 8-state, 3-action instance used by the `"gridmdp"` registry id.
    pub fn default_table() -> Self {
        GridMdp::new(TabularMdp::random(8, 3, 0.99, DEFAULT_TABLE_SEED))
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.num_states];
        v[s] = 1.0;
        v
    }

    fn sample_next(&mut self, s: usize, a: usize) -> usize {
        let u = self.rng.uniform();
        let row = &self.mdp.transition[s][a];
        let mut cum = 0.0;
        for (i, p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                return i;
            }
        }
        row.len() - 1
    }
}

impl Env for GridMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = Rng::new(seed);
        // Initial distribution is a point mass at state 0.
        self.state = 0;
        self.steps = 0;
        self.live = true;
        self.one_hot(0)
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        if !self.live {
            return Err(Error::Sequencing("grid mdp stepped outside a live episode".into()));
        }
        if !self.spec.action_space.contains(action) {
            return Err(Error::EnvFault(format!("grid mdp got action {action:?}")));
        }
        let a = match action {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => unreachable!("space check rejects continuous actions"),
        };
        let s = self.state;
        let next = self.sample_next(s, a);
        self.state = next;
        self.steps += 1;
        let truncated = self.steps >= MAX_STEPS;
        if truncated {
            self.live = false;
        }
        Ok(Transition {
            state: self.one_hot(s),
            action: action.clone(),
            reward: self.mdp.reward[s][a],
            next_state: self.one_hot(next),
            done: false,
            truncated,
        })
    }
}
