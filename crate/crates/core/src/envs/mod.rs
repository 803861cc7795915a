//! Seedable toy environments behind one trait.
//!
//! Three tasks at desk scale: a cartpole balancer with the classic
//! published dynamics (discrete actions), a 2-D point-mass reacher
//! (continuous actions), and a small random-table MDP whose exact
//! quantities back the analysis oracles in [`tabular`].
//!
//! Determinism contract: identical seed plus identical action sequence
//! gives a bit-identical trajectory. Continuous actions may arrive
//! unclipped (policies sample without bounds); environments clamp to their
//! declared range internally, after validating kind and dimension.

mod cartpole;
mod gridmdp;
mod pointmass;
pub mod tabular;

pub use cartpole::CartPole;
pub use gridmdp::GridMdp;
pub use pointmass::PointMass;
pub use tabular::{
    exact_q_v_advantage, exact_visitation, performance_difference_check, TabularMdp, TabularPolicy,
};

use crate::error::{Error, Result};
use crate::types::Action;

/// Action-space description.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { dim: usize, low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Kind and dimension check. Continuous magnitudes are not bounds-checked
    /// here; environments clamp them.
    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(a)) => a < n,
            (ActionSpace::Continuous { dim, .. }, Action::Continuous(x)) => {
                x.len() == *dim && x.iter().all(|v| v.is_finite())
            }
            _ => false,
        }
    }
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn new(observation_dim: usize, action_space: ActionSpace, max_episode_steps: usize) -> Result<Self> {
        if observation_dim == 0 || max_episode_steps == 0 {
            return Err(Error::InvalidConfig("observation dim and horizon must be positive".into()));
        }
        match &action_space {
            ActionSpace::Discrete { n } => {
                if *n == 0 {
                    return Err(Error::InvalidConfig("discrete space needs at least one action".into()));
                }
            }
            ActionSpace::Continuous { dim, low, high } => {
                if *dim == 0 || low.len() != *dim || high.len() != *dim {
                    return Err(Error::InvalidConfig("continuous space dims inconsistent".into()));
                }
                if low.iter().zip(high).any(|(l, h)| !(l < h)) {
                    return Err(Error::InvalidConfig("continuous bounds need low < high".into()));
                }
            }
        }
        Ok(EnvSpec { observation_dim, action_space, max_episode_steps })
    }
}

/// One step of interaction.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Episode ended by the task itself (failure or terminal state).
    pub done: bool,
    /// Episode ended by the step cap.
    pub truncated: bool,
}

/// A resettable, seedable environment. `Send` so rollout workers can own
/// instances on separate threads.
pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;
    /// Starts a new episode; deterministic per seed.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Advances one step. Errors on an out-of-space action or when called
    /// before `reset` / after the episode has ended.
    fn step(&mut self, action: &Action) -> Result<Transition>;
}

/// Environment registry keyed by the config string id.
pub fn make(id: &str) -> Result<Box<dyn Env>> {
    match id {
        "cartpole" => Ok(Box::new(CartPole::new())),
        "pointmass" => Ok(Box::new(PointMass::new())),
        "gridmdp" => Ok(Box::new(GridMdp::default_table())),
        other => Err(Error::InvalidConfig(format!(
            "unknown env {other:?}; expected cartpole, pointmass, or gridmdp"
        ))),
    }
}
