//! Generalized advantage estimation over collected rollouts.
//!
//! A [`RolloutBatch`] holds one data-collection window in time order,
//! possibly spanning several episodes (the `done` flag marks boundaries)
//! and usually ending mid-episode, in which case `bootstrap_value` carries
//! the old value estimate of the state after the final transition.
//!
//! Advantages follow the exponentially weighted TD-error sum
//! A_t = sum_k (gamma*lambda)^k delta_{t+k}, computed by the standard
//! backward recursion; a `done` at step t cuts the accumulation so no term
//! from a later episode leaks backward. Return targets are value +
//! advantage, computed once per window with the pre-update value function
//! and reused across all optimization epochs.

use crate::error::{Error, Result};
use crate::types::Action;

/// One environment transition as stored for training.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    /// True when the advantage trace must cut after this step. Terminations
    /// set it directly; the trainer also sets it for episodes that hit their
    /// step cap, after folding the tail value into `reward`.
    pub done: bool,
    /// Value estimate of `state` under the pre-update critic.
    pub value: f64,
    /// Log-probability of `action` under the pre-update policy.
    pub log_prob: f64,
}

/// A collection window plus the advantage/return vectors derived from it.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub steps: Vec<RolloutStep>,
    /// Pre-update value of the state after the last step; ignored when that
    /// step terminated its episode.
    pub bootstrap_value: f64,
    /// Empty until [`compute_gae`] fills it.
    pub advantages: Vec<f64>,
    /// Empty until [`compute_returns`] fills it.
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(steps: Vec<RolloutStep>, bootstrap_value: f64) -> Self {
        RolloutBatch { steps, bootstrap_value, advantages: Vec::new(), returns: Vec::new() }
    }

    /// Fills `advantages` and `returns` in one go.
    pub fn finalize(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        self.advantages = compute_gae(self, gamma, lambda)?;
        self.returns = compute_returns(self)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Backward-recursion advantage estimates.
///
/// delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t), with the window's
/// `bootstrap_value` standing in for V(s_{t+1}) at the final step, and
/// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if batch.steps.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!(
            "gamma {gamma} and lambda {lambda} must lie in [0, 1]"
        )));
    }
    let n = batch.steps.len();
    let mut advantages = vec![0.0; n];
    let mut carried = 0.0;
    for t in (0..n).rev() {
        let step = &batch.steps[t];
        let mask = if step.done { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { batch.steps[t + 1].value } else { batch.bootstrap_value };
        let delta = step.reward + gamma * next_value * mask - step.value;
        carried = delta + gamma * lambda * mask * carried;
        advantages[t] = carried;
    }
    Ok(advantages)
}

/// Return targets: value + advantage, elementwise.
pub fn compute_returns(batch: &RolloutBatch) -> Result<Vec<f64>> {
    if batch.advantages.len() != batch.steps.len() {
        return Err(Error::Sequencing(format!(
            "returns requested with {} advantages for {} steps; compute advantages first",
            batch.advantages.len(),
            batch.steps.len()
        )));
    }
    Ok(batch
        .steps
        .iter()
        .zip(&batch.advantages)
        .map(|(s, a)| s.value + a)
        .collect())
}
