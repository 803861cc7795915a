//! Shared value types used across modules.

use serde::{Deserialize, Serialize};

/// An action as fed to an environment: either a discrete index or a real
/// vector. Continuous actions are stored exactly as sampled (unclipped);
/// environments clamp to their bounds internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Discrete index, or an environment fault if this is a continuous action.
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    /// Continuous components, if any.
    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }
}
