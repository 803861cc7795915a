//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension or layer-shape disagreement between two values.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value violates its documented range or relation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A probability vector or distribution parameter is malformed.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// An operation that needs at least one sample received none.
    #[error("empty batch")]
    EmptyBatch,

    /// A gradient buffer contains NaN or infinity; `layer` is the offending
    /// layer index of the network being stepped.
    #[error("non-finite gradient in layer {layer} ({context})")]
    PoisonedGradient { layer: usize, context: String },

    /// exp(new - old) would overflow f64; both log-probs are carried so the
    /// caller can report where the policy diverged.
    #[error("probability ratio overflow: new_log_prob={new_log_prob}, old_log_prob={old_log_prob}")]
    RatioOverflow { new_log_prob: f64, old_log_prob: f64 },

    /// A loss evaluated to NaN or infinity during an update.
    #[error("non-finite loss in mini-batch {minibatch}")]
    NonFiniteLoss { minibatch: usize },

    /// An environment was driven outside its contract (bad action, stepping
    /// a finished episode, unknown id).
    #[error("environment fault: {0}")]
    EnvFault(String),

    /// Operations that require advantages/returns were called before they
    /// were computed, or on inconsistent buffers.
    #[error("sequencing error: {0}")]
    Sequencing(String),

    /// Checkpoint document malformed or inconsistent with the requested use.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}
