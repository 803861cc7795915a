//! Config loading and override resolution.
//!
//! Precedence is strictly file < `--set` overrides, applied on top of the
//! per-environment defaults. Every knob is optional in both sources; a key
//! that is not a `TrainConfig` field is rejected before any work happens.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use spo_core::trainer::TrainConfig;
use spo_core::ObjectiveKind;
use std::path::Path;

/// All-optional mirror of [`TrainConfig`], the shape of config files and
/// `--set` overrides. `deny_unknown_fields` turns typos into errors that
/// name the offending key.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub env_id: Option<String>,
    pub objective: Option<ObjectiveKind>,
    pub eps: Option<f64>,
    pub num_workers: Option<usize>,
    pub horizon: Option<usize>,
    pub total_steps: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lr_decay: Option<bool>,
    pub update_epochs: Option<usize>,
    pub num_minibatches: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub advantage_norm: Option<bool>,
    pub max_grad_norm: Option<f64>,
    pub kl_stop: Option<f64>,
    pub adaptive_lr_kl: Option<f64>,
    pub hidden_sizes: Option<Vec<usize>>,
    pub seed: Option<u64>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<PartialConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }

    /// Parse one `key=value` override. The right-hand side uses config-file
    /// syntax (`seed=3`, `hidden_sizes=[32,32]`); a bare word that is not
    /// valid there is retried as a string, so `objective=spo` works without
    /// quotes.
    pub fn from_set(arg: &str) -> Result<PartialConfig> {
        let (key, value) = arg
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{arg}' is not of the form key=value"))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            bail!("override '{arg}' is missing its key or value");
        }
        let line = format!("{key} = {value}");
        match toml::from_str::<PartialConfig>(&line) {
            Ok(partial) => Ok(partial),
            Err(first_err) => {
                // Retry with the value quoted, unless it was already quoted
                // or structured; then the first error is the real one.
                let starts_structured = value.starts_with(['"', '\'', '[', '{']);
                if starts_structured {
                    return Err(anyhow!(first_err).context(format!("parsing override '{arg}'")));
                }
                let quoted = format!("{key} = \"{}\"", value.replace('"', "\\\""));
                toml::from_str::<PartialConfig>(&quoted)
                    .map_err(|_| anyhow!(first_err).context(format!("parsing override '{arg}'")))
            }
        }
    }

    /// Overlay `other` onto `self`: fields set in `other` win.
    pub fn merged(mut self, other: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            env_id,
            objective,
            eps,
            num_workers,
            horizon,
            total_steps,
            learning_rate,
            lr_decay,
            update_epochs,
            num_minibatches,
            gamma,
            lambda,
            c1,
            c2,
            advantage_norm,
            max_grad_norm,
            kl_stop,
            adaptive_lr_kl,
            hidden_sizes,
            seed
        );
        self
    }

    /// Resolve against the per-environment defaults into a full config.
    pub fn resolve(self) -> Result<TrainConfig> {
        let env_id = self
            .env_id
            .clone()
            .ok_or_else(|| anyhow!("config is missing the required field 'env_id'"))?;
        let mut config = TrainConfig::for_env(&env_id)
            .map_err(|e| anyhow!("{e}"))
            .with_context(|| format!("resolving defaults for env_id '{env_id}'"))?;
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        apply!(
            objective,
            eps,
            num_workers,
            horizon,
            total_steps,
            learning_rate,
            lr_decay,
            update_epochs,
            num_minibatches,
            gamma,
            lambda,
            c1,
            c2,
            advantage_norm,
            max_grad_norm,
            kl_stop,
            adaptive_lr_kl,
            hidden_sizes,
            seed
        );
        Ok(config)
    }
}

/// Gather a file (optional) and `--set` overrides into one resolved config.
pub fn resolve_config(file: Option<&Path>, sets: &[String]) -> Result<TrainConfig> {
    let mut partial = match file {
        Some(path) => PartialConfig::from_file(path)?,
        None => PartialConfig::default(),
    };
    for set in sets {
        partial = partial.merged(PartialConfig::from_set(set)?);
    }
    partial.resolve()
}

/// Render a resolved config as config-file text.
pub fn to_toml(config: &TrainConfig) -> Result<String> {
    toml::to_string_pretty(config).context("serializing resolved config")
}
