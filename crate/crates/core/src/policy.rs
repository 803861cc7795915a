//! Action-distribution heads on top of the gradient engine.
//!
//! Two families: categorical over logits for discrete action spaces, and
//! diagonal Gaussian with a state-independent log-std vector for continuous
//! ones. Log-probabilities, entropies, samples, and the gradients the
//! trainer needs (with respect to the network output and to log-std) are
//! all closed-form here; nothing in this module touches parameters.
//!
//! Probability ratios are always formed as `exp(new - old)` from log space.
//! Continuous samples are recorded unclipped; environments clamp to their
//! action bounds internally, so stored log-probs always describe the action
//! that was actually drawn.

use crate::error::{Error, Result};
use crate::grad::Mlp;
use crate::rng::Rng;
use crate::types::Action;

/// log-std components are clamped into this range at construction.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Largest log-ratio exponent accepted before reporting overflow.
pub const MAX_RATIO_EXPONENT: f64 = 700.0;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7; // 0.5 * ln(2*pi)

/// A concrete action distribution for one state.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDistribution {
    Categorical { logits: Vec<f64> },
    DiagGaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

/// An action drawn from a distribution together with its log-probability
/// under that distribution.
#[derive(Debug, Clone)]
pub struct ActionSample {
    pub action: Action,
    pub log_prob: f64,
}

impl PolicyDistribution {
    pub fn categorical(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidDistribution("categorical needs at least one logit".into()));
        }
        if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::InvalidDistribution("categorical logits must not be NaN or +inf".into()));
        }
        Ok(PolicyDistribution::Categorical { logits })
    }

    /// Categorical from explicit probabilities (zero entries allowed); the
    /// stored logits are `ln p`.
    pub fn categorical_from_probs(probs: &[f64]) -> Result<Self> {
        validate_simplex(probs)?;
        Ok(PolicyDistribution::Categorical { logits: probs.iter().map(|p| p.ln()).collect() })
    }

    /// Diagonal Gaussian; log-std components are clamped to
    /// [`LOG_STD_MIN`, `LOG_STD_MAX`].
    pub fn gaussian(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() || mean.is_empty() {
            return Err(Error::InvalidDistribution(format!(
                "gaussian mean dim {} vs log_std dim {}",
                mean.len(),
                log_std.len()
            )));
        }
        if mean.iter().chain(&log_std).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("gaussian parameters must be finite".into()));
        }
        let log_std = log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok(PolicyDistribution::DiagGaussian { mean, log_std })
    }

    /// Normalized probabilities (categorical only).
    pub fn probs(&self) -> Result<Vec<f64>> {
        match self {
            PolicyDistribution::Categorical { logits } => {
                let ls = log_softmax(logits);
                Ok(ls.iter().map(|l| l.exp()).collect())
            }
            PolicyDistribution::DiagGaussian { .. } => {
                Err(Error::InvalidDistribution("probs() is only defined for categorical".into()))
            }
        }
    }

    /// Log-probability (density for the Gaussian) of `action`.
    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (PolicyDistribution::Categorical { logits }, Action::Discrete(a)) => {
                if *a >= logits.len() {
                    return Err(Error::InvalidDistribution(format!(
                        "action index {a} out of range for {} logits",
                        logits.len()
                    )));
                }
                Ok(log_softmax(logits)[*a])
            }
            (PolicyDistribution::DiagGaussian { mean, log_std }, Action::Continuous(x)) => {
                if x.len() != mean.len() {
                    return Err(Error::InvalidDistribution(format!(
                        "action dim {} vs distribution dim {}",
                        x.len(),
                        mean.len()
                    )));
                }
                let mut lp = 0.0;
                for d in 0..mean.len() {
                    let z = (x[d] - mean[d]) * (-log_std[d]).exp();
                    lp += -0.5 * z * z - log_std[d] - HALF_LN_TAU;
                }
                Ok(lp)
            }
            _ => Err(Error::InvalidDistribution("action kind does not match distribution".into())),
        }
    }

    /// Shannon entropy (differential entropy for the Gaussian). The Gaussian
    /// value depends only on log-std: sum(log_std + 0.5 ln(2*pi*e)).
    pub fn entropy(&self) -> f64 {
        match self {
            PolicyDistribution::Categorical { logits } => {
                let ls = log_softmax(logits);
                // 0 * ln 0 := 0 for empty-support entries.
                -ls.iter()
                    .map(|l| {
                        let p = l.exp();
                        if p > 0.0 { p * l } else { 0.0 }
                    })
                    .sum::<f64>()
            }
            PolicyDistribution::DiagGaussian { log_std, .. } => {
                log_std.iter().map(|l| l + 0.5 + HALF_LN_TAU).sum()
            }
        }
    }

    /// Draw one action. Categorical uses inverse-CDF on a single uniform;
    /// the Gaussian uses one Box-Muller normal per dimension, unclipped.
    pub fn sample(&self, rng: &mut Rng) -> ActionSample {
        match self {
            PolicyDistribution::Categorical { logits } => {
                let ls = log_softmax(logits);
                let u = rng.uniform();
                let mut cum = 0.0;
                let mut chosen = logits.len() - 1;
                for (i, l) in ls.iter().enumerate() {
                    cum += l.exp();
                    if u < cum {
                        chosen = i;
                        break;
                    }
                }
                ActionSample { action: Action::Discrete(chosen), log_prob: ls[chosen] }
            }
            PolicyDistribution::DiagGaussian { mean, log_std } => {
                let x: Vec<f64> = mean
                    .iter()
                    .zip(log_std)
                    .map(|(m, l)| m + l.exp() * rng.normal())
                    .collect();
                let action = Action::Continuous(x);
                let log_prob = self.log_prob(&action).expect("sampled action matches distribution");
                ActionSample { action, log_prob }
            }
        }
    }

    /// Deterministic action for evaluation: argmax logit (lowest index wins
    /// ties) or the Gaussian mean.
    pub fn greedy(&self) -> Action {
        match self {
            PolicyDistribution::Categorical { logits } => {
                let mut best = 0;
                for (i, l) in logits.iter().enumerate() {
                    if *l > logits[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            PolicyDistribution::DiagGaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    /// d log_prob / d (network output), i.e. logits for the categorical and
    /// the mean for the Gaussian. Categorical: one_hot(a) - softmax.
    pub fn log_prob_grad_wrt_output(&self, action: &Action) -> Result<Vec<f64>> {
        match (self, action) {
            (PolicyDistribution::Categorical { logits }, Action::Discrete(a)) => {
                if *a >= logits.len() {
                    return Err(Error::InvalidDistribution(format!("action index {a} out of range")));
                }
                let ls = log_softmax(logits);
                Ok(ls
                    .iter()
                    .enumerate()
                    .map(|(i, l)| if i == *a { 1.0 - l.exp() } else { -l.exp() })
                    .collect())
            }
            (PolicyDistribution::DiagGaussian { mean, log_std }, Action::Continuous(x)) => {
                if x.len() != mean.len() {
                    return Err(Error::InvalidDistribution("action dim mismatch".into()));
                }
                Ok(mean
                    .iter()
                    .zip(x)
                    .zip(log_std)
                    .map(|((m, xi), l)| (xi - m) * (-2.0 * l).exp())
                    .collect())
            }
            _ => Err(Error::InvalidDistribution("action kind does not match distribution".into())),
        }
    }

    /// d log_prob / d log_std. `None` for the categorical head.
    pub fn log_prob_grad_wrt_log_std(&self, action: &Action) -> Result<Option<Vec<f64>>> {
        match (self, action) {
            (PolicyDistribution::Categorical { .. }, _) => Ok(None),
            (PolicyDistribution::DiagGaussian { mean, log_std }, Action::Continuous(x)) => {
                if x.len() != mean.len() {
                    return Err(Error::InvalidDistribution("action dim mismatch".into()));
                }
                Ok(Some(
                    mean.iter()
                        .zip(x)
                        .zip(log_std)
                        .map(|((m, xi), l)| {
                            let z = (xi - m) * (-l).exp();
                            z * z - 1.0
                        })
                        .collect(),
                ))
            }
            _ => Err(Error::InvalidDistribution("action kind does not match distribution".into())),
        }
    }

    /// d entropy / d (network output). Zero for the Gaussian (entropy does
    /// not depend on the mean).
    pub fn entropy_grad_wrt_output(&self) -> Vec<f64> {
        match self {
            PolicyDistribution::Categorical { logits } => {
                let ls = log_softmax(logits);
                let h = self.entropy();
                // dH/dl_j = -p_j (log p_j + H)
                ls.iter()
                    .map(|l| {
                        let p = l.exp();
                        if p > 0.0 { -p * (l + h) } else { 0.0 }
                    })
                    .collect()
            }
            PolicyDistribution::DiagGaussian { mean, .. } => vec![0.0; mean.len()],
        }
    }

    /// d entropy / d log_std: identically one per dimension for the
    /// Gaussian, `None` for the categorical.
    pub fn entropy_grad_wrt_log_std(&self) -> Option<Vec<f64>> {
        match self {
            PolicyDistribution::Categorical { .. } => None,
            PolicyDistribution::DiagGaussian { log_std, .. } => Some(vec![1.0; log_std.len()]),
        }
    }
}

/// Numerically stable log-softmax (max-subtracted).
fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - max - log_sum).collect()
}

fn validate_simplex(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty probability vector".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution("probabilities must be finite and nonnegative".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Probability ratio `exp(new - old)`. Exponents above
/// [`MAX_RATIO_EXPONENT`] report overflow instead of returning infinity.
pub fn ratio(new_log_prob: f64, old_log_prob: f64) -> Result<f64> {
    let exponent = new_log_prob - old_log_prob;
    if !exponent.is_finite() || exponent > MAX_RATIO_EXPONENT {
        return Err(Error::RatioOverflow { new_log_prob, old_log_prob });
    }
    Ok(exponent.exp())
}

// ── trainable policy: MLP body plus a head ───────────────────────────────

/// Head kind and head-owned parameters of a [`PolicyNet`].
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyHead {
    Categorical { num_actions: usize },
    /// State-independent log-std vector, trained alongside the network.
    Gaussian { log_std: Vec<f64> },
}

/// A trainable policy: MLP body whose output feeds the head (logits, or the
/// Gaussian mean).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub mlp: Mlp,
    pub head: PolicyHead,
}

impl PolicyNet {
    /// Categorical policy with tanh hidden layers and output gain 0.01.
    pub fn categorical(obs_dim: usize, hidden: &[usize], num_actions: usize, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(num_actions);
        Ok(PolicyNet {
            mlp: Mlp::init(&sizes, 0.01, rng)?,
            head: PolicyHead::Categorical { num_actions },
        })
    }

    /// Gaussian policy; log-std starts at zero (unit standard deviation).
    pub fn gaussian(obs_dim: usize, hidden: &[usize], action_dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Ok(PolicyNet {
            mlp: Mlp::init(&sizes, 0.01, rng)?,
            head: PolicyHead::Gaussian { log_std: vec![0.0; action_dim] },
        })
    }

    /// Distribution for one observation (runs the network).
    pub fn distribution(&self, obs: &[f64]) -> Result<PolicyDistribution> {
        let out = self.mlp.forward(obs)?;
        self.distribution_from_output(out)
    }

    /// Distribution from an already-computed network output, so callers with
    /// a [`crate::grad::ForwardTrace`] do not run the network twice.
    pub fn distribution_from_output(&self, output: Vec<f64>) -> Result<PolicyDistribution> {
        match &self.head {
            PolicyHead::Categorical { num_actions } => {
                if output.len() != *num_actions {
                    return Err(Error::ShapeMismatch("network output vs action count".into()));
                }
                PolicyDistribution::categorical(output)
            }
            PolicyHead::Gaussian { log_std } => PolicyDistribution::gaussian(output, log_std.clone()),
        }
    }

    pub fn log_std(&self) -> Option<&[f64]> {
        match &self.head {
            PolicyHead::Categorical { .. } => None,
            PolicyHead::Gaussian { log_std } => Some(log_std),
        }
    }

    pub fn log_std_mut(&mut self) -> Option<&mut Vec<f64>> {
        match &mut self.head {
            PolicyHead::Categorical { .. } => None,
            PolicyHead::Gaussian { log_std } => Some(log_std),
        }
    }

    /// Clamp the stored log-std into its legal range (called after updates).
    pub fn clamp_log_std(&mut self) {
        if let PolicyHead::Gaussian { log_std } = &mut self.head {
            for l in log_std.iter_mut() {
                *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist_c(logits: &[f64]) -> PolicyDistribution {
        PolicyDistribution::categorical(logits.to_vec()).unwrap()
    }

    #[test]
    fn probabilities_normalize_and_are_shift_invariant() {
        let d1 = dist_c(&[0.3, -1.2, 2.5, 0.0]);
        let p1 = d1.probs().unwrap();
        assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let d2 = dist_c(&[100.3, 98.8, 102.5, 100.0]);
        let p2 = d2.probs().unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_normal_log_density_at_mode() {
        let d = PolicyDistribution::gaussian(vec![0.0], vec![0.0]).unwrap();
        let lp = d.log_prob(&Action::Continuous(vec![0.0])).unwrap();
        assert!((lp - (-0.9189385332046727)).abs() < 1e-12);
    }

    #[test]
    fn uniform_categorical_entropy_is_ln_k() {
        for k in [2usize, 3, 7, 16] {
            let d = dist_c(&vec![0.7; k]);
            assert!((d.entropy() - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn near_deterministic_entropy_is_tiny() {
        let d = dist_c(&[50.0, 0.0, 0.0]);
        assert!(d.entropy() < 1e-10);
    }

    #[test]
    fn gaussian_entropy_value_and_mean_independence() {
        let d = PolicyDistribution::gaussian(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!((d.entropy() - 2.8378770664093453).abs() < 1e-12);
        let shifted = PolicyDistribution::gaussian(vec![5.0, -3.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(d.entropy(), shifted.entropy());
    }

    #[test]
    fn deterministic_categorical_always_samples_support() {
        let d = PolicyDistribution::categorical_from_probs(&[1.0, 0.0, 0.0]).unwrap();
        let mut rng = Rng::new(17);
        for _ in 0..100_000 {
            let s = d.sample(&mut rng);
            assert_eq!(s.action, Action::Discrete(0));
            assert_eq!(s.log_prob, 0.0);
        }
    }

    #[test]
    fn categorical_sample_frequencies_match_probs() {
        let probs = [0.2, 0.5, 0.3];
        let d = PolicyDistribution::categorical_from_probs(&probs).unwrap();
        let mut rng = Rng::new(23);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            if let Action::Discrete(a) = d.sample(&mut rng).action {
                counts[a] += 1;
            }
        }
        for (c, p) in counts.iter().zip(&probs) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn gaussian_sample_moments() {
        let d = PolicyDistribution::gaussian(vec![1.5, -2.0], vec![0.0, -0.693147]).unwrap();
        let mut rng = Rng::new(29);
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut sum_sq = [0.0; 2];
        for _ in 0..n {
            if let Action::Continuous(x) = d.sample(&mut rng).action {
                for i in 0..2 {
                    sum[i] += x[i];
                    sum_sq[i] += x[i] * x[i];
                }
            }
        }
        let mean0 = sum[0] / n as f64;
        let mean1 = sum[1] / n as f64;
        let std0 = (sum_sq[0] / n as f64 - mean0 * mean0).sqrt();
        let std1 = (sum_sq[1] / n as f64 - mean1 * mean1).sqrt();
        assert!((mean0 - 1.5).abs() < 0.02);
        assert!((mean1 + 2.0).abs() < 0.02);
        assert!((std0 - 1.0).abs() < 0.02);
        assert!((std1 - 0.5).abs() < 0.02);
    }

    #[test]
    fn sampled_log_prob_matches_log_prob() {
        let d = PolicyDistribution::gaussian(vec![0.3], vec![-0.5]).unwrap();
        let mut rng = Rng::new(31);
        for _ in 0..100 {
            let s = d.sample(&mut rng);
            assert_eq!(s.log_prob, d.log_prob(&s.action).unwrap());
        }
    }

    fn fd_grad(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn categorical_log_prob_grad_is_one_hot_minus_softmax() {
        let logits = [0.4, -0.9, 1.3];
        let d = dist_c(&logits);
        let a = Action::Discrete(1);
        let grad = d.log_prob_grad_wrt_output(&a).unwrap();
        let probs = d.probs().unwrap();
        for j in 0..3 {
            let expected = if j == 1 { 1.0 - probs[j] } else { -probs[j] };
            assert!((grad[j] - expected).abs() < 1e-14);
            let fd = fd_grad(
                |v| {
                    let mut l = logits.to_vec();
                    l[j] = v;
                    dist_c(&l).log_prob(&a).unwrap()
                },
                logits[j],
                1e-6,
            );
            assert!((grad[j] - fd).abs() < 1e-5, "{} vs {}", grad[j], fd);
        }
    }

    #[test]
    fn gaussian_log_prob_grads_match_finite_differences() {
        let mean = [0.2, -1.1];
        let log_std = [0.1, -0.4];
        let x = Action::Continuous(vec![0.9, -1.4]);
        let d = PolicyDistribution::gaussian(mean.to_vec(), log_std.to_vec()).unwrap();
        let g_mean = d.log_prob_grad_wrt_output(&x).unwrap();
        let g_ls = d.log_prob_grad_wrt_log_std(&x).unwrap().unwrap();
        for j in 0..2 {
            let fd_m = fd_grad(
                |v| {
                    let mut m = mean.to_vec();
                    m[j] = v;
                    PolicyDistribution::gaussian(m, log_std.to_vec()).unwrap().log_prob(&x).unwrap()
                },
                mean[j],
                1e-6,
            );
            assert!((g_mean[j] - fd_m).abs() < 1e-5);
            let fd_l = fd_grad(
                |v| {
                    let mut l = log_std.to_vec();
                    l[j] = v;
                    PolicyDistribution::gaussian(mean.to_vec(), l).unwrap().log_prob(&x).unwrap()
                },
                log_std[j],
                1e-6,
            );
            assert!((g_ls[j] - fd_l).abs() < 1e-5);
        }
    }

    #[test]
    fn entropy_grads_match_finite_differences() {
        let logits = [0.5, -0.2, 0.8, -1.5];
        let d = dist_c(&logits);
        let grad = d.entropy_grad_wrt_output();
        for j in 0..4 {
            let fd = fd_grad(
                |v| {
                    let mut l = logits.to_vec();
                    l[j] = v;
                    dist_c(&l).entropy()
                },
                logits[j],
                1e-6,
            );
            assert!((grad[j] - fd).abs() < 1e-5, "{} vs {}", grad[j], fd);
        }
        let g = PolicyDistribution::gaussian(vec![0.0], vec![-0.3]).unwrap();
        assert_eq!(g.entropy_grad_wrt_output(), vec![0.0]);
        assert_eq!(g.entropy_grad_wrt_log_std(), Some(vec![1.0]));
    }

    #[test]
    fn ratio_basics_and_overflow() {
        assert_eq!(ratio(-1.0, -1.0).unwrap(), 1.0);
        assert!((ratio(1.2f64.ln(), 0.0).unwrap() - 1.2).abs() < 1e-15);
        match ratio(10.0, -700.0) {
            Err(Error::RatioOverflow { new_log_prob, old_log_prob }) => {
                assert_eq!(new_log_prob, 10.0);
                assert_eq!(old_log_prob, -700.0);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn fresh_policy_vs_itself_has_ratio_exactly_one() {
        let mut rng = Rng::new(41);
        let net = PolicyNet::categorical(4, &[8, 8], 2, &mut rng).unwrap();
        for _ in 0..50 {
            let obs: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let d = net.distribution(&obs).unwrap();
            let s = d.sample(&mut rng);
            let lp_again = net.distribution(&obs).unwrap().log_prob(&s.action).unwrap();
            assert_eq!(ratio(lp_again, s.log_prob).unwrap(), 1.0);
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let d = PolicyDistribution::gaussian(vec![0.0, 0.0], vec![5.0, -30.0]).unwrap();
        match d {
            PolicyDistribution::DiagGaussian { log_std, .. } => {
                assert_eq!(log_std, vec![LOG_STD_MAX, LOG_STD_MIN]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn greedy_actions() {
        assert_eq!(dist_c(&[0.1, 2.0, -1.0]).greedy(), Action::Discrete(1));
        let g = PolicyDistribution::gaussian(vec![0.7, -0.2], vec![0.0, 0.0]).unwrap();
        assert_eq!(g.greedy(), Action::Continuous(vec![0.7, -0.2]));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(PolicyDistribution::categorical(vec![]).is_err());
        assert!(PolicyDistribution::categorical(vec![f64::NAN]).is_err());
        assert!(PolicyDistribution::categorical_from_probs(&[0.5, 0.4]).is_err());
        assert!(PolicyDistribution::gaussian(vec![0.0], vec![0.0, 0.0]).is_err());
        let d = dist_c(&[0.0, 0.0]);
        assert!(d.log_prob(&Action::Discrete(5)).is_err());
        assert!(d.log_prob(&Action::Continuous(vec![0.0])).is_err());
    }
}
