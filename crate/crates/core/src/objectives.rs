//! Per-sample surrogate objectives and the composite training losses.
//!
//! Three objectives over the probability ratio r = pi_new/pi_old:
//!
//! * `f_spo`:  r*A - (|A|/2eps)*(r-1)^2, a quadratic whose unique maximum
//!   sits at r = 1 + sign(A)*eps.
//! * `f_ppo`:  min(r*A, clip(r, 1-eps, 1+eps)*A), the PPO-Clip surrogate.
//! * `f_simple`: -(r - 1 - sign(A)*eps)^2, a pure distance-to-target
//!   parabola whose maximum sits at the same point as `f_spo` but whose
//!   gradient magnitude is independent of |A|.
//!
//! sign(0) is taken as 0 throughout, so a zero advantage makes `f_spo` and
//! `f_simple` flat or centered at r = 1 respectively.
//!
//! Batch losses follow the usual actor-critic recipe: the policy loss is
//! the negated batch mean of the chosen objective, the value loss is a half
//! mean squared error, and the total is L_p + c1*L_v - c2*L_e.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which per-sample objective drives the policy update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    PpoClip,
    Spo,
    SimpleAligned,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 3] =
        [ObjectiveKind::PpoClip, ObjectiveKind::Spo, ObjectiveKind::SimpleAligned];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::PpoClip => "ppo_clip",
            ObjectiveKind::Spo => "spo",
            ObjectiveKind::SimpleAligned => "simple_aligned",
        }
    }

    /// Range check for the clip/penalty radius: positive for all kinds, and
    /// below 1 for PPO-Clip so the band (1-eps, 1+eps) stays meaningful.
    pub fn validate_eps(self, eps: f64) -> Result<()> {
        let ok = match self {
            ObjectiveKind::PpoClip => eps > 0.0 && eps < 1.0,
            ObjectiveKind::Spo | ObjectiveKind::SimpleAligned => eps > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("eps {eps} out of range for {}", self.name())))
        }
    }

    /// Objective value with eps validated.
    pub fn value(self, r: f64, advantage: f64, eps: f64) -> Result<f64> {
        self.validate_eps(eps)?;
        Ok(value_raw(self, r, advantage, eps))
    }

    /// Gradient with respect to the ratio, with eps validated.
    pub fn grad(self, r: f64, advantage: f64, eps: f64) -> Result<f64> {
        self.validate_eps(eps)?;
        Ok(grad_raw(self, r, advantage, eps))
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo_clip" | "ppo" => Ok(ObjectiveKind::PpoClip),
            "spo" => Ok(ObjectiveKind::Spo),
            "simple_aligned" | "simple" => Ok(ObjectiveKind::SimpleAligned),
            other => Err(Error::InvalidConfig(format!(
                "unknown objective {other:?}; expected ppo_clip, spo, or simple_aligned"
            ))),
        }
    }
}

impl std::fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn sign0(a: f64) -> f64 {
    if a == 0.0 { 0.0 } else { a.signum() }
}

pub(crate) fn value_raw(kind: ObjectiveKind, r: f64, advantage: f64, eps: f64) -> f64 {
    match kind {
        ObjectiveKind::PpoClip => f_ppo(r, advantage, eps),
        ObjectiveKind::Spo => spo_raw(r, advantage, eps),
        ObjectiveKind::SimpleAligned => f_simple(r, advantage, eps),
    }
}

pub(crate) fn grad_raw(kind: ObjectiveKind, r: f64, advantage: f64, eps: f64) -> f64 {
    match kind {
        ObjectiveKind::PpoClip => f_ppo_grad(r, advantage, eps),
        ObjectiveKind::Spo => spo_grad_raw(r, advantage, eps),
        ObjectiveKind::SimpleAligned => f_simple_grad(r, advantage, eps),
    }
}

#[inline]
fn spo_raw(r: f64, advantage: f64, eps: f64) -> f64 {
    let d = r - 1.0;
    r * advantage - advantage.abs() / (2.0 * eps) * d * d
}

#[inline]
fn spo_grad_raw(r: f64, advantage: f64, eps: f64) -> f64 {
    advantage - advantage.abs() / eps * (r - 1.0)
}

/// r*A - (|A|/2eps)*(r-1)^2. Unique maximum at r = 1 + sign(A)*eps.
pub fn f_spo(r: f64, advantage: f64, eps: f64) -> Result<f64> {
    ObjectiveKind::Spo.validate_eps(eps)?;
    Ok(spo_raw(r, advantage, eps))
}

/// d f_spo / d r = A - (|A|/eps)*(r-1); zero exactly at r = 1 + sign(A)*eps.
pub fn f_spo_grad(r: f64, advantage: f64, eps: f64) -> Result<f64> {
    ObjectiveKind::Spo.validate_eps(eps)?;
    Ok(spo_grad_raw(r, advantage, eps))
}

/// min(r*A, clip(r, 1-eps, 1+eps)*A).
pub fn f_ppo(r: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = r.clamp(1.0 - eps, 1.0 + eps);
    (r * advantage).min(clipped * advantage)
}

/// Piecewise-constant gradient of `f_ppo`: A while the ratio has not left
/// the clip band against the advantage direction, 0 beyond it. At the kinks
/// the interior branch wins (the inequalities are inclusive).
pub fn f_ppo_grad(r: f64, advantage: f64, eps: f64) -> f64 {
    let active = (advantage > 0.0 && r <= 1.0 + eps) || (advantage < 0.0 && r >= 1.0 - eps);
    if active { advantage } else { 0.0 }
}

/// -(r - 1 - sign(A)*eps)^2: distance to the same target `f_spo` aims at,
/// with curvature independent of |A|.
pub fn f_simple(r: f64, advantage: f64, eps: f64) -> f64 {
    let d = r - 1.0 - sign0(advantage) * eps;
    -d * d
}

/// d f_simple / d r = -2*(r - 1 - sign(A)*eps).
pub fn f_simple_grad(r: f64, advantage: f64, eps: f64) -> f64 {
    -2.0 * (r - 1.0 - sign0(advantage) * eps)
}

/// Argmax of `f` over the closed grid {lo, lo+step, ..., hi}. Ties go to
/// the larger r, so a flat plateau reports its upper edge; an objective
/// that keeps growing reports `hi` itself.
pub fn grid_argmax(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best_r = lo;
    let mut best_v = f(lo);
    for i in 1..=n {
        let r = lo + step * i as f64;
        let v = f(r);
        if v >= best_v {
            best_v = v;
            best_r = r;
        }
    }
    best_r
}

// ── batch losses ─────────────────────────────────────────────────────────

/// Negated batch mean of the chosen objective.
pub fn policy_loss(kind: ObjectiveKind, ratios: &[f64], advantages: &[f64], eps: f64) -> Result<f64> {
    kind.validate_eps(eps)?;
    if ratios.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if ratios.len() != advantages.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ratios vs {} advantages",
            ratios.len(),
            advantages.len()
        )));
    }
    let sum: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| value_raw(kind, r, a, eps))
        .sum();
    Ok(-sum / ratios.len() as f64)
}

/// Half mean squared error between predicted values and regression targets.
pub fn value_loss(values: &[f64], returns: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if values.len() != returns.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} values vs {} returns",
            values.len(),
            returns.len()
        )));
    }
    let sum: f64 = values
        .iter()
        .zip(returns)
        .map(|(&v, &t)| {
            let d = v - t;
            d * d
        })
        .sum();
    Ok(sum / (2.0 * values.len() as f64))
}

/// L = L_p + c1*L_v - c2*L_e.
pub fn total_loss(policy_loss: f64, value_loss: f64, entropy: f64, c1: f64, c2: f64) -> f64 {
    policy_loss + c1 * value_loss - c2 * entropy
}

/// Per-minibatch loss terms and ratio diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    /// mean |r - 1| over the minibatch.
    pub mean_ratio_deviation: f64,
    /// Fraction of samples with |r - 1| > eps.
    pub clip_fraction: f64,
}

impl LossBreakdown {
    /// Builds the breakdown; `total` is derived from the stored fields so
    /// `total == policy_loss + c1*value_loss - c2*entropy` holds exactly.
    pub fn new(
        policy_loss: f64,
        value_loss: f64,
        entropy: f64,
        c1: f64,
        c2: f64,
        mean_ratio_deviation: f64,
        clip_fraction: f64,
    ) -> Self {
        LossBreakdown {
            policy_loss,
            value_loss,
            entropy,
            total: total_loss(policy_loss, value_loss, entropy, c1, c2),
            mean_ratio_deviation,
            clip_fraction,
        }
    }
}

/// Fraction of ratios with |r - 1| > eps; 0 for an empty slice.
pub fn clip_fraction(ratios: &[f64], eps: f64) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    let n = ratios.iter().filter(|r| (*r - 1.0).abs() > eps).count();
    n as f64 / ratios.len() as f64
}

/// Shift to zero mean and scale to unit standard deviation, with the std
/// floored at 1e-8 so constant batches map to zeros instead of NaN.
pub fn normalize_advantages(advantages: &[f64]) -> Vec<f64> {
    if advantages.is_empty() {
        return Vec::new();
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    advantages.iter().map(|a| (a - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn spo_frozen_values() {
        assert_eq!(f_spo(1.0, 2.0, 0.2).unwrap(), 2.0);
        assert!((f_spo(1.2, 1.0, 0.2).unwrap() - 1.1).abs() < 1e-15);
        assert_eq!(f_spo_grad(1.0, 3.0, 0.2).unwrap(), 3.0);
        assert!(f_spo_grad(1.2, 1.0, 0.2).unwrap().abs() < 1e-15);
        assert!(f_spo(1.0, 2.0, 0.0).is_err());
        assert!(f_spo_grad(1.0, 2.0, -0.1).is_err());
    }

    #[test]
    fn ppo_frozen_values() {
        assert!((f_ppo(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        // Below the band with A < 0 the clipped branch is the smaller one:
        // min(0.5*(-1), 0.8*(-1)) = -0.8.
        assert!((f_ppo(0.5, -1.0, 0.2) - (-0.8)).abs() < 1e-15);
        assert_eq!(f_ppo_grad(1.3, 1.0, 0.2), 0.0);
        assert_eq!(f_ppo_grad(1.1, 1.0, 0.2), 1.0);
        // Kinks take the interior branch.
        assert_eq!(f_ppo_grad(1.2, 1.0, 0.2), 1.0);
        assert_eq!(f_ppo_grad(0.8, -1.0, 0.2), -1.0);
        assert_eq!(f_ppo_grad(1.0, 0.0, 0.2), 0.0);
    }

    #[test]
    fn simple_frozen_values() {
        assert!(f_simple(1.2, 3.0, 0.2).abs() < 1e-30);
        assert!((f_simple(1.0, 2.0, 0.2) - (-0.04)).abs() < 1e-15);
        assert_eq!(f_simple(1.0, 0.0, 0.2), 0.0);
        assert!((f_simple_grad(1.3, 0.0, 0.2) - (-0.6)).abs() < 1e-15);
    }

    #[test]
    fn ppo_value_matches_case_table() {
        // Branch-free reimplementation straight from the three-case form.
        fn case_table(r: f64, a: f64, eps: f64) -> f64 {
            if a > 0.0 {
                if r <= 1.0 + eps { r * a } else { (1.0 + eps) * a }
            } else if a < 0.0 {
                if r >= 1.0 - eps { r * a } else { (1.0 - eps) * a }
            } else {
                0.0
            }
        }
        let mut rng = Rng::new(7);
        for _ in 0..10_000 {
            let r = rng.uniform_in(0.0, 3.0);
            let a = rng.uniform_in(-3.0, 3.0);
            let eps = rng.uniform_in(0.05, 0.95);
            assert_eq!(f_ppo(r, a, eps), case_table(r, a, eps), "r={r} a={a} eps={eps}");
        }
    }

    #[test]
    fn spo_grad_matches_finite_differences() {
        let mut rng = Rng::new(11);
        for _ in 0..1000 {
            let r = rng.uniform_in(0.0, 2.5);
            let a = rng.uniform_in(-3.0, 3.0);
            let eps = rng.uniform_in(0.05, 0.95);
            let h = 1e-5;
            let fd = (spo_raw(r + h, a, eps) - spo_raw(r - h, a, eps)) / (2.0 * h);
            let g = f_spo_grad(r, a, eps).unwrap();
            assert!((g - fd).abs() < 1e-7, "r={r} a={a} eps={eps}: {g} vs {fd}");
        }
    }

    #[test]
    fn ppo_grad_matches_finite_differences_away_from_kinks() {
        let mut rng = Rng::new(13);
        let mut checked = 0;
        while checked < 1000 {
            let r = rng.uniform_in(0.0, 2.5);
            let a = rng.uniform_in(-3.0, 3.0);
            let eps = rng.uniform_in(0.05, 0.95);
            if (r - (1.0 + eps)).abs() < 1e-3 || (r - (1.0 - eps)).abs() < 1e-3 {
                continue;
            }
            let h = 1e-5;
            let fd = (f_ppo(r + h, a, eps) - f_ppo(r - h, a, eps)) / (2.0 * h);
            assert!((f_ppo_grad(r, a, eps) - fd).abs() < 1e-7, "r={r} a={a} eps={eps}");
            checked += 1;
        }
    }

    #[test]
    fn simple_grad_matches_finite_differences() {
        let mut rng = Rng::new(17);
        for _ in 0..1000 {
            let r = rng.uniform_in(0.0, 2.5);
            let a = rng.uniform_in(-3.0, 3.0);
            let eps = rng.uniform_in(0.05, 0.95);
            let h = 1e-5;
            let fd = (f_simple(r + h, a, eps) - f_simple(r - h, a, eps)) / (2.0 * h);
            assert!((f_simple_grad(r, a, eps) - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn spo_and_simple_maxima_sit_at_the_shifted_ratio() {
        let mut rng = Rng::new(19);
        for _ in 0..1000 {
            let a = loop {
                let a = rng.uniform_in(-3.0, 3.0);
                if a.abs() > 1e-3 {
                    break a;
                }
            };
            let eps = rng.uniform_in(0.01, 0.99);
            let target = 1.0 + sign0(a) * eps;
            let spo_max = grid_argmax(0.0, 3.0, 5e-5, |r| spo_raw(r, a, eps));
            assert!((spo_max - target).abs() < 1e-4, "a={a} eps={eps}: {spo_max}");
            let simple_max = grid_argmax(0.0, 3.0, 5e-5, |r| f_simple(r, a, eps));
            assert!((simple_max - target).abs() < 1e-4, "a={a} eps={eps}: {simple_max}");
        }
    }

    #[test]
    fn ppo_maximum_runs_off_the_grid_for_positive_advantages() {
        let mut rng = Rng::new(23);
        for _ in 0..200 {
            let a = rng.uniform_in(0.1, 3.0);
            let eps = rng.uniform_in(0.01, 0.99);
            let argmax = grid_argmax(0.0, 3.0, 5e-5, |r| f_ppo(r, a, eps));
            assert!(argmax > 2.9999, "a={a} eps={eps}: argmax {argmax}");
        }
    }

    #[test]
    fn spo_and_simple_are_concave_in_r() {
        let mut rng = Rng::new(29);
        for _ in 0..200 {
            let a = rng.uniform_in(-3.0, 3.0);
            let eps = rng.uniform_in(0.05, 0.95);
            let h = 1e-3;
            for i in 0..100 {
                let r = 0.05 + 0.025 * i as f64;
                let second_spo =
                    spo_raw(r + h, a, eps) - 2.0 * spo_raw(r, a, eps) + spo_raw(r - h, a, eps);
                assert!(second_spo <= 1e-9);
                let second_simple =
                    f_simple(r + h, a, eps) - 2.0 * f_simple(r, a, eps) + f_simple(r - h, a, eps);
                assert!(second_simple <= 1e-9);
            }
        }
    }

    #[test]
    fn spo_scales_linearly_in_positive_advantage_scale() {
        let mut rng = Rng::new(31);
        for _ in 0..1000 {
            let r = rng.uniform_in(0.0, 2.5);
            let a = rng.uniform_in(-3.0, 3.0);
            let eps = rng.uniform_in(0.05, 0.95);
            let k = rng.uniform_in(0.1, 10.0);
            let lhs = spo_raw(r, k * a, eps);
            let rhs = k * spo_raw(r, a, eps);
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() / scale < 1e-12);
        }
    }

    #[test]
    fn policy_loss_matches_per_sample_oracle() {
        let mut rng = Rng::new(37);
        let ratios: Vec<f64> = (0..32).map(|_| rng.uniform_in(0.2, 2.0)).collect();
        let advantages: Vec<f64> = (0..32).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        for kind in ObjectiveKind::ALL {
            let got = policy_loss(kind, &ratios, &advantages, 0.2).unwrap();
            let mut sum = 0.0;
            for i in 0..32 {
                sum += kind.value(ratios[i], advantages[i], 0.2).unwrap();
            }
            let expected = -sum / 32.0;
            assert!((got - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn policy_loss_special_cases_and_errors() {
        let ones = vec![1.0; 8];
        let advantages = vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.25, 0.75, -2.0];
        let mean_a = advantages.iter().sum::<f64>() / 8.0;
        let got = policy_loss(ObjectiveKind::Spo, &ones, &advantages, 0.2).unwrap();
        assert!((got - (-mean_a)).abs() < 1e-15);

        // Zero advantages kill the objectives that scale with A. The
        // distance parabola does not: at A = 0 it still pulls toward r = 1.
        let ratios = vec![0.7, 1.0, 1.4];
        let zeros = vec![0.0; 3];
        assert_eq!(policy_loss(ObjectiveKind::Spo, &ratios, &zeros, 0.2).unwrap(), 0.0);
        assert_eq!(policy_loss(ObjectiveKind::PpoClip, &ratios, &zeros, 0.2).unwrap(), 0.0);
        let simple = policy_loss(ObjectiveKind::SimpleAligned, &ratios, &zeros, 0.2).unwrap();
        let expected: f64 = ratios.iter().map(|r| (r - 1.0) * (r - 1.0)).sum::<f64>() / 3.0;
        assert!((simple - expected).abs() < 1e-15);

        assert!(matches!(
            policy_loss(ObjectiveKind::Spo, &[], &[], 0.2),
            Err(Error::EmptyBatch)
        ));
        assert!(policy_loss(ObjectiveKind::Spo, &[1.0], &[1.0, 2.0], 0.2).is_err());
        assert!(policy_loss(ObjectiveKind::PpoClip, &[1.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn value_loss_matches_half_mse() {
        let v = vec![1.0, -2.0, 0.5];
        assert_eq!(value_loss(&v, &v).unwrap(), 0.0);
        assert_eq!(value_loss(&[0.0], &[2.0]).unwrap(), 2.0);

        let mut rng = Rng::new(41);
        let values: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let returns: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let got = value_loss(&values, &returns).unwrap();
        let mut acc = 0.0;
        for i in 0..100 {
            acc += (values[i] - returns[i]).powi(2);
        }
        assert!((got - acc / 200.0).abs() < 1e-12);
        assert!(matches!(value_loss(&[], &[]), Err(Error::EmptyBatch)));
        assert!(value_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn total_loss_is_the_exact_linear_combination() {
        assert!((total_loss(1.0, 2.0, 3.0, 0.5, 0.01) - 1.97).abs() < 1e-15);
        assert_eq!(total_loss(0.7, 9.0, -4.0, 0.0, 0.0), 0.7);
        let b = LossBreakdown::new(0.3, 1.1, 0.9, 0.5, 0.01, 0.05, 0.0);
        assert_eq!(b.total, b.policy_loss + 0.5 * b.value_loss - 0.01 * b.entropy);
    }

    #[test]
    fn clip_fraction_counts_band_escapes() {
        let ratios = [1.0, 1.3, 0.75, 1.19];
        assert_eq!(clip_fraction(&ratios, 0.2), 0.5);
        assert_eq!(clip_fraction(&ratios, 0.01), 0.75);
        assert_eq!(clip_fraction(&[], 0.2), 0.0);
    }

    #[test]
    fn normalized_advantages_have_zero_mean_unit_std() {
        let mut rng = Rng::new(43);
        let adv: Vec<f64> = (0..256).map(|_| rng.uniform_in(-5.0, 3.0)).collect();
        let norm = normalize_advantages(&adv);
        let mean = norm.iter().sum::<f64>() / 256.0;
        let var = norm.iter().map(|a| a * a).sum::<f64>() / 256.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);

        let flat = normalize_advantages(&[2.5; 10]);
        assert!(flat.iter().all(|a| *a == 0.0));
        assert!(normalize_advantages(&[]).is_empty());
    }
}
