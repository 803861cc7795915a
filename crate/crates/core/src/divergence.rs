//! Distribution distances and the ratio-based trust-region diagnostics.
//!
//! Total variation and KL divergence for categorical distributions, the
//! diagonal-Gaussian KL closed form, the batch ratio-deviation metric
//! mean|r - 1|, and a constructive demonstration that a pointwise ratio
//! bound at the sampled action leaves the KL divergence unbounded once
//! there are at least three actions.
//!
//! An absolute-continuity violation (mass in p where q has none) makes the
//! KL infinite; that is reported as `Ok(f64::INFINITY)` so sweeps can log
//! it, not as an error. Errors are reserved for malformed inputs.

use crate::error::{Error, Result};

/// TV, KL, and the Pinsker gap for one distribution pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub tv: f64,
    pub kl: f64,
    /// sqrt(kl/2) - tv; nonnegative up to rounding by Pinsker's inequality.
    pub pinsker_slack: f64,
}

impl DivergenceReport {
    pub fn categorical(p: &[f64], q: &[f64]) -> Result<Self> {
        let tv = tv_categorical(p, q)?;
        let kl = kl_categorical(p, q)?;
        Ok(DivergenceReport { tv, kl, pinsker_slack: (kl / 2.0).sqrt() - tv })
    }
}

fn validate_simplex_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::InvalidDistribution(format!(
            "distribution lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for (label, v) in [("p", p), ("q", q)] {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "{label} has a negative or non-finite entry"
            )));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("{label} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

/// Total variation distance (1/2) sum |p_i - q_i|, in [0, 1].
pub fn tv_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    validate_simplex_pair(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// KL divergence sum p_i ln(p_i/q_i) with 0 ln(0/q) taken as 0. Mass in p
/// where q has none yields `Ok(f64::INFINITY)`.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    validate_simplex_pair(p, q)?;
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += pi * (pi / qi).ln();
    }
    // Rounding can push a mathematically nonnegative sum a hair below zero.
    Ok(kl.max(0.0))
}

/// KL between diagonal Gaussians with the given means and log standard
/// deviations, summed over dimensions.
pub fn kl_gaussian_diag(
    mean1: &[f64],
    log_std1: &[f64],
    mean2: &[f64],
    log_std2: &[f64],
) -> Result<f64> {
    let d = mean1.len();
    if d == 0 || log_std1.len() != d || mean2.len() != d || log_std2.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "gaussian kl dims {}/{}/{}/{}",
            mean1.len(),
            log_std1.len(),
            mean2.len(),
            log_std2.len()
        )));
    }
    let mut kl = 0.0;
    for i in 0..d {
        let var1 = (2.0 * log_std1[i]).exp();
        let var2 = (2.0 * log_std2[i]).exp();
        let dm = mean1[i] - mean2[i];
        kl += log_std2[i] - log_std1[i] + (var1 + dm * dm) / (2.0 * var2) - 0.5;
    }
    Ok(kl.max(0.0))
}

/// Batch trust-region metric: mean |r - 1| over positive ratios.
pub fn ratio_deviation(ratios: &[f64]) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = 0.0;
    for &r in ratios {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidDistribution(format!("ratio {r} is not a positive real")));
        }
        sum += (r - 1.0).abs();
    }
    Ok(sum / ratios.len() as f64)
}

/// State-averaged TV distance sum_s w_s TV(p_s, q_s) for visitation
/// weights w.
pub fn expected_tv(weights: &[f64], p_rows: &[Vec<f64>], q_rows: &[Vec<f64>]) -> Result<f64> {
    validate_weighted_rows(weights, p_rows, q_rows)?;
    let mut total = 0.0;
    for s in 0..weights.len() {
        total += weights[s] * tv_categorical(&p_rows[s], &q_rows[s])?;
    }
    Ok(total)
}

/// State- and action-averaged ratio deviation
/// sum_s w_s sum_a p_s(a) |q_s(a)/p_s(a) - 1|, the sampled-expectation form
/// of mean|r - 1|. Actions with p_s(a) = 0 contribute nothing (they are
/// never sampled); for the identity `expected_tv = expected_ratio_deviation
/// / 2` to hold, q must not put mass where p has none.
pub fn expected_ratio_deviation(
    weights: &[f64],
    p_rows: &[Vec<f64>],
    q_rows: &[Vec<f64>],
) -> Result<f64> {
    validate_weighted_rows(weights, p_rows, q_rows)?;
    let mut total = 0.0;
    for s in 0..weights.len() {
        validate_simplex_pair(&p_rows[s], &q_rows[s])?;
        let mut inner = 0.0;
        for (&pa, &qa) in p_rows[s].iter().zip(&q_rows[s]) {
            if pa > 0.0 {
                inner += pa * (qa / pa - 1.0).abs();
            }
        }
        total += weights[s] * inner;
    }
    Ok(total)
}

fn validate_weighted_rows(weights: &[f64], p_rows: &[Vec<f64>], q_rows: &[Vec<f64>]) -> Result<()> {
    if weights.is_empty() || weights.len() != p_rows.len() || weights.len() != q_rows.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights vs {} and {} rows",
            weights.len(),
            p_rows.len(),
            q_rows.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidDistribution("weights must be finite and nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Builds a categorical pair (p, q) over `num_actions >= 3` actions such
/// that q matches p exactly on action 0 (the ratio there is 1, so any
/// pointwise ratio band `eps` is satisfied at the sampled action) while
/// KL(p || q) >= target_kl. Starving one of the remaining actions of mass
/// drives the KL as high as requested.
pub fn kl_escape_demo(num_actions: usize, eps: f64, target_kl: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if num_actions < 3 {
        return Err(Error::InvalidConfig(format!(
            "kl escape needs at least 3 actions, got {num_actions}"
        )));
    }
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::InvalidConfig(format!("eps {eps} must be a nonnegative real")));
    }
    if target_kl < 0.0 || !target_kl.is_finite() {
        return Err(Error::InvalidConfig(format!("target kl {target_kl} must be finite and >= 0")));
    }
    let k = num_actions;
    let p = vec![1.0 / k as f64; k];
    if target_kl == 0.0 {
        return Ok((p.clone(), p));
    }

    let build = |m: f64| -> Vec<f64> {
        // q keeps p's mass on action 0 bit for bit, gives m to action 1,
        // and spreads the rest evenly.
        let mut q = vec![(1.0 - p[0] - m) / (k - 2) as f64; k];
        q[0] = p[0];
        q[1] = m;
        q
    };
    let kl_at = |m: f64| kl_categorical(&p, &build(m)).expect("constructed simplex");

    // kl is strictly decreasing in m, hitting 0 at the uniform split.
    let uniform_m = (1.0 - p[0]) / (k - 1) as f64;
    let mut lo = uniform_m;
    while kl_at(lo) < target_kl {
        lo /= 2.0;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::InvalidConfig(format!(
                "target kl {target_kl} unreachable before mass underflows"
            )));
        }
    }
    let mut hi = uniform_m;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kl_at(mid) >= target_kl {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = build(lo);
    Ok((p, q))
}
