//! Finite MDPs with exact, solver-based analysis.
//!
//! Everything here is small enough for direct linear algebra: discounted
//! visitation distributions, value/action-value/advantage tables, and the
//! performance-difference identity relating two policies through the
//! visitation of one and the advantages of the other. These exact numbers
//! anchor the probabilistic identities tested elsewhere.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Rng;

/// A finite MDP: transition tensor P[s][a][s'], reward table r[s][a],
/// discount, and an initial state distribution.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let num_states = transition.len();
        if num_states == 0 {
            return Err(Error::InvalidConfig("mdp needs at least one state".into()));
        }
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(Error::InvalidConfig("mdp needs at least one action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} must lie in [0, 1)")));
        }
        if reward.len() != num_states || initial.len() != num_states {
            return Err(Error::ShapeMismatch("reward table or initial distribution size".into()));
        }
        for (s, rows) in transition.iter().enumerate() {
            if rows.len() != num_actions || reward[s].len() != num_actions {
                return Err(Error::ShapeMismatch(format!("state {s} action count")));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::ShapeMismatch(format!("P[{s}][{a}] length")));
                }
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvalidDistribution(format!("P[{s}][{a}] has bad entries")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidDistribution(format!(
                        "P[{s}][{a}] sums to {sum}, not 1"
                    )));
                }
            }
            if reward[s].iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidConfig(format!("reward[{s}] has non-finite entries")));
            }
        }
        let init_sum: f64 = initial.iter().sum();
        if initial.iter().any(|p| !p.is_finite() || *p < 0.0) || (init_sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution("initial distribution is not a simplex".into()));
        }
        Ok(TabularMdp { num_states, num_actions, transition, reward, gamma, initial })
    }

    /// Random dense MDP from a fixed seed: rows drawn uniform-positive then
    /// normalized, rewards uniform in [0, 1], start state fixed at 0.
    pub fn random(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let mut transition = Vec::with_capacity(num_states);
        let mut reward = Vec::with_capacity(num_states);
        for _ in 0..num_states {
            let mut rows = Vec::with_capacity(num_actions);
            let mut rews = Vec::with_capacity(num_actions);
            for _ in 0..num_actions {
                let raw: Vec<f64> = (0..num_states).map(|_| rng.uniform_in(0.05, 1.0)).collect();
                let sum: f64 = raw.iter().sum();
                rows.push(raw.iter().map(|x| x / sum).collect());
                rews.push(rng.uniform());
            }
            transition.push(rows);
            reward.push(rews);
        }
        let mut initial = vec![0.0; num_states];
        initial[0] = 1.0;
        TabularMdp::new(transition, reward, gamma, initial).expect("generated tables are valid")
    }
}

/// A stochastic tabular policy pi[s][a].
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty policy table".into()));
        }
        for (s, row) in probs.iter().enumerate() {
            if row.is_empty() || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidDistribution(format!("policy row {s} invalid")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(TabularPolicy { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        TabularPolicy { probs: vec![vec![1.0 / num_actions as f64; num_actions]; num_states] }
    }

    /// Random full-support policy (for oracle sweeps).
    pub fn random(num_states: usize, num_actions: usize, rng: &mut Rng) -> Self {
        let probs = (0..num_states)
            .map(|_| {
                let raw: Vec<f64> = (0..num_actions).map(|_| rng.uniform_in(0.05, 1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.iter().map(|x| x / sum).collect()
            })
            .collect();
        TabularPolicy { probs }
    }

    /// Deterministic policy picking the argmax of the given per-state rows.
    pub fn greedy_from(scores: &[Vec<f64>]) -> Self {
        let probs = scores
            .iter()
            .map(|row| {
                let mut best = 0;
                for (a, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = a;
                    }
                }
                let mut p = vec![0.0; row.len()];
                p[best] = 1.0;
                p
            })
            .collect();
        TabularPolicy { probs }
    }
}

fn check_shapes(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<()> {
    if policy.probs.len() != mdp.num_states
        || policy.probs.iter().any(|row| row.len() != mdp.num_actions)
    {
        return Err(Error::ShapeMismatch(format!(
            "policy table {}x{} vs mdp {}x{}",
            policy.probs.len(),
            policy.probs.first().map_or(0, Vec::len),
            mdp.num_states,
            mdp.num_actions
        )));
    }
    Ok(())
}

/// State-to-state kernel under the policy: M[s][s'] = sum_a pi(a|s) P(s'|s,a).
fn policy_kernel(mdp: &TabularMdp, policy: &TabularPolicy) -> Vec<Vec<f64>> {
    let n = mdp.num_states;
    let mut m = vec![vec![0.0; n]; n];
    for s in 0..n {
        for a in 0..mdp.num_actions {
            let pa = policy.probs[s][a];
            if pa == 0.0 {
                continue;
            }
            for s2 in 0..n {
                m[s][s2] += pa * mdp.transition[s][a][s2];
            }
        }
    }
    m
}

/// Normalized discounted visitation rho(s) = (1-gamma) sum_t gamma^t
/// P(s_t = s), obtained by solving (I - gamma M^T) rho = (1-gamma) rho_0.
pub fn exact_visitation(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    check_shapes(mdp, policy)?;
    let n = mdp.num_states;
    let kernel = policy_kernel(mdp, policy);
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - mdp.gamma * kernel[j][i];
        }
    }
    let b: Vec<f64> = mdp.initial.iter().map(|p| (1.0 - mdp.gamma) * p).collect();
    linalg::solve(a, b)
}

/// Exact Q, V, and advantage tables from the Bellman linear system.
pub fn exact_q_v_advantage(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    check_shapes(mdp, policy)?;
    let n = mdp.num_states;
    let kernel = policy_kernel(mdp, policy);
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - mdp.gamma * kernel[i][j];
        }
    }
    let b: Vec<f64> = (0..n)
        .map(|s| {
            (0..mdp.num_actions).map(|act| policy.probs[s][act] * mdp.reward[s][act]).sum()
        })
        .collect();
    let v = linalg::solve(a, b)?;

    let mut q = vec![vec![0.0; mdp.num_actions]; n];
    let mut adv = vec![vec![0.0; mdp.num_actions]; n];
    for s in 0..n {
        for act in 0..mdp.num_actions {
            let future: f64 = (0..n).map(|s2| mdp.transition[s][act][s2] * v[s2]).sum();
            q[s][act] = mdp.reward[s][act] + mdp.gamma * future;
            adv[s][act] = q[s][act] - v[s];
        }
    }
    Ok((q, v, adv))
}

/// Expected discounted return from the start distribution.
pub fn exact_return(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64> {
    let (_, v, _) = exact_q_v_advantage(mdp, policy)?;
    Ok(mdp.initial.iter().zip(&v).map(|(p, val)| p * val).sum())
}

/// Both sides of the performance-difference identity: the return gap
/// eta(pi_new) - eta(pi_old), and the visitation-weighted advantage
/// (1/(1-gamma)) sum_s rho_new(s) sum_a pi_new(a|s) A_old(s,a).
pub fn performance_difference_check(
    mdp: &TabularMdp,
    pi_old: &TabularPolicy,
    pi_new: &TabularPolicy,
) -> Result<(f64, f64)> {
    let lhs = exact_return(mdp, pi_new)? - exact_return(mdp, pi_old)?;
    let rho_new = exact_visitation(mdp, pi_new)?;
    let (_, _, adv_old) = exact_q_v_advantage(mdp, pi_old)?;
    let mut weighted = 0.0;
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            weighted += rho_new[s] * pi_new.probs[s][a] * adv_old[s][a];
        }
    }
    Ok((lhs, weighted / (1.0 - mdp.gamma)))
}
