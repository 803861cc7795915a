//! Self-check suites: every analytic claim the library leans on, checked
//! against an independent oracle with a fixed seed and a hard tolerance.
//!
//! Each suite answers one question (is the maximizer where it should be, do
//! the gradients match finite differences, does the exact-enumeration
//! identity hold) and reports how many cases it ran and the worst error it
//! saw. The `verify` CLI subcommand prints these as a table; the suites are
//! deterministic, so two invocations produce identical reports.

use crate::divergence;
use crate::envs::tabular::{
    exact_visitation, performance_difference_check, TabularMdp, TabularPolicy,
};
use crate::error::{Error, Result};
use crate::gae::{compute_gae, RolloutBatch, RolloutStep};
use crate::grad::Mlp;
use crate::objectives::{self, grid_argmax, ObjectiveKind};
use crate::policy::PolicyDistribution;
use crate::rng::Rng;
use crate::types::Action;

/// Outcome of one property suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    /// Individual checks the suite ran.
    pub cases: usize,
    /// Worst error observed, comparable against `tolerance`.
    pub max_error: f64,
    /// The bound `max_error` must stay under.
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteReport {
    fn from_error(name: &'static str, cases: usize, max_error: f64, tolerance: f64) -> SuiteReport {
        SuiteReport { name, cases, max_error, tolerance, passed: max_error <= tolerance }
    }
}

/// Names of every suite, in the order [`run_all`] executes them.
pub const SUITE_NAMES: &[&str] = &[
    "epsilon_aligned",
    "ppo_gradient_cases",
    "tv_ratio_identity",
    "pinsker_inclusion",
    "kl_escape",
    "performance_difference",
    "gae_oracle",
    "mlp_gradients",
    "policy_gradients",
];

/// Run one suite by name.
pub fn run_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "epsilon_aligned" => Ok(epsilon_aligned()),
        "ppo_gradient_cases" => Ok(ppo_gradient_cases()),
        "tv_ratio_identity" => Ok(tv_ratio_identity()),
        "pinsker_inclusion" => Ok(pinsker_inclusion()),
        "kl_escape" => Ok(kl_escape()),
        "performance_difference" => Ok(performance_difference()),
        "gae_oracle" => Ok(gae_oracle()),
        "mlp_gradients" => Ok(mlp_gradients()),
        "policy_gradients" => Ok(policy_gradients()),
        other => Err(Error::InvalidConfig(format!(
            "unknown verification suite '{other}'; known: {}",
            SUITE_NAMES.join(", ")
        ))),
    }
}

/// Run every suite in [`SUITE_NAMES`] order.
pub fn run_all() -> Vec<SuiteReport> {
    SUITE_NAMES
        .iter()
        .map(|name| run_suite(name).expect("listed suites are runnable"))
        .collect()
}

/// The ratio-space maximizer of the boundedness objectives sits exactly at
/// 1 + sign(A)·eps; the clipped objective demonstrably does not share the
/// property (for positive advantage its grid maximum runs to the far edge).
fn epsilon_aligned() -> SuiteReport {
    let mut rng = Rng::new(0x0a11);
    let step = 5e-5;
    let mut max_err = 0.0f64;
    let mut cases = 0;
    let mut clipped_failure_witnessed = true;
    for _ in 0..1000 {
        let magnitude = rng.uniform_in(0.1, 3.0);
        let advantage = if rng.uniform() < 0.5 { magnitude } else { -magnitude };
        let eps = rng.uniform_in(0.05, 0.5);
        let target = 1.0 + advantage.signum() * eps;

        let spo_argmax = grid_argmax(0.0, 3.0, step, |r| {
            objectives::value_raw(ObjectiveKind::Spo, r, advantage, eps)
        });
        let simple_argmax = grid_argmax(0.0, 3.0, step, |r| {
            objectives::value_raw(ObjectiveKind::SimpleAligned, r, advantage, eps)
        });
        max_err = max_err.max((spo_argmax - target).abs()).max((simple_argmax - target).abs());
        cases += 2;

        if advantage > 0.0 {
            // The clipped surrogate is flat at +eps·A beyond the band, so its
            // last grid maximum sits at the sweep's far edge, nowhere near
            // the aligned point.
            let ppo_argmax = grid_argmax(0.0, 3.0, step, |r| {
                objectives::value_raw(ObjectiveKind::PpoClip, r, advantage, eps)
            });
            clipped_failure_witnessed &= (ppo_argmax - target).abs() > 0.5;
            cases += 1;
        }
    }
    let mut report = SuiteReport::from_error("epsilon_aligned", cases, max_err, 1e-4);
    report.passed &= clipped_failure_witnessed;
    report
}

/// The clipped objective's piecewise gradient: the advantage inside the
/// active region, zero where clipping freezes the sample; checked against
/// the case table exactly and against finite differences away from kinks.
fn ppo_gradient_cases() -> SuiteReport {
    let mut rng = Rng::new(0xbeef);
    let mut max_err = 0.0f64;
    let mut cases = 0;
    let h = 1e-6;
    for _ in 0..10_000 {
        let r = rng.uniform_in(0.0, 2.5).max(1e-6);
        let mut advantage = rng.uniform_in(-3.0, 3.0);
        if advantage.abs() < 1e-3 {
            advantage = 1.0;
        }
        let eps = rng.uniform_in(0.05, 0.45);

        let expected = if advantage > 0.0 {
            if r <= 1.0 + eps { advantage } else { 0.0 }
        } else if r >= 1.0 - eps {
            advantage
        } else {
            0.0
        };
        let got = objectives::f_ppo_grad(r, advantage, eps);
        if got != expected {
            // An exact mismatch means the case table itself is broken; make
            // the report reflect a hard failure.
            return SuiteReport::from_error("ppo_gradient_cases", cases + 1, f64::INFINITY, 1e-7);
        }
        cases += 1;

        let near_kink = (r - (1.0 - eps)).abs() < 1e-4 || (r - (1.0 + eps)).abs() < 1e-4;
        if !near_kink && r > h {
            let fd = (objectives::f_ppo(r + h, advantage, eps)
                - objectives::f_ppo(r - h, advantage, eps))
                / (2.0 * h);
            max_err = max_err.max((got - fd).abs());
        }
    }
    SuiteReport::from_error("ppo_gradient_cases", cases, max_err, 1e-7)
}

/// Exact-enumeration identity on the bundled 8-state table: the
/// visitation-weighted expected TV distance equals half the expected ratio
/// deviation when actions are sampled from the old policy.
fn tv_ratio_identity() -> SuiteReport {
    let mdp = TabularMdp::random(8, 3, 0.99, 7);
    let mut max_err = 0.0f64;
    let mut cases = 0;
    for pair in 0..25u64 {
        let mut rng_p = Rng::substream(0x7b1d, pair);
        let mut rng_q = Rng::substream(0x7b1d, pair + 1000);
        let p = TabularPolicy::random(mdp.num_states, mdp.num_actions, &mut rng_p);
        let q = TabularPolicy::random(mdp.num_states, mdp.num_actions, &mut rng_q);
        let rho = exact_visitation(&mdp, &p).expect("bundled table is solvable");
        let lhs = divergence::expected_tv(&rho, &p.probs, &q.probs).expect("valid rows");
        let dev = divergence::expected_ratio_deviation(&rho, &p.probs, &q.probs).expect("valid rows");
        max_err = max_err.max((lhs - 0.5 * dev).abs());
        cases += 1;
    }
    SuiteReport::from_error("tv_ratio_identity", cases, max_err, 1e-12)
}

/// tv <= sqrt(kl/2) on random categorical pairs, and the solution-set
/// restatement: everything inside a KL ball of radius delta lies inside the
/// TV ball of radius sqrt(delta/2).
fn pinsker_inclusion() -> SuiteReport {
    let mut rng = Rng::new(0x9155);
    let mut worst_violation = 0.0f64;
    let mut cases = 0;
    let mut inclusion_holds = true;
    for _ in 0..10_000 {
        let dim = 2 + rng.index(7);
        let p = random_simplex(&mut rng, dim);
        let q = random_simplex(&mut rng, dim);
        let tv = divergence::tv_categorical(&p, &q).expect("valid simplex");
        let kl = divergence::kl_categorical(&p, &q).expect("valid simplex");
        worst_violation = worst_violation.max(tv - (kl / 2.0).sqrt());
        let delta = rng.uniform_in(1e-3, 1.0);
        if kl <= delta {
            inclusion_holds &= tv <= (delta / 2.0).sqrt() + 1e-12;
        }
        cases += 1;
    }
    let mut report = SuiteReport::from_error("pinsker_inclusion", cases, worst_violation, 1e-12);
    report.passed &= inclusion_holds;
    report
}

/// Constructive unboundedness: with at least three actions, distributions
/// exist with the sampled-action ratio pinned at exactly 1 and KL as large
/// as demanded.
fn kl_escape() -> SuiteReport {
    let mut max_shortfall = 0.0f64;
    let mut cases = 0;
    let mut structure_holds = true;
    let mut previous_min_mass = f64::INFINITY;
    for &target in &[1.0, 5.0, 10.0, 50.0] {
        match divergence::kl_escape_demo(3, 0.2, target) {
            Ok((p, q)) => {
                structure_holds &= q[0] == p[0];
                let kl = divergence::kl_categorical(&p, &q).expect("constructed pair is valid");
                max_shortfall = max_shortfall.max((target - kl).max(0.0));
                let min_mass = q.iter().cloned().fold(f64::INFINITY, f64::min);
                structure_holds &= min_mass < previous_min_mass;
                previous_min_mass = min_mass;
            }
            Err(_) => structure_holds = false,
        }
        cases += 1;
    }
    let mut report = SuiteReport::from_error("kl_escape", cases, max_shortfall, 0.0);
    report.passed &= structure_holds;
    report
}

/// The return gap between two policies equals the visitation-weighted
/// advantage of the new policy under the old one, on exactly solvable
/// random tables.
fn performance_difference() -> SuiteReport {
    let mut max_err = 0.0f64;
    let mut cases = 0;
    for i in 0..100u64 {
        let states = 3 + (i % 6) as usize;
        let actions = 2 + (i % 3) as usize;
        let gamma = 0.80 + 0.15 * ((i % 10) as f64 / 10.0);
        let mdp = TabularMdp::random(states, actions, gamma, 0xF00D + i);
        let mut rng_old = Rng::substream(0xD1CE, i);
        let mut rng_new = Rng::substream(0xD1CE, i + 5000);
        let pi_old = TabularPolicy::random(states, actions, &mut rng_old);
        let pi_new = TabularPolicy::random(states, actions, &mut rng_new);
        let (lhs, rhs) =
            performance_difference_check(&mdp, &pi_old, &pi_new).expect("random tables are valid");
        max_err = max_err.max((lhs - rhs).abs());
        cases += 1;
    }
    SuiteReport::from_error("performance_difference", cases, max_err, 1e-8)
}

/// Backward-recursion advantages against the direct double-loop sum of
/// discounted TD residuals, on random episodes with random cut points.
fn gae_oracle() -> SuiteReport {
    let mut rng = Rng::new(0x6ae0);
    let mut max_err = 0.0f64;
    let mut cases = 0;
    for _ in 0..1000 {
        let len = 1 + rng.index(40);
        let gamma = rng.uniform();
        let lambda = rng.uniform();
        let steps: Vec<RolloutStep> = (0..len)
            .map(|_| RolloutStep {
                state: Vec::new(),
                action: Action::Discrete(0),
                reward: rng.uniform_in(-2.0, 2.0),
                done: rng.uniform() < 0.15,
                value: rng.uniform_in(-2.0, 2.0),
                log_prob: 0.0,
            })
            .collect();
        let bootstrap = rng.uniform_in(-2.0, 2.0);
        let batch = RolloutBatch::new(steps, bootstrap);
        let fast = compute_gae(&batch, gamma, lambda).expect("valid episode");

        for t in 0..len {
            let mut acc = 0.0;
            let mut weight = 1.0;
            for k in t..len {
                let step = &batch.steps[k];
                let mask = if step.done { 0.0 } else { 1.0 };
                let next_value = if k + 1 < len { batch.steps[k + 1].value } else { bootstrap };
                let delta = step.reward + gamma * next_value * mask - step.value;
                acc += weight * delta;
                if step.done {
                    break;
                }
                weight *= gamma * lambda;
            }
            max_err = max_err.max((fast[t] - acc).abs());
        }
        cases += 1;
    }
    SuiteReport::from_error("gae_oracle", cases, max_err, 1e-10)
}

/// Backpropagated parameter gradients against central finite differences of
/// the scalar loss <output, g> on random small networks.
fn mlp_gradients() -> SuiteReport {
    let mut rng = Rng::new(0x3170);
    let mut max_rel_err = 0.0f64;
    let mut cases = 0;
    let h = 1e-6;
    for _ in 0..100 {
        let sizes = vec![1 + rng.index(4), 1 + rng.index(5), 1 + rng.index(3)];
        let mut net = Mlp::init(&sizes, 1.0, &mut rng).expect("valid sizes");
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.uniform_in(-1.5, 1.5)).collect();
        let out_grad: Vec<f64> = (0..sizes[2]).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let loss = |net: &Mlp, input: &[f64]| -> f64 {
            net.forward(input)
                .expect("shapes fixed")
                .iter()
                .zip(&out_grad)
                .map(|(o, g)| o * g)
                .sum()
        };
        let grads = net.backward(&input, &out_grad).expect("shapes fixed");

        for layer in 0..net.num_layers() {
            let (rows, cols) = (sizes[layer + 1], sizes[layer]);
            for _ in 0..3 {
                let row = rng.index(rows);
                let col = rng.index(cols);
                let orig = net.weights(layer)[row * cols + col];
                net.set_weight(layer, row, col, orig + h);
                let up = loss(&net, &input);
                net.set_weight(layer, row, col, orig - h);
                let down = loss(&net, &input);
                net.set_weight(layer, row, col, orig);
                let fd = (up - down) / (2.0 * h);
                let analytic = grads.weight_grads(layer)[row * cols + col];
                max_rel_err = max_rel_err.max(rel_err(analytic, fd));
                cases += 1;
            }
            let row = rng.index(rows);
            let orig = net.biases(layer)[row];
            net.set_bias(layer, row, orig + h);
            let up = loss(&net, &input);
            net.set_bias(layer, row, orig - h);
            let down = loss(&net, &input);
            net.set_bias(layer, row, orig);
            let fd = (up - down) / (2.0 * h);
            max_rel_err = max_rel_err.max(rel_err(grads.bias_grads(layer)[row], fd));
            cases += 1;
        }
    }
    SuiteReport::from_error("mlp_gradients", cases, max_rel_err, 1e-4)
}

/// Log-probability gradients of both distribution families against central
/// finite differences in the distribution parameters.
fn policy_gradients() -> SuiteReport {
    let mut rng = Rng::new(0x9013);
    let mut max_err = 0.0f64;
    let mut cases = 0;
    let h = 1e-6;

    for _ in 0..200 {
        let dim = 2 + rng.index(5);
        let logits: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let action = Action::Discrete(rng.index(dim));
        let dist = PolicyDistribution::categorical(logits.clone()).expect("finite logits");
        let grad = dist.log_prob_grad_wrt_output(&action).expect("discrete action");
        for j in 0..dim {
            let mut up = logits.clone();
            up[j] += h;
            let mut down = logits.clone();
            down[j] -= h;
            let fd = (PolicyDistribution::categorical(up).unwrap().log_prob(&action).unwrap()
                - PolicyDistribution::categorical(down).unwrap().log_prob(&action).unwrap())
                / (2.0 * h);
            max_err = max_err.max((grad[j] - fd).abs());
            cases += 1;
        }
    }

    for _ in 0..200 {
        let dim = 1 + rng.index(4);
        let mean: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-1.5, 1.5)).collect();
        let log_std: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-1.0, 0.5)).collect();
        let act: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let action = Action::Continuous(act.clone());
        let dist =
            PolicyDistribution::gaussian(mean.clone(), log_std.clone()).expect("valid parameters");
        let mean_grad = dist.log_prob_grad_wrt_output(&action).expect("continuous action");
        let ls_grad = dist
            .log_prob_grad_wrt_log_std(&action)
            .expect("continuous action")
            .expect("gaussian family");
        for j in 0..dim {
            let mut up = mean.clone();
            up[j] += h;
            let mut down = mean.clone();
            down[j] -= h;
            let fd = (PolicyDistribution::gaussian(up, log_std.clone())
                .unwrap()
                .log_prob(&action)
                .unwrap()
                - PolicyDistribution::gaussian(down, log_std.clone())
                    .unwrap()
                    .log_prob(&action)
                    .unwrap())
                / (2.0 * h);
            max_err = max_err.max((mean_grad[j] - fd).abs());

            let mut up = log_std.clone();
            up[j] += h;
            let mut down = log_std.clone();
            down[j] -= h;
            let fd = (PolicyDistribution::gaussian(mean.clone(), up)
                .unwrap()
                .log_prob(&action)
                .unwrap()
                - PolicyDistribution::gaussian(mean.clone(), down)
                    .unwrap()
                    .log_prob(&action)
                    .unwrap())
                / (2.0 * h);
            max_err = max_err.max((ls_grad[j] - fd).abs());
            cases += 2;
        }
    }

    SuiteReport::from_error("policy_gradients", cases, max_err, 1e-5)
}

fn random_simplex(rng: &mut Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.uniform_in(0.05, 1.0)).collect();
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
    v
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for report in run_all() {
            assert!(
                report.passed,
                "suite {} failed: max error {} vs tolerance {}",
                report.name, report.max_error, report.tolerance
            );
            assert!(report.cases > 0);
        }
    }

    #[test]
    fn suite_listing_matches_the_runner() {
        let reports = run_all();
        let names: Vec<&str> = reports.iter().map(|r| r.name).collect();
        assert_eq!(names, SUITE_NAMES);
        assert!(run_suite("no_such_suite").is_err());
    }

    #[test]
    fn suites_are_deterministic() {
        let a = run_suite("pinsker_inclusion").unwrap();
        let b = run_suite("pinsker_inclusion").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.max_error.to_bits(), b.max_error.to_bits());
    }
}
