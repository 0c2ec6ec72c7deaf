use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    entkl_vi, floored_log, hard_vi, improvement_identity_check, max_abs_diff, munchausen_vi,
    random_positive_policy, soft_vi, FiniteMdp,
};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random MDPs in the equivalence sweep.
    pub mdps: usize,
    pub iters: usize,
    /// Random draws in the improvement-identity sweep.
    pub identity_draws: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            mdps: 100,
            iters: 100,
            identity_draws: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, max_discrepancy: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_discrepancy,
            tolerance,
            passed: max_discrepancy <= tolerance,
        }
    }
}

/// MDP with 1..=10 states, 1..=5 actions, gamma in [0.5, 0.95] and a
/// strictly positive reference policy.
pub(crate) fn random_case(rng: &mut impl Rng) -> (FiniteMdp, Array2<f64>) {
    let n = rng.random_range(1..=10);
    let m = rng.random_range(1..=5);
    let gamma = rng.random_range(0.5..=0.95);
    let mdp = FiniteMdp::random(rng, n, m, gamma);
    let pi0 = random_positive_policy(rng, n, m);
    (mdp, pi0)
}

/// Every tabular check, each with its own tolerance.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    let (mut shift, mut policy, mut contraction) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..opts.mdps {
        let (mdp, pi0) = random_case(&mut rng);
        let tau = rng.random_range(0.05..=2.0);
        let alpha = rng.random_range(0.0..=1.0);
        let m = munchausen_vi(&mdp, tau, alpha, pi0.view(), opts.iters)?;
        let e = entkl_vi(
            &mdp,
            (1.0 - alpha) * tau,
            alpha * tau,
            pi0.view(),
            opts.iters,
        )?;
        let offset = floored_log(pi0.view()).mapv(|l| alpha * tau * l);
        for (q, qp) in m.q.iter().zip(&e.q) {
            shift = shift.max(max_abs_diff(&(q - &offset), qp));
        }
        for (a, b) in m.policies.iter().zip(&e.policies) {
            policy = policy.max(max_abs_diff(a, b));
        }
        let k0 = opts.iters.saturating_sub(20).max(1);
        for k in k0..opts.iters {
            let prev = max_abs_diff(&m.q[k], &m.q[k - 1]);
            let next = max_abs_diff(&m.q[k + 1], &m.q[k]);
            contraction = contraction.max(next - mdp.gamma * prev);
        }
    }
    checks.push(Check::new("shift_equivalence", shift, 1e-10));
    checks.push(Check::new("policy_equality", policy, 1e-12));
    checks.push(Check::new("contraction", contraction.max(0.0), 1e-12));

    let mut identity = 0.0f64;
    for _ in 0..opts.identity_draws {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=5);
        let q = Array2::from_shape_simple_fn((n, m), || rng.random_range(-10.0..10.0));
        let pi = random_positive_policy(&mut rng, n, m);
        let pi0 = random_positive_policy(&mut rng, n, m);
        let (tau, alpha) = (rng.random_range(0.0..=3.0), rng.random_range(0.0..=1.0));
        identity = identity.max(improvement_identity_check(
            q.view(),
            pi.view(),
            pi0.view(),
            tau,
            alpha,
        ));
        identity = identity.max(improvement_identity_check(
            q.view(),
            pi0.view(),
            pi0.view(),
            tau,
            alpha,
        ));
    }
    checks.push(Check::new("improvement_identity", identity, 1e-12));

    let (mut alpha_zero, mut wkl_zero) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let (mdp, pi0) = random_case(&mut rng);
        let tau = rng.random_range(0.05..=2.0);
        let s = soft_vi(&mdp, tau, opts.iters)?;
        let m = munchausen_vi(&mdp, tau, 0.0, pi0.view(), opts.iters)?;
        let e = entkl_vi(&mdp, tau, 0.0, pi0.view(), opts.iters)?;
        for k in 0..s.q.len() {
            alpha_zero = alpha_zero.max(max_abs_diff(&s.q[k], &m.q[k]));
            wkl_zero = wkl_zero.max(max_abs_diff(&s.q[k], &e.q[k]));
        }
    }
    checks.push(Check::new("alpha_zero_limit", alpha_zero, 0.0));
    checks.push(Check::new("kl_weight_zero_limit", wkl_zero, 0.0));

    let mdp = FiniteMdp::random(&mut rng, 5, 3, 0.9);
    let soft = soft_vi(&mdp, 1e-6, 300)?;
    checks.push(Check::new(
        "hard_limit",
        max_abs_diff(soft.last(), &hard_vi(&mdp, 300)),
        1e-3,
    ));
    let flat = soft_vi(&mdp, 1e6, 50)?;
    let pi = flat.policies.last().expect("iterated");
    let spread =
        pi.fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - pi.fold(f64::INFINITY, |a, &b| a.min(b));
    checks.push(Check::new("uniform_limit", spread, 1e-6));

    let mdp = FiniteMdp::random(&mut rng, 6, 4, 0.8);
    let uniform = Array2::from_elem((6, 4), 0.25);
    let (tau, alpha) = (1.2, 0.4);
    let m = munchausen_vi(&mdp, tau, alpha, uniform.view(), opts.iters)?;
    let s = soft_vi(&mdp, tau, opts.iters)?;
    let step = alpha * tau * 0.25f64.ln();
    let mut uniform_shift = 0.0f64;
    for k in 0..m.q.len() {
        let expected = step * (1.0 - mdp.gamma.powi(k as i32)) / (1.0 - mdp.gamma);
        let d = &m.q[k] - &s.q[k];
        uniform_shift = uniform_shift.max(d.iter().fold(0.0, |a, v| a.max((v - expected).abs())));
    }
    checks.push(Check::new("uniform_reference_shift", uniform_shift, 1e-10));

    let mdp = FiniteMdp::random(&mut rng, 5, 4, 0.6);
    let pi0 = random_positive_policy(&mut rng, 5, 4);
    let e = entkl_vi(&mdp, 0.0, 1e3, pi0.view(), opts.iters)?;
    let pi = e.policies.last().expect("iterated");
    let tv = (0..5)
        .map(|s| {
            0.5 * (0..4)
                .map(|a| (pi[[s, a]] - pi0[[s, a]]).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    checks.push(Check::new("kl_dominance", tv, 1e-3));

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let checks = run_suite(&SuiteOptions::default()).unwrap();
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
        assert_eq!(checks.len(), 10);
    }
}
