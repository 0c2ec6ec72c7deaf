//! Exact tabular counterparts of the regularized Bellman operators.

mod verify;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

pub use verify::{run_suite, Check, SuiteOptions};

/// Floor applied to reference probabilities before taking logs.
pub const REF_PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    /// `p[[s, a, s']]`.
    pub p: Array3<f64>,
    /// `r[[s, a]]`.
    pub r: Array2<f64>,
    pub gamma: f64,
}

impl FiniteMdp {
    pub fn new(p: Array3<f64>, r: Array2<f64>, gamma: f64) -> Result<Self> {
        let (n, m, n2) = p.dim();
        if n2 != n || r.dim() != (n, m) || n == 0 || m == 0 {
            return Err(Error::InvariantViolation(format!(
                "transition tensor {:?} does not match rewards {:?}",
                p.dim(),
                r.dim()
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::OutOfRange {
                what: "gamma",
                detail: format!("{gamma} is not in (0, 1)"),
            });
        }
        for s in 0..n {
            for a in 0..m {
                let row = p.slice(ndarray::s![s, a, ..]);
                if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvariantViolation(format!(
                        "P[{s}][{a}] is not a probability vector"
                    )));
                }
            }
        }
        Ok(Self { p, r, gamma })
    }

    /// Random MDP with transition rows drawn from a flat Dirichlet and
    /// rewards uniform in [-1, 1].
    pub fn random(rng: &mut impl Rng, states: usize, actions: usize, gamma: f64) -> Self {
        let mut p = Array3::zeros((states, actions, states));
        for mut row in p.lanes_mut(Axis(2)) {
            row.mapv_inplace(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln());
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
        }
        let r = Array2::from_shape_simple_fn((states, actions), || rng.random_range(-1.0..=1.0));
        Self::new(p, r, gamma).expect("generated rows are normalized")
    }

    pub fn states(&self) -> usize {
        self.r.nrows()
    }

    pub fn actions(&self) -> usize {
        self.r.ncols()
    }

    /// `r + gamma * P v`.
    fn backup(&self, v: ArrayView1<f64>) -> Array2<f64> {
        let (n, m) = self.r.dim();
        Array2::from_shape_fn((n, m), |(s, a)| {
            self.r[[s, a]] + self.gamma * self.p.slice(ndarray::s![s, a, ..]).dot(&v)
        })
    }
}

/// Row-stochastic matrix with entries bounded away from zero.
pub fn random_positive_policy(rng: &mut impl Rng, states: usize, actions: usize) -> Array2<f64> {
    let mut pi = Array2::from_shape_simple_fn((states, actions), || rng.random_range(0.05..1.0));
    for mut row in pi.rows_mut() {
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    pi
}

/// Row-wise `log softmax(logits)`.
pub fn log_softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    log_softmax(logits).mapv(f64::exp)
}

/// `ln max(pi0, floor)`.
pub fn floored_log(pi0: ArrayView2<f64>) -> Array2<f64> {
    pi0.mapv(|v| v.max(REF_PROB_FLOOR).ln())
}

/// Iterates and greedy policies of a tabular run; `q[0]` is the start.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterates {
    pub q: Vec<Array2<f64>>,
    /// `policies[k]` is the greedy policy of `q[k]`, the one used to
    /// produce `q[k + 1]`.
    pub policies: Vec<Array2<f64>>,
}

impl Iterates {
    pub fn last(&self) -> &Array2<f64> {
        self.q.last().expect("at least the initial iterate")
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "tau",
            detail: format!("{tau} must be positive"),
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "alpha",
            detail: format!("{alpha} is not in [0, 1]"),
        })
    }
}

fn check_policy(mdp: &FiniteMdp, pi0: ArrayView2<f64>) -> Result<()> {
    if pi0.dim() != mdp.r.dim() {
        return Err(Error::DimensionMismatch {
            expected: mdp.actions(),
            actual: pi0.ncols(),
        });
    }
    for (s, row) in pi0.rows().into_iter().enumerate() {
        if row.iter().any(|&v| !(v > 0.0)) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::InvariantViolation(format!(
                "reference row {s} is not a positive distribution"
            )));
        }
    }
    Ok(())
}

/// Greedy policy of `q` at temperature `tau` and the soft value
/// `sum_a pi (q - tau ln pi)`.
fn soft_greedy(q: &Array2<f64>, tau: f64) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let log_pi = log_softmax((q / tau).view());
    let pi = log_pi.mapv(f64::exp);
    let v = Zip::from(q.rows())
        .and(pi.rows())
        .and(log_pi.rows())
        .map_collect(|q, p, lp| {
            let mut acc = 0.0;
            for a in 0..q.len() {
                acc += p[a] * (q[a] - tau * lp[a]);
            }
            acc
        })
        .to_vec();
    (pi, log_pi, v)
}

fn soft_iterate(
    mdp: &FiniteMdp,
    tau: f64,
    bonus: Option<&Array2<f64>>,
    q0: Array2<f64>,
    iters: usize,
) -> Iterates {
    let mut q = vec![q0];
    let mut policies = Vec::with_capacity(iters);
    for _ in 0..iters {
        let (pi, _, v) = soft_greedy(q.last().unwrap(), tau);
        let next = match bonus {
            None => mdp.backup(ArrayView1::from(&v)),
            Some(b) => {
                let (n, m) = mdp.r.dim();
                Array2::from_shape_fn((n, m), |(s, a)| {
                    mdp.r[[s, a]]
                        + b[[s, a]]
                        + mdp.gamma
                            * mdp
                                .p
                                .slice(ndarray::s![s, a, ..])
                                .dot(&ArrayView1::from(&v))
                })
            }
        };
        policies.push(pi);
        q.push(next);
    }
    Iterates { q, policies }
}

/// `iters` applications of the soft Bellman operator from `q = 0`.
pub fn soft_vi(mdp: &FiniteMdp, tau: f64, iters: usize) -> Result<Iterates> {
    check_tau(tau)?;
    let q0 = Array2::zeros(mdp.r.dim());
    Ok(soft_iterate(mdp, tau, None, q0, iters))
}

/// `iters` applications of the hard Bellman optimality operator from `q = 0`.
pub fn hard_vi(mdp: &FiniteMdp, iters: usize) -> Array2<f64> {
    let mut q = Array2::zeros(mdp.r.dim());
    for _ in 0..iters {
        let v: Vec<f64> = q
            .rows()
            .into_iter()
            .map(|r| r.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .collect();
        q = mdp.backup(ArrayView1::from(&v));
    }
    q
}

/// Soft iteration with `alpha * tau * ln pi0` added to the reward, from `q = 0`.
pub fn munchausen_vi(
    mdp: &FiniteMdp,
    tau: f64,
    alpha: f64,
    pi0: ArrayView2<f64>,
    iters: usize,
) -> Result<Iterates> {
    check_tau(tau)?;
    check_alpha(alpha)?;
    check_policy(mdp, pi0)?;
    let bonus = floored_log(pi0).mapv(|l| alpha * tau * l);
    let q0 = Array2::zeros(mdp.r.dim());
    Ok(soft_iterate(mdp, tau, Some(&bonus), q0, iters))
}

/// Explicitly regularized iteration with entropy weight `w_h` and KL weight
/// `w_kl`, started from `-w_kl ln pi0`.
pub fn entkl_vi(
    mdp: &FiniteMdp,
    w_h: f64,
    w_kl: f64,
    pi0: ArrayView2<f64>,
    iters: usize,
) -> Result<Iterates> {
    if !(w_h >= 0.0 && w_kl >= 0.0 && w_h + w_kl > 0.0) {
        return Err(Error::OutOfRange {
            what: "w_h, w_kl",
            detail: format!("({w_h}, {w_kl}) must be non-negative with a positive sum"),
        });
    }
    check_policy(mdp, pi0)?;
    let log_pi0 = floored_log(pi0);
    let q0 = log_pi0.mapv(|l| -w_kl * l);
    entkl_from(mdp, w_h, w_kl, &log_pi0, q0, iters)
}

fn entkl_from(
    mdp: &FiniteMdp,
    w_h: f64,
    w_kl: f64,
    log_pi0: &Array2<f64>,
    q0: Array2<f64>,
    iters: usize,
) -> Result<Iterates> {
    let total = w_h + w_kl;
    let mut q = vec![q0];
    let mut policies = Vec::with_capacity(iters);
    for _ in 0..iters {
        let qp = q.last().unwrap();
        let logits = (qp + &log_pi0.mapv(|l| w_kl * l)) / total;
        let log_pi = log_softmax(logits.view());
        let pi = log_pi.mapv(f64::exp);
        let v: Vec<f64> = (0..mdp.states())
            .map(|s| {
                let mut acc = 0.0;
                for a in 0..mdp.actions() {
                    let lp = log_pi[[s, a]];
                    acc += pi[[s, a]] * (qp[[s, a]] - w_kl * (lp - log_pi0[[s, a]]) - w_h * lp);
                }
                acc
            })
            .collect();
        policies.push(pi);
        q.push(mdp.backup(ArrayView1::from(&v)));
    }
    Ok(Iterates { q, policies })
}

/// Largest per-state gap between `sum pi q + tau H(pi)` and
/// `sum pi q' - alpha tau KL(pi || pi0) + (1 - alpha) tau H(pi)` with
/// `q' = q - alpha tau ln pi0`.
pub fn improvement_identity_check(
    q: ArrayView2<f64>,
    pi: ArrayView2<f64>,
    pi0: ArrayView2<f64>,
    tau: f64,
    alpha: f64,
) -> f64 {
    let log_pi0 = floored_log(pi0);
    let xlogx = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
    let mut worst: f64 = 0.0;
    for s in 0..q.nrows() {
        let mut expect_q = 0.0;
        let mut entropy = 0.0;
        let mut expect_qp = 0.0;
        let mut kl = 0.0;
        for a in 0..q.ncols() {
            let p = pi[[s, a]];
            expect_q += p * q[[s, a]];
            entropy -= xlogx(p);
            expect_qp += p * (q[[s, a]] - alpha * tau * log_pi0[[s, a]]);
            kl += xlogx(p) - p * log_pi0[[s, a]];
        }
        let lhs = expect_q + tau * entropy;
        let rhs = expect_qp - alpha * tau * kl + (1.0 - alpha) * tau * entropy;
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0f64, |m, &x, &y| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(rng: &mut ChaCha8Rng) -> (FiniteMdp, Array2<f64>) {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=5);
        let gamma = rng.random_range(0.5..=0.95);
        (
            FiniteMdp::random(rng, n, m, gamma),
            random_positive_policy(rng, n, m),
        )
    }

    #[test]
    fn rejects_bad_transition_rows() {
        let p = Array3::from_elem((1, 1, 1), 0.9);
        assert!(FiniteMdp::new(p, Array2::zeros((1, 1)), 0.9).is_err());
        let p = Array3::from_elem((1, 1, 1), 1.0);
        assert!(FiniteMdp::new(p.clone(), Array2::zeros((1, 1)), 1.0).is_err());
        assert!(FiniteMdp::new(p, Array2::zeros((1, 1)), 0.9).is_ok());
    }

    #[test]
    fn single_state_single_action_sums_the_geometric_series() {
        let mdp = FiniteMdp::new(Array3::from_elem((1, 1, 1), 1.0), arr2(&[[1.0]]), 0.9).unwrap();
        let q = soft_vi(&mdp, 0.7, 2000).unwrap();
        assert!((q.last()[[0, 0]] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn large_temperature_gives_uniform_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mdp = FiniteMdp::random(&mut rng, 5, 3, 0.9);
        let it = soft_vi(&mdp, 1e6, 50).unwrap();
        let pi = it.policies.last().unwrap();
        let spread =
            pi.fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - pi.fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(spread <= 1e-6, "{spread}");
    }

    #[test]
    fn tiny_temperature_approaches_hard_vi() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = FiniteMdp::random(&mut rng, 5, 3, 0.9);
        let soft = soft_vi(&mdp, 1e-6, 300).unwrap();
        let hard = hard_vi(&mdp, 300);
        assert!(max_abs_diff(soft.last(), &hard) <= 1e-3);
    }

    #[test]
    fn zero_alpha_is_soft_vi_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mdp, pi0) = sample(&mut rng);
        let a = munchausen_vi(&mdp, 0.8, 0.0, pi0.view(), 40).unwrap();
        let b = soft_vi(&mdp, 0.8, 40).unwrap();
        assert_eq!(a, b);
        let c = entkl_vi(&mdp, 0.8, 0.0, pi0.view(), 40).unwrap();
        assert_eq!(c.q, b.q);
        assert_eq!(c.policies, b.policies);
    }

    #[test]
    fn uniform_reference_adds_a_state_action_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = FiniteMdp::random(&mut rng, 6, 4, 0.8);
        let pi0 = Array2::from_elem((6, 4), 0.25);
        let (tau, alpha) = (1.2, 0.4);
        let m = munchausen_vi(&mdp, tau, alpha, pi0.view(), 60).unwrap();
        let s = soft_vi(&mdp, tau, 60).unwrap();
        let step = alpha * tau * 0.25f64.ln();
        for k in 0..=60 {
            let shift = step * (1.0 - 0.8f64.powi(k as i32)) / (1.0 - 0.8);
            let d = &m.q[k] - &s.q[k];
            assert!(d.iter().all(|v| (v - shift).abs() < 1e-12), "iteration {k}");
        }
    }

    #[test]
    fn implicit_and_explicit_iterations_agree_under_the_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (mdp, pi0) = sample(&mut rng);
            let tau = rng.random_range(0.1..2.0);
            let alpha = rng.random_range(0.0..=1.0);
            let m = munchausen_vi(&mdp, tau, alpha, pi0.view(), 100).unwrap();
            let e = entkl_vi(&mdp, (1.0 - alpha) * tau, alpha * tau, pi0.view(), 100).unwrap();
            let shift = floored_log(pi0.view()).mapv(|l| alpha * tau * l);
            for k in 0..=100 {
                assert!(max_abs_diff(&(&m.q[k] - &shift), &e.q[k]) <= 1e-10);
            }
            for k in 0..100 {
                assert!(max_abs_diff(&m.policies[k], &e.policies[k]) <= 1e-12);
            }
        }
    }

    #[test]
    fn dominant_kl_weight_pins_the_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = FiniteMdp::random(&mut rng, 5, 4, 0.6);
        let pi0 = random_positive_policy(&mut rng, 5, 4);
        let e = entkl_vi(&mdp, 0.0, 1e3, pi0.view(), 100).unwrap();
        let pi = e.policies.last().unwrap();
        for s in 0..5 {
            let tv: f64 = 0.5
                * (0..4)
                    .map(|a| (pi[[s, a]] - pi0[[s, a]]).abs())
                    .sum::<f64>();
            assert!(tv <= 1e-3, "{tv}");
        }
    }

    #[test]
    fn iterates_contract_by_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let (mdp, pi0) = sample(&mut rng);
            let m = munchausen_vi(&mdp, 0.9, 0.5, pi0.view(), 200).unwrap();
            for k in 181..200 {
                let prev = max_abs_diff(&m.q[k], &m.q[k - 1]);
                let next = max_abs_diff(&m.q[k + 1], &m.q[k]);
                assert!(
                    next <= mdp.gamma * prev + 1e-14,
                    "{next} > {} * {prev}",
                    mdp.gamma
                );
            }
        }
    }

    #[test]
    fn identity_holds_on_random_draws_and_at_the_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let m = rng.random_range(1..=6);
            let q = Array2::from_shape_simple_fn((1, m), || rng.random_range(-10.0..10.0));
            let pi = random_positive_policy(&mut rng, 1, m);
            let pi0 = random_positive_policy(&mut rng, 1, m);
            let (tau, alpha) = (rng.random_range(0.0..3.0), rng.random_range(0.0..=1.0));
            assert!(
                improvement_identity_check(q.view(), pi.view(), pi0.view(), tau, alpha) <= 1e-12
            );
            assert!(
                improvement_identity_check(q.view(), pi0.view(), pi0.view(), tau, alpha) <= 1e-12
            );
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mdp, pi0) = sample(&mut rng);
        assert!(soft_vi(&mdp, 0.0, 1).is_err());
        assert!(munchausen_vi(&mdp, 1.0, 1.5, pi0.view(), 1).is_err());
        assert!(entkl_vi(&mdp, 0.0, 0.0, pi0.view(), 1).is_err());
        let zeros = Array2::zeros(pi0.dim());
        assert!(munchausen_vi(&mdp, 1.0, 0.5, zeros.view(), 1).is_err());
    }
}
