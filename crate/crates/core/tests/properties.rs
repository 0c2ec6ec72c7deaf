use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use softctrl::agents::{reparameterize, ReplayBuffer, Transition};
use softctrl::evalkit::{ade, d2r};
use softctrl::kinematics::{Action, KinematicLimits};
use softctrl::neuralnet::{GaussianPolicy, NetShape, ReferencePolicy, REF_LOGPROB_FLOOR};
use softctrl::oracle::{improvement_identity_check, random_positive_policy, softmax, FiniteMdp};
use softctrl::scenario::{generate, Scenario, ScenarioKind};
use softctrl::simulator::{DrivingEnv, SimConfig};

fn kind() -> impl Strategy<Value = ScenarioKind> {
    prop::sample::select(ScenarioKind::ALL.to_vec())
}

fn small_shape() -> NetShape {
    NetShape {
        encoder: vec![12],
        head: vec![8],
    }
}

fn transition(tag: f64) -> Transition {
    Transition {
        obs: vec![tag],
        action: [0.0, 0.0],
        reward: tag,
        next_obs: vec![tag],
        done: false,
        ref_logprob: 0.0,
        behavior_logprob: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_scenes_validate_and_round_trip(k in kind(), seed in 0u64..10_000) {
        let s = generate(k, seed);
        prop_assert!(s.validate().is_ok());
        let back = Scenario::from_json(&s.to_json(), "memory").unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn rollouts_keep_state_and_outputs_consistent(
        k in kind(),
        seed in 0u64..1_000,
        actions in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 60),
    ) {
        let cfg = SimConfig::default();
        let limits = cfg.limits;
        let mut env = DrivingEnv::new(Arc::new(generate(k, seed)), cfg);
        let dim = env.observation_dim();
        prop_assert_eq!(env.reset(0).unwrap().len(), dim);
        for (s, a) in actions {
            // Deliberately outside the bounds half the time; the env clamps.
            let out = env.step(Action::new(2.0 * s * limits.steer_max, 2.0 * a * limits.accel_max)).unwrap();
            prop_assert_eq!(out.observation.len(), dim);
            prop_assert!(out.observation.iter().all(|v| v.is_finite()));
            prop_assert!(limits.contains(out.applied));
            prop_assert!(out.ego.speed.abs() <= limits.v_max);
            prop_assert!(out.ego.pose.theta > -PI && out.ego.pose.theta <= PI);
            prop_assert_eq!(out.reward, out.reward_terms.weighted(&env.config().reward));
            let hits = [out.reward_terms.front, out.reward_terms.side, out.reward_terms.rear]
                .iter()
                .filter(|&&v| v != 0.0)
                .count();
            prop_assert_eq!(hits, usize::from(out.collision.is_some()));
            if out.done {
                break;
            }
        }
    }
}

proptest! {
    #[test]
    fn squashed_samples_stay_inside_and_score_consistently(seed in 0u64..5_000, log_std in -3.0..0.5f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = KinematicLimits::default().scale();
        let pi = GaussianPolicy::new(6, &small_shape(), scale, log_std, &mut rng).unwrap();
        let obs: Vec<f64> = (0..6).map(|i| ((seed + i) as f64).sin()).collect();
        let (a, lp) = pi.sample_and_logprob(&obs, &mut rng).unwrap();
        prop_assert!(a.steer.abs() < scale[0] && a.accel.abs() < scale[1]);
        if let Some(again) = pi.log_prob(&obs, a).unwrap() {
            prop_assert!((again - lp).abs() < 1e-6 * (1.0 + lp.abs()), "{} vs {}", again, lp);
        }
    }

    #[test]
    fn reference_logprob_respects_the_floor(seed in 0u64..5_000, steer in -0.3..0.3f64, accel in -0.06..0.06f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limits = KinematicLimits::default();
        let teacher = ReferencePolicy::new(6, &small_shape(), limits.scale(), &mut rng).unwrap();
        let obs = vec![0.3; 6];
        let lp = teacher.ref_logprob(&obs, Action::new(steer, accel)).unwrap();
        prop_assert!(lp >= REF_LOGPROB_FLOOR);
        prop_assert_eq!(lp, teacher.ref_logprob_unclamped(&obs, Action::new(steer, accel)).unwrap().max(REF_LOGPROB_FLOOR));
    }

    #[test]
    fn replay_evicts_oldest_and_samples_distinct(cap in 1usize..40, pushed in 0usize..120, seed in 0u64..1_000) {
        let mut buf = ReplayBuffer::new(cap);
        for i in 0..pushed {
            buf.push(transition(i as f64));
        }
        prop_assert_eq!(buf.len(), pushed.min(cap));
        let mut kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        kept.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (pushed.saturating_sub(cap)..pushed).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = buf.len();
        let mut idx = buf.sample_indices(&mut rng, n).unwrap();
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), n);
        prop_assert!(buf.sample_indices(&mut rng, n + 1).is_err());
    }

    #[test]
    fn weight_form_maps_to_temperature_and_share(w_h in 0.0..5.0f64, w_kl in 0.0..5.0f64) {
        prop_assume!(w_h + w_kl > 1e-9);
        let (tau, alpha) = reparameterize(w_h, w_kl).unwrap();
        prop_assert!(tau > 0.0 && (0.0..=1.0).contains(&alpha));
        prop_assert!((tau - (w_h + w_kl)).abs() < 1e-12);
        prop_assert!((alpha * tau - w_kl).abs() < 1e-12);
    }

    #[test]
    fn random_mdps_and_policies_are_stochastic(seed in 0u64..10_000, n in 1usize..10, m in 1usize..6, gamma in 0.5..0.95f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = FiniteMdp::random(&mut rng, n, m, gamma);
        for s in 0..n {
            for a in 0..m {
                let row = mdp.p.slice(ndarray::s![s, a, ..]);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            }
        }
        let pi0 = random_positive_policy(&mut rng, n, m);
        for row in pi0.rows() {
            prop_assert!(row.iter().all(|&x| x > 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn improvement_identity_holds(seed in 0u64..10_000, tau in 0.01..5.0f64, alpha in 0.0..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Array2::from_shape_fn((4, 3), |(s, a)| ((seed as usize + 7 * s + a) as f64).sin() * 10.0);
        let pi = softmax(q.view());
        let pi0 = random_positive_policy(&mut rng, 4, 3);
        prop_assert!(improvement_identity_check(q.view(), pi.view(), pi0.view(), tau, alpha) <= 1e-12);
    }

    #[test]
    fn d2r_vanishes_on_the_path_and_ade_is_symmetric(
        pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..12),
        shift in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 12),
        t in 0.0..=1.0f64,
    ) {
        let path: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        for w in path.windows(2) {
            let p = [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
            prop_assert!(d2r(p, &path) < 1e-9);
        }
        let other: Vec<[f64; 2]> = path.iter().zip(&shift).map(|(p, d)| [p[0] + d.0, p[1] + d.1]).collect();
        let ab = ade(&path, &other).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ade(&other, &path).unwrap());
        prop_assert_eq!(ade(&path, &path).unwrap(), 0.0);
        let mean_shift = shift.iter().take(path.len()).map(|d| d.0.hypot(d.1)).sum::<f64>() / path.len() as f64;
        prop_assert!((ab - mean_shift).abs() < 1e-9);
    }
}
