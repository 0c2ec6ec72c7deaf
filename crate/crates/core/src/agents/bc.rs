//! Behavioral cloning with state perturbation.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    inverse_action, normalize_angle, Action, EgoState, KinematicLimits, LocalPose, Pose,
};
use crate::neuralnet::{Adam, Grads, NetShape, ReferencePolicy, ACTION_DIM, REF_LOG_STD};
use crate::scenario::{expert_actions, Scenario};
use crate::simulator::{build_observation, SceneIndex, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub perturb_prob: f64,
    /// Meters.
    pub lateral_sigma: f64,
    /// Radians.
    pub heading_sigma: f64,
    /// Samples drawn per logged frame.
    pub copies: usize,
    /// Perturbation redraws before falling back to the logged state.
    pub max_resample: usize,
    pub shuffle: bool,
    pub network: NetShape,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
            perturb_prob: 0.5,
            lateral_sigma: 0.5,
            heading_sigma: 0.1,
            copies: 4,
            max_resample: 20,
            shuffle: true,
            network: NetShape::default(),
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.copies == 0 {
            return Err(Error::Config(
                "bc batch_size and copies must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.perturb_prob) {
            return Err(Error::Config("perturb_prob must lie in [0, 1]".into()));
        }
        if !(self.lateral_sigma >= 0.0 && self.heading_sigma >= 0.0) {
            return Err(Error::Config(
                "perturbation sigmas must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One supervised pair; the label is the action divided by its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BcSample {
    pub obs: Vec<f64>,
    pub label: [f64; 2],
    pub perturbed: bool,
}

/// Per-pair NLL at zero error: `-2 (-ln sqrt(2 pi) + 1.5)`.
pub fn nll_floor() -> f64 {
    -(ACTION_DIM as f64) * (-0.5 * (2.0 * std::f64::consts::PI).ln() - REF_LOG_STD)
}

/// Action that takes the perturbed ego to the logged position at `frame + 1`,
/// arriving along the chord. Errors when that position lies behind.
pub fn recovery_label(scenario: &Scenario, frame: usize, ego: &EgoState) -> Result<Action> {
    let target = scenario.ego_log[frame + 1];
    let (dx, dy) = (target.x - ego.pose.x, target.y - ego.pose.y);
    let (s, c) = ego.pose.theta.sin_cos();
    let x = c * dx + s * dy;
    let y = -s * dx + c * dy;
    let theta = if x == 0.0 && y == 0.0 {
        0.0
    } else {
        normalize_angle(y.atan2(x))
    };
    inverse_action(ego, &LocalPose { x, y, theta })
}

fn normalized(a: Action, limits: &KinematicLimits) -> [f64; 2] {
    let a = limits.clamp(a);
    [a.steer / limits.steer_max, a.accel / limits.accel_max]
}

/// Pairs from every logged frame that has a successor. With probability
/// `perturb_prob` the ego is displaced laterally and rotated, and the label
/// becomes the recovery action back to the log.
pub fn build_dataset(
    scenarios: &[Arc<Scenario>],
    sim: &SimConfig,
    cfg: &BcConfig,
    rng: &mut impl Rng,
) -> Result<Vec<BcSample>> {
    cfg.validate()?;
    let lateral = Normal::new(0.0, cfg.lateral_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let heading = Normal::new(0.0, cfg.heading_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let limits = sim.limits;
    let mut out = Vec::new();
    for s in scenarios {
        let index = SceneIndex::new(s);
        let expert = expert_actions(s)?;
        for t in 0..s.num_frames - 1 {
            let past = |k: usize| t.checked_sub(k).map(|i| s.ego_log[i]);
            let logged = s.ego_state_at(t);
            for _ in 0..cfg.copies {
                let mut sample = None;
                if rng.random_bool(cfg.perturb_prob) {
                    for _ in 0..cfg.max_resample {
                        let d = lateral.sample(rng);
                        let dh = heading.sample(rng);
                        let p = logged.pose;
                        let pose = Pose::new(
                            p.x - d * p.theta.sin(),
                            p.y + d * p.theta.cos(),
                            p.theta + dh,
                        );
                        let ego = EgoState::new(pose, logged.speed);
                        match recovery_label(s, t, &ego) {
                            Ok(a) => {
                                let obs =
                                    build_observation(&sim.observation, s, &index, t, &ego, past);
                                sample = Some(BcSample {
                                    obs,
                                    label: normalized(a, &limits),
                                    perturbed: true,
                                });
                                break;
                            }
                            Err(Error::DegenerateTarget { .. }) => continue,
                            Err(e) => return Err(e),
                        }
                    }
                }
                out.push(sample.unwrap_or_else(|| BcSample {
                    obs: build_observation(&sim.observation, s, &index, t, &logged, past),
                    label: normalized(expert[t], &limits),
                    perturbed: false,
                }));
            }
        }
    }
    Ok(out)
}

/// Mean Gaussian NLL (fixed sigma) of `labels` under `tanh(f(obs))`, with
/// gradients for encoder and head.
pub fn bc_loss_and_grads(
    policy: &ReferencePolicy,
    obs: ArrayView2<f64>,
    labels: ArrayView2<f64>,
) -> Result<(f64, Grads, Grads)> {
    let n = obs.nrows() as f64;
    let enc = policy.encoder.forward_tape(obs)?;
    let head = policy.head.forward_tape(enc.output().view())?;
    let mu = head.output().mapv(f64::tanh);
    let inv_var = (-2.0 * REF_LOG_STD).exp();
    let const_term = -REF_LOG_STD - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut loss = 0.0;
    let mut grad = Array2::zeros(mu.raw_dim());
    Zip::from(&mut grad)
        .and(&mu)
        .and(&labels)
        .for_each(|g, &m, &y| {
            let e = m - y;
            loss += 0.5 * e * e * inv_var - const_term;
            *g = e * inv_var * (1.0 - m * m) / n;
        });
    let (g_head, d_feat) = policy.head.backward_tape(&head, grad.view())?;
    let g_enc = policy.encoder.backward_params(&enc, d_feat.view())?;
    Ok((loss / n, g_enc, g_head))
}

fn stack(samples: &[&BcSample]) -> (Array2<f64>, Array2<f64>) {
    let d = samples[0].obs.len();
    let mut obs = Array2::zeros((samples.len(), d));
    let mut labels = Array2::zeros((samples.len(), ACTION_DIM));
    for (r, s) in samples.iter().enumerate() {
        obs.row_mut(r)
            .assign(&ndarray::ArrayView1::from(&s.obs[..]));
        labels[[r, 0]] = s.label[0];
        labels[[r, 1]] = s.label[1];
    }
    (obs, labels)
}

/// Fits `policy` on `data` and returns the mean loss of every epoch.
pub fn fit(
    policy: &mut ReferencePolicy,
    data: &[BcSample],
    cfg: &BcConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Config("empty behavioral-cloning dataset".into()));
    }
    let mut enc_opt = Adam::new(&policy.encoder);
    let mut head_opt = Adam::new(&policy.head);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(rng);
        }
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&BcSample> = chunk.iter().map(|&i| &data[i]).collect();
            let (obs, labels) = stack(&items);
            let (loss, g_enc, g_head) = bc_loss_and_grads(policy, obs.view(), labels.view())?;
            total += loss * chunk.len() as f64;
            enc_opt.step(&mut policy.encoder, &g_enc, cfg.lr);
            head_opt.step(&mut policy.head, &g_head, cfg.lr);
        }
        losses.push(total / data.len() as f64);
    }
    Ok(losses)
}

/// Mean NLL of `policy` over `data`.
pub fn evaluate_nll(policy: &ReferencePolicy, data: &[BcSample]) -> Result<f64> {
    let items: Vec<&BcSample> = data.iter().collect();
    let (obs, labels) = stack(&items);
    Ok(bc_loss_and_grads(policy, obs.view(), labels.view())?.0)
}

#[derive(Debug, Clone)]
pub struct BcOutcome {
    pub policy: ReferencePolicy,
    pub epoch_losses: Vec<f64>,
    pub samples: usize,
    pub perturbed: usize,
}

/// Builds the perturbed dataset and fits a teacher, all from `seed`.
pub fn train_bc(
    scenarios: &[Arc<Scenario>],
    sim: &SimConfig,
    cfg: &BcConfig,
    seed: u64,
) -> Result<BcOutcome> {
    if scenarios.is_empty() {
        return Err(Error::Config("train_bc needs at least one scenario".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = build_dataset(scenarios, sim, cfg, &mut rng)?;
    let mut policy = ReferencePolicy::new(
        sim.observation.dim(),
        &cfg.network,
        sim.limits.scale(),
        &mut rng,
    )?;
    let epoch_losses = fit(&mut policy, &data, cfg, &mut rng)?;
    Ok(BcOutcome {
        policy,
        epoch_losses,
        samples: data.len(),
        perturbed: data.iter().filter(|s| s.perturbed).count(),
    })
}
