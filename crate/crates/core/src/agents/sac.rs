use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::Batch;
use super::config::{SacConfig, Variant};
use crate::error::{Error, Result};
use crate::neuralnet::{
    ref_logprob_normalized, Adam, GaussianPolicy, Grads, Mlp, QNetwork, ReferencePolicy, ACTION_DIM,
};

/// Twin Q networks with polyak-averaged targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub online: [QNetwork; 2],
    pub target: [QNetwork; 2],
}

impl CriticPair {
    /// Fresh heads; encoders start from `encoder` when given.
    pub fn new(
        obs_dim: usize,
        cfg: &SacConfig,
        encoder: Option<&Mlp>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut make = || -> Result<QNetwork> {
            let mut q = QNetwork::new(obs_dim, &cfg.network, rng)?;
            if let Some(e) = encoder {
                q.encoder = e.clone();
            }
            Ok(q)
        };
        let online = [make()?, make()?];
        Ok(Self {
            target: online.clone(),
            online,
        })
    }

    /// `target <- rho * target + (1 - rho) * online` for every parameter.
    pub fn polyak(&mut self, rho: f64) {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.encoder.polyak_from(&o.encoder, rho);
            t.head.polyak_from(&o.head, rho);
        }
    }

    pub fn target_min(
        &self,
        obs: ArrayView2<f64>,
        squashed: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        let a = self.target[0].q(obs, squashed)?;
        let b = self.target[1].q(obs, squashed)?;
        Ok(Zip::from(&a).and(&b).map_collect(|&x, &y| x.min(y)))
    }

    pub fn online_min(
        &self,
        obs: ArrayView2<f64>,
        squashed: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        let a = self.online[0].q(obs, squashed)?;
        let b = self.online[1].q(obs, squashed)?;
        Ok(Zip::from(&a).and(&b).map_collect(|&x, &y| x.min(y)))
    }

    /// Adds `c` to the output bias of all four networks.
    pub fn shift_outputs(&mut self, c: f64) {
        for q in self.online.iter_mut().chain(self.target.iter_mut()) {
            if let Some(last) = q.head.layers_mut().last_mut() {
                last.b += c;
            }
        }
    }
}

/// Per-transition regression targets.
///
/// `next_q_min` and `next_logprob` belong to a fresh action at the next
/// state; `tau` is the temperature in effect.
pub fn critic_target(
    cfg: &SacConfig,
    tau: f64,
    batch: &Batch,
    next_q_min: &Array1<f64>,
    next_logprob: &Array1<f64>,
) -> Array1<f64> {
    let n = batch.len();
    Array1::from_shape_fn(n, |i| {
        let r = batch.rewards[i];
        let reward = match cfg.variant {
            Variant::Sac => r,
            Variant::Exkl => {
                r - cfg.exkl_kl_coef * (batch.behavior_logprob[i] - batch.ref_logprob[i])
            }
            Variant::Imkl => r + cfg.alpha * tau * batch.ref_logprob[i],
        };
        reward + cfg.gamma * (1.0 - batch.dones[i]) * (next_q_min[i] - tau * next_logprob[i])
    })
}

/// Mean over the batch of `(q - y)^2 / 2`, with gradients.
pub fn critic_loss_and_grads(
    q: &QNetwork,
    obs: ArrayView2<f64>,
    squashed: ArrayView2<f64>,
    targets: &Array1<f64>,
) -> Result<(f64, Grads, Grads)> {
    let n = obs.nrows() as f64;
    let tape = q.forward_tape(obs, squashed)?;
    let err = &tape.values() - targets;
    let loss = 0.5 * err.mapv(|e| e * e).sum() / n;
    let d_q = err / n;
    let (g_enc, g_head, _) = q.backward(&tape, d_q.view())?;
    Ok((loss, g_enc.expect("full tape"), g_head))
}

#[derive(Debug, Clone)]
pub struct ActorStep {
    pub loss: f64,
    pub encoder: Grads,
    pub head: Grads,
    /// Log-densities of the reparameterized draws.
    pub logprob: Array1<f64>,
}

/// Teacher log-density term carried by the critics: every critic value is
/// `head output + weight * ln pi_0(a|s)`.
#[derive(Debug, Clone)]
pub struct Prior {
    pub weight: f64,
    /// Teacher means in action-bound units, one row per observation.
    pub means: Array2<f64>,
}

impl Prior {
    /// Floored `ln pi_0` of normalized actions and its action gradient.
    pub fn logprob(&self, squashed: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        let n = squashed.nrows();
        let mut lp = Array1::zeros(n);
        let mut grad = Array2::zeros((n, ACTION_DIM));
        for i in 0..n {
            let (l, g) = ref_logprob_normalized(
                [self.means[[i, 0]], self.means[[i, 1]]],
                [squashed[[i, 0]], squashed[[i, 1]]],
            );
            lp[i] = l;
            grad[[i, 0]] = g[0];
            grad[[i, 1]] = g[1];
        }
        (lp, grad)
    }
}

/// Mean over the batch of `tau * log pi(a|s) - min_k q_k(s, a)` with
/// `a` drawn from `eps`, and its actor gradients. The critics are held fixed.
/// With a `prior`, `q_k` includes its weighted teacher term.
pub fn actor_loss_and_grads(
    actor: &GaussianPolicy,
    critics: &[QNetwork; 2],
    obs: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    tau: f64,
    prior: Option<&Prior>,
) -> Result<ActorStep> {
    let n = obs.nrows();
    let sample = actor.sample_batch(obs, eps)?;
    let mut tapes = Vec::with_capacity(2);
    for q in critics {
        let f = q.features(obs)?;
        tapes.push(q.forward_tape_from_features(f.view(), sample.squashed.view())?);
    }
    let (q0, q1) = (tapes[0].values(), tapes[1].values());
    let pick: Vec<usize> = (0..n).map(|i| if q1[i] < q0[i] { 1 } else { 0 }).collect();
    let mut loss = 0.0;
    for i in 0..n {
        let qmin = if pick[i] == 1 { q1[i] } else { q0[i] };
        loss += tau * sample.logprob[i] - qmin;
    }
    let mut d_squashed = Array2::zeros((n, ACTION_DIM));
    for (k, q) in critics.iter().enumerate() {
        let d_q = Array1::from_shape_fn(n, |i| if pick[i] == k { -1.0 / n as f64 } else { 0.0 });
        let (_, _, d_a) = q.backward(&tapes[k], d_q.view())?;
        d_squashed += &d_a;
    }
    if let Some(p) = prior {
        let (lp, grad) = p.logprob(sample.squashed.view());
        loss -= p.weight * lp.sum();
        d_squashed.scaled_add(-p.weight / n as f64, &grad);
    }
    let d_logprob = Array1::from_elem(n, tau / n as f64);
    let (encoder, head) = actor.backward(&sample, d_squashed.view(), d_logprob.view())?;
    Ok(ActorStep {
        loss: loss / n as f64,
        encoder,
        head,
        logprob: sample.logprob,
    })
}

/// Derivative of `-log_tau * (mean log pi + target)` in `log_tau`, with
/// `log pi` taken over actions divided by their bounds. Positive when the
/// policy entropy exceeds the target.
pub fn temperature_grad(mean_normalized_logprob: f64, target_entropy: f64) -> f64 {
    -(mean_normalized_logprob + target_entropy)
}

fn normal_matrix(rng: &mut impl Rng, rows: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, ACTION_DIM), || rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub tau: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
struct Optimizers {
    actor: [Adam; 2],
    critics: [[Adam; 2]; 2],
}

/// Actor, twin critics and temperature of one learner.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub actor: GaussianPolicy,
    pub critics: CriticPair,
    pub log_tau: f64,
    pub updates: u64,
    pub reference: ReferencePolicy,
    opt: Optimizers,
}

impl SacAgent {
    /// Actor copied from the teacher; critic encoders start from the
    /// teacher encoder.
    pub fn new(
        config: &SacConfig,
        reference: &ReferencePolicy,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let config = config.resolved()?;
        let teacher_widths = reference.encoder.widths();
        if teacher_widths[1..] != config.network.encoder[..] {
            return Err(Error::Config(format!(
                "critic encoder widths {:?} differ from the teacher encoder {:?}",
                config.network.encoder,
                &teacher_widths[1..]
            )));
        }
        let actor = GaussianPolicy::from_reference(reference, config.init_log_std);
        let critics = CriticPair::new(reference.obs_dim(), &config, Some(&reference.encoder), rng)?;
        let opt = Optimizers {
            actor: [Adam::new(&actor.encoder), Adam::new(&actor.head)],
            critics: [
                [
                    Adam::new(&critics.online[0].encoder),
                    Adam::new(&critics.online[0].head),
                ],
                [
                    Adam::new(&critics.online[1].encoder),
                    Adam::new(&critics.online[1].head),
                ],
            ],
        };
        Ok(Self {
            log_tau: config.tau.ln(),
            config,
            actor,
            critics,
            updates: 0,
            reference: reference.clone(),
            opt,
        })
    }

    /// Temperature in effect: tuned for `sac`/`exkl` with auto entropy,
    /// otherwise the configured `tau`.
    pub fn tau(&self) -> f64 {
        if self.config.uses_auto_entropy() {
            self.log_tau.exp()
        } else {
            self.config.tau
        }
    }

    /// Weight of the teacher term inside the critics: `alpha * tau` for
    /// `imkl` with `critic_prior`, else zero.
    pub fn prior_weight(&self) -> f64 {
        if self.config.variant == Variant::Imkl && self.config.critic_prior {
            self.config.alpha * self.tau()
        } else {
            0.0
        }
    }

    pub fn prior(&self, obs: ArrayView2<f64>) -> Result<Option<Prior>> {
        let weight = self.prior_weight();
        if weight == 0.0 {
            return Ok(None);
        }
        Ok(Some(Prior {
            weight,
            means: self.reference.normalized_means(obs)?,
        }))
    }

    /// Smaller target critic at `(obs, squashed)`, teacher term included.
    pub fn target_value(
        &self,
        obs: ArrayView2<f64>,
        squashed: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        let mut q = self.critics.target_min(obs, squashed)?;
        if let Some(p) = self.prior(obs)? {
            q.scaled_add(p.weight, &p.logprob(squashed).0);
        }
        Ok(q)
    }

    /// Targets for `batch` using next-state noise `eps_next`.
    pub fn targets(&self, batch: &Batch, eps_next: ArrayView2<f64>) -> Result<Array1<f64>> {
        let next = self.actor.sample_batch(batch.next_obs.view(), eps_next)?;
        let q_min = self.target_value(batch.next_obs.view(), next.squashed.view())?;
        Ok(critic_target(
            &self.config,
            self.tau(),
            batch,
            &q_min,
            &next.logprob,
        ))
    }

    /// The `c` with `mean(y) = c` when every critic output is shifted by `c`.
    pub fn constant_fixed_point(&self, batch: &Batch, eps_next: ArrayView2<f64>) -> Result<f64> {
        let next = self.actor.sample_batch(batch.next_obs.view(), eps_next)?;
        let zeros = Array1::zeros(batch.len());
        let base = critic_target(&self.config, self.tau(), batch, &zeros, &next.logprob);
        let q = self.target_value(batch.next_obs.view(), next.squashed.view())?;
        let carry = batch.dones.mapv(|d| self.config.gamma * (1.0 - d));
        let mut q_now = self.critics.online_min(
            batch.obs.view(),
            batch.squashed_actions(self.actor.scale).view(),
        )?;
        q_now.scaled_add(self.prior_weight(), &batch.ref_logprob);
        // mean(base + carry (q + c)) = mean(q_now) + c
        let c = ((&base + &(&carry * &q)).mean().unwrap() - q_now.mean().unwrap())
            / (1.0 - carry.mean().unwrap());
        Ok(c)
    }

    /// One critic step, one actor step, the temperature step and the polyak
    /// update.
    pub fn update(&mut self, batch: &Batch, lr: f64, rng: &mut impl Rng) -> Result<UpdateStats> {
        let n = batch.len();
        let scale = self.actor.scale;
        let eps_next = normal_matrix(rng, n);
        if self.updates == 0 && self.config.critic_bias_init {
            let c = self.constant_fixed_point(batch, eps_next.view())?;
            self.critics.shift_outputs(c);
        }
        let mut y = self.targets(batch, eps_next.view())?;
        y.scaled_add(-self.prior_weight(), &batch.ref_logprob);
        let squashed = batch.squashed_actions(scale);
        let freeze = self.config.freeze_encoders;

        let mut critic_loss = 0.0;
        for k in 0..2 {
            let q = &mut self.critics.online[k];
            let (loss, g_enc, g_head) =
                critic_loss_and_grads(q, batch.obs.view(), squashed.view(), &y)?;
            critic_loss += loss / 2.0;
            let [enc_opt, head_opt] = &mut self.opt.critics[k];
            if !freeze {
                enc_opt.step(&mut q.encoder, &g_enc, lr);
            }
            head_opt.step(&mut q.head, &g_head, lr);
        }

        let tau = self.tau();
        let eps = normal_matrix(rng, n);
        let prior = self.prior(batch.obs.view())?;
        let step = actor_loss_and_grads(
            &self.actor,
            &self.critics.online,
            batch.obs.view(),
            eps.view(),
            tau,
            prior.as_ref(),
        )?;
        if !freeze {
            self.opt.actor[0].step(&mut self.actor.encoder, &step.encoder, lr);
        }
        self.opt.actor[1].step(&mut self.actor.head, &step.head, lr);

        let scale_term: f64 = scale.iter().map(|c| c.ln()).sum();
        let mean_norm_logprob = step.logprob.mean().unwrap_or(0.0) + scale_term;
        if self.config.uses_auto_entropy() {
            self.log_tau -= self.config.temperature_lr
                * temperature_grad(mean_norm_logprob, self.config.target_entropy);
        }
        self.critics.polyak(self.config.polyak);
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss: step.loss,
            tau: self.tau(),
            entropy: -mean_norm_logprob,
        })
    }
}
