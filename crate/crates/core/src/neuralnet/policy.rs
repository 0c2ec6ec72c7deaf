use std::f64::consts::LN_2;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Dense, Grads, Mlp, Tape};
use crate::error::{Error, Result};
use crate::kinematics::Action;

pub const ACTION_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// log sigma of the reference policy in every action dimension.
pub const REF_LOG_STD: f64 = -1.5;
/// Floor applied to reference log-densities.
pub const REF_LOGPROB_FLOOR: f64 = -10.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn gaussian_logpdf(x: f64, mu: f64, log_std: f64) -> f64 {
    let z = (x - mu) * (-log_std).exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log1m_tanh2(u: f64) -> f64 {
    2.0 * (LN_2 - u.abs() - (-2.0 * u.abs()).exp().ln_1p())
}

/// Log-density of `a = scale * tanh(u)` when `u ~ N(mu, exp(log_std)^2)`.
pub fn squashed_logprob(u: &[f64], mu: &[f64], log_std: &[f64], scale: &[f64]) -> f64 {
    u.iter()
        .zip(mu)
        .zip(log_std)
        .zip(scale)
        .map(|(((&u, &m), &l), &c)| gaussian_logpdf(u, m, l) - log1m_tanh2(u) - c.ln())
        .sum()
}

fn clamp_log_std(l: f64) -> f64 {
    l.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

fn row(x: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, x.len()), x).expect("row view")
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Hidden widths for one encoder-plus-head network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetShape {
    pub encoder: Vec<usize>,
    pub head: Vec<usize>,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            encoder: vec![128, 128],
            head: vec![64, 64],
        }
    }
}

impl NetShape {
    fn encoder_sizes(&self, input: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.encoder.iter().copied())
            .collect()
    }

    fn feature_dim(&self, input: usize) -> usize {
        self.encoder.last().copied().unwrap_or(input)
    }

    fn head_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.head.iter().copied())
            .chain(std::iter::once(output))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.encoder.contains(&0) || self.head.contains(&0) {
            return Err(Error::Config(
                "network widths must be positive and the encoder non-empty".into(),
            ));
        }
        Ok(())
    }
}

/// Behavioral-cloning teacher: `mu0(s) = tanh(f(s))` in action units of
/// `scale`, fixed sigma `exp(REF_LOG_STD)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePolicy {
    pub encoder: Mlp,
    pub head: Mlp,
    pub scale: [f64; 2],
}

impl ReferencePolicy {
    pub fn new(
        obs_dim: usize,
        shape: &NetShape,
        scale: [f64; 2],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        shape.validate()?;
        let encoder = Mlp::new(&shape.encoder_sizes(obs_dim), Activation::Tanh, rng);
        let head = Mlp::new(
            &shape.head_sizes(shape.feature_dim(obs_dim), ACTION_DIM),
            Activation::Identity,
            rng,
        );
        Ok(Self {
            encoder,
            head,
            scale,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Pre-tanh mean, one row per observation.
    pub fn logits(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.head.forward(self.encoder.forward(obs)?.view())
    }

    /// Mean action divided by `scale`.
    pub fn mean_normalized(&self, obs: &[f64]) -> Result<[f64; 2]> {
        let f = self.logits(row(obs))?;
        Ok([f[[0, 0]].tanh(), f[[0, 1]].tanh()])
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Action> {
        let m = self.mean_normalized(obs)?;
        Ok(Action::new(m[0] * self.scale[0], m[1] * self.scale[1]))
    }

    /// Unsquashed Gaussian log-density of `action / scale`, floored at
    /// `REF_LOGPROB_FLOOR`.
    pub fn ref_logprob(&self, obs: &[f64], action: Action) -> Result<f64> {
        Ok(self
            .ref_logprob_unclamped(obs, action)?
            .max(REF_LOGPROB_FLOOR))
    }

    pub fn ref_logprob_unclamped(&self, obs: &[f64], action: Action) -> Result<f64> {
        let mu = self.mean_normalized(obs)?;
        Ok(ref_density(mu, action.to_array(), self.scale))
    }

    /// `tanh` of the logits: the means in units of `scale`.
    pub fn normalized_means(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.logits(obs)?.mapv(f64::tanh))
    }

    /// Batched `ref_logprob` over rows of `obs` and `actions`.
    pub fn ref_logprob_batch(
        &self,
        obs: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        let f = self.logits(obs)?;
        Ok(Array1::from_iter(
            f.outer_iter().zip(actions.outer_iter()).map(|(f, a)| {
                ref_density([f[0].tanh(), f[1].tanh()], [a[0], a[1]], self.scale)
                    .max(REF_LOGPROB_FLOOR)
            }),
        ))
    }
}

/// Floored reference log-density of the normalized action `x` under means
/// `mu`, and its gradient in `x` (zero where the floor binds).
pub fn ref_logprob_normalized(mu: [f64; 2], x: [f64; 2]) -> (f64, [f64; 2]) {
    let lp: f64 = (0..ACTION_DIM)
        .map(|i| gaussian_logpdf(x[i], mu[i], REF_LOG_STD))
        .sum();
    if lp < REF_LOGPROB_FLOOR {
        return (REF_LOGPROB_FLOOR, [0.0; 2]);
    }
    let inv_var = (-2.0 * REF_LOG_STD).exp();
    (lp, [-(x[0] - mu[0]) * inv_var, -(x[1] - mu[1]) * inv_var])
}

fn ref_density(mu: [f64; 2], action: [f64; 2], scale: [f64; 2]) -> f64 {
    (0..ACTION_DIM)
        .map(|i| gaussian_logpdf(action[i] / scale[i], mu[i], REF_LOG_STD))
        .sum()
}

/// Diagonal Gaussian over pre-squash actions; emitted actions are
/// `scale * tanh(u)`. The head returns `[mu, log_std]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub encoder: Mlp,
    pub head: Mlp,
    pub scale: [f64; 2],
}

/// A reparameterized batch draw together with what its backward pass needs.
#[derive(Debug, Clone)]
pub struct PolicySample {
    enc_tape: Tape,
    head_tape: Tape,
    log_std_clamped: Array2<bool>,
    pub eps: Array2<f64>,
    pub mu: Array2<f64>,
    pub log_std: Array2<f64>,
    pub u: Array2<f64>,
    /// `tanh(u)`, the action divided by `scale`.
    pub squashed: Array2<f64>,
    pub logprob: Array1<f64>,
}

impl PolicySample {
    pub fn actions(&self, scale: [f64; 2]) -> Array2<f64> {
        let mut a = self.squashed.clone();
        for (i, c) in scale.iter().enumerate() {
            a.column_mut(i).mapv_inplace(|v| v * c);
        }
        a
    }
}

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        shape: &NetShape,
        scale: [f64; 2],
        init_log_std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        shape.validate()?;
        let encoder = Mlp::new(&shape.encoder_sizes(obs_dim), Activation::Tanh, rng);
        let mut head = Mlp::new(
            &shape.head_sizes(shape.feature_dim(obs_dim), 2 * ACTION_DIM),
            Activation::Identity,
            rng,
        );
        let last = head.layers_mut().last_mut().unwrap();
        last.w.slice_mut(s![.., ACTION_DIM..]).fill(0.0);
        last.b.slice_mut(s![ACTION_DIM..]).fill(init_log_std);
        Ok(Self {
            encoder,
            head,
            scale,
        })
    }

    /// Copies the teacher; the mean rows reproduce its pre-tanh output and
    /// the log-std rows start constant at `init_log_std`.
    pub fn from_reference(reference: &ReferencePolicy, init_log_std: f64) -> Self {
        let mut layers: Vec<Dense> = reference.head.layers().to_vec();
        let last = layers.last_mut().unwrap();
        let rows = last.w.nrows();
        let mut w = Array2::zeros((rows, 2 * ACTION_DIM));
        w.slice_mut(s![.., ..ACTION_DIM]).assign(&last.w);
        let mut b = Array1::from_elem(2 * ACTION_DIM, init_log_std);
        b.slice_mut(s![..ACTION_DIM]).assign(&last.b);
        *last = Dense { w, b };
        Self {
            encoder: reference.encoder.clone(),
            head: Mlp::from_layers(layers, Activation::Identity)
                .expect("same widths as the teacher"),
            scale: reference.scale,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// `(mu, clamped log_std)`, one row per observation.
    pub fn distribution(&self, obs: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = self.head.forward(self.encoder.forward(obs)?.view())?;
        let mu = out.slice(s![.., ..ACTION_DIM]).to_owned();
        let log_std = out.slice(s![.., ACTION_DIM..]).mapv(clamp_log_std);
        Ok((mu, log_std))
    }

    /// `scale * tanh(mu)`.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Action> {
        let (mu, _) = self.distribution(row(obs))?;
        Ok(Action::new(
            self.scale[0] * mu[[0, 0]].tanh(),
            self.scale[1] * mu[[0, 1]].tanh(),
        ))
    }

    pub fn sample_and_logprob(&self, obs: &[f64], rng: &mut impl Rng) -> Result<(Action, f64)> {
        let (mu, log_std) = self.distribution(row(obs))?;
        let eps = [standard_normal(rng), standard_normal(rng)];
        Ok(self.squash_one(mu.row(0), log_std.row(0), eps))
    }

    /// Draw for a given standard-normal `eps`.
    pub fn squash_one(
        &self,
        mu: ArrayView1<f64>,
        log_std: ArrayView1<f64>,
        eps: [f64; 2],
    ) -> (Action, f64) {
        let u = [
            mu[0] + log_std[0].exp() * eps[0],
            mu[1] + log_std[1].exp() * eps[1],
        ];
        let lp = squashed_logprob(&u, &[mu[0], mu[1]], &[log_std[0], log_std[1]], &self.scale);
        (
            Action::new(self.scale[0] * u[0].tanh(), self.scale[1] * u[1].tanh()),
            lp,
        )
    }

    /// Log-density of an in-range action; `None` on the boundary where the
    /// squash cannot be inverted.
    pub fn log_prob(&self, obs: &[f64], action: Action) -> Result<Option<f64>> {
        let (mu, log_std) = self.distribution(row(obs))?;
        let a = action.to_array();
        let mut u = [0.0; 2];
        for i in 0..ACTION_DIM {
            let t = a[i] / self.scale[i];
            if t.abs() >= 1.0 {
                return Ok(None);
            }
            u[i] = t.atanh();
        }
        Ok(Some(squashed_logprob(
            &u,
            &[mu[[0, 0]], mu[[0, 1]]],
            &[log_std[[0, 0]], log_std[[0, 1]]],
            &self.scale,
        )))
    }

    /// Reparameterized draw `u = mu + sigma * eps` for a batch.
    pub fn sample_batch(&self, obs: ArrayView2<f64>, eps: ArrayView2<f64>) -> Result<PolicySample> {
        if eps.dim() != (obs.nrows(), ACTION_DIM) {
            return Err(Error::DimensionMismatch {
                expected: ACTION_DIM,
                actual: eps.ncols(),
            });
        }
        let enc_tape = self.encoder.forward_tape(obs)?;
        let head_tape = self.head.forward_tape(enc_tape.output().view())?;
        let out = head_tape.output();
        let mu = out.slice(s![.., ..ACTION_DIM]).to_owned();
        let raw = out.slice(s![.., ACTION_DIM..]);
        let log_std_clamped = raw.mapv(|l| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&l));
        let log_std = raw.mapv(clamp_log_std);
        let u = &mu + &(log_std.mapv(f64::exp) * eps);
        let squashed = u.mapv(f64::tanh);
        let scale_term: f64 = self.scale.iter().map(|c| c.ln()).sum();
        let logprob = Array1::from_iter((0..obs.nrows()).map(|r| {
            (0..ACTION_DIM)
                .map(|i| {
                    let e = eps[[r, i]];
                    -0.5 * e * e - log_std[[r, i]] - HALF_LN_2PI - log1m_tanh2(u[[r, i]])
                })
                .sum::<f64>()
                - scale_term
        }));
        Ok(PolicySample {
            enc_tape,
            head_tape,
            log_std_clamped,
            eps: eps.to_owned(),
            mu,
            log_std,
            u,
            squashed,
            logprob,
        })
    }

    /// Parameter gradients of a loss given its gradients with respect to the
    /// squashed actions (`tanh(u)`, per row) and the log-probabilities.
    pub fn backward(
        &self,
        sample: &PolicySample,
        d_squashed: ArrayView2<f64>,
        d_logprob: ArrayView1<f64>,
    ) -> Result<(Grads, Grads)> {
        let n = sample.u.nrows();
        let mut d_out = Array2::zeros((n, 2 * ACTION_DIM));
        for r in 0..n {
            for i in 0..ACTION_DIM {
                let t = sample.squashed[[r, i]];
                let sigma_eps = sample.log_std[[r, i]].exp() * sample.eps[[r, i]];
                let dt_du = 1.0 - t * t;
                // logprob depends on u through -ln(1 - tanh^2 u) and on log_std directly.
                let d_u = d_squashed[[r, i]] * dt_du + d_logprob[r] * 2.0 * t;
                d_out[[r, i]] = d_u;
                d_out[[r, ACTION_DIM + i]] = if sample.log_std_clamped[[r, i]] {
                    0.0
                } else {
                    d_u * sigma_eps - d_logprob[r]
                };
            }
        }
        let (g_head, d_feat) = self.head.backward_tape(&sample.head_tape, d_out.view())?;
        let g_enc = self
            .encoder
            .backward_params(&sample.enc_tape, d_feat.view())?;
        Ok((g_enc, g_head))
    }
}

/// Monte-Carlo entropy estimate `-mean log pi` for one state over fixed draws.
pub fn entropy_estimate(mu: [f64; 2], log_std: [f64; 2], scale: [f64; 2], eps: &[[f64; 2]]) -> f64 {
    let total: f64 = eps
        .iter()
        .map(|e| {
            let u = [
                mu[0] + log_std[0].exp() * e[0],
                mu[1] + log_std[1].exp() * e[1],
            ];
            squashed_logprob(&u, &mu, &log_std, &scale)
        })
        .sum();
    -total / eps.len() as f64
}

/// State-action value network. The action enters after the encoder,
/// divided by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub encoder: Mlp,
    pub head: Mlp,
}

/// Forward record for `QNetwork::backward`.
#[derive(Debug, Clone)]
pub struct QTape {
    enc: Option<Tape>,
    head: Tape,
}

impl QTape {
    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.head.output().column(0)
    }
}

impl QNetwork {
    pub fn new(obs_dim: usize, shape: &NetShape, rng: &mut impl Rng) -> Result<Self> {
        shape.validate()?;
        let encoder = Mlp::new(&shape.encoder_sizes(obs_dim), Activation::Tanh, rng);
        let head = Mlp::new(
            &shape.head_sizes(shape.feature_dim(obs_dim) + ACTION_DIM, 1),
            Activation::Identity,
            rng,
        );
        Ok(Self { encoder, head })
    }

    pub fn features(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encoder.forward(obs)
    }

    fn head_input(features: ArrayView2<f64>, squashed: ArrayView2<f64>) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &[features, squashed]).expect("same batch size")
    }

    /// Values for actions given as `action / scale`.
    pub fn q(&self, obs: ArrayView2<f64>, squashed: ArrayView2<f64>) -> Result<Array1<f64>> {
        let f = self.encoder.forward(obs)?;
        self.q_from_features(f.view(), squashed)
    }

    pub fn q_from_features(
        &self,
        features: ArrayView2<f64>,
        squashed: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        let out = self
            .head
            .forward(Self::head_input(features, squashed).view())?;
        Ok(out.column(0).to_owned())
    }

    pub fn forward_tape(&self, obs: ArrayView2<f64>, squashed: ArrayView2<f64>) -> Result<QTape> {
        let enc = self.encoder.forward_tape(obs)?;
        let head = self
            .head
            .forward_tape(Self::head_input(enc.output().view(), squashed).view())?;
        Ok(QTape {
            enc: Some(enc),
            head,
        })
    }

    /// Tape over precomputed encoder features; `backward` then returns no
    /// encoder gradients.
    pub fn forward_tape_from_features(
        &self,
        features: ArrayView2<f64>,
        squashed: ArrayView2<f64>,
    ) -> Result<QTape> {
        let head = self
            .head
            .forward_tape(Self::head_input(features, squashed).view())?;
        Ok(QTape { enc: None, head })
    }

    /// Returns `(encoder grads, head grads, d loss / d squashed action)` for
    /// per-row value gradients `d_q`.
    pub fn backward(
        &self,
        tape: &QTape,
        d_q: ArrayView1<f64>,
    ) -> Result<(Option<Grads>, Grads, Array2<f64>)> {
        let d_out = d_q.insert_axis(Axis(1));
        let (g_head, d_in) = self.head.backward_tape(&tape.head, d_out)?;
        let feat = d_in.ncols() - ACTION_DIM;
        let d_action = d_in.slice(s![.., feat..]).to_owned();
        let g_enc = match &tape.enc {
            Some(enc) => Some(
                self.encoder
                    .backward_params(enc, d_in.slice(s![.., ..feat]))?,
            ),
            None => None,
        };
        Ok((g_enc, g_head, d_action))
    }
}
