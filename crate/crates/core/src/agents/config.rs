use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::NetShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Maximum-entropy actor-critic.
    Sac,
    /// SAC with a KL-to-teacher penalty subtracted from the reward.
    Exkl,
    /// SAC with the scaled teacher log-density added inside the TD target.
    Imkl,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Sac, Variant::Exkl, Variant::Imkl];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Sac => "sac",
            Variant::Exkl => "exkl",
            Variant::Imkl => "imkl",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (sac, exkl, imkl)")))
    }
}

/// Entropy weight `w_h` and KL weight `w_kl` to `(tau, alpha)`.
pub fn reparameterize(w_h: f64, w_kl: f64) -> Result<(f64, f64)> {
    if !(w_h >= 0.0 && w_kl >= 0.0 && w_h + w_kl > 0.0) {
        return Err(Error::Config(format!(
            "w_h and w_kl must be non-negative with a positive sum, got {w_h} and {w_kl}"
        )));
    }
    let tau = w_h + w_kl;
    Ok((tau, w_kl / tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub variant: Variant,
    pub gamma: f64,
    pub polyak: f64,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub buffer_capacity: usize,
    /// Entropy temperature; for `imkl` also scales the teacher term.
    pub tau: f64,
    /// Share of `tau` spent on the KL term (`imkl`).
    pub alpha: f64,
    /// When both are set they replace `tau` and `alpha`.
    pub w_h: Option<f64>,
    pub w_kl: Option<f64>,
    pub exkl_kl_coef: f64,
    /// Tune the temperature toward `target_entropy` (`sac` and `exkl` only).
    pub auto_entropy: bool,
    /// Target entropy of the action divided by its bound.
    pub target_entropy: f64,
    pub temperature_lr: f64,
    /// Environment steps per gradient step.
    pub update_every: u64,
    /// Environment steps before the first gradient step.
    pub warmup_steps: u64,
    pub init_log_std: f64,
    /// Keep every encoder at its teacher initialization.
    pub freeze_encoders: bool,
    /// Before the first gradient step, shift every critic output by the
    /// constant that solves the backup on that batch.
    pub critic_bias_init: bool,
    /// `imkl` critics output a learned residual plus
    /// `alpha * tau * ln pi_0(a|s)`, the teacher term of the reward.
    pub critic_prior: bool,
    pub network: NetShape,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Imkl,
            gamma: 0.8,
            polyak: 0.995,
            batch_size: 256,
            lr_start: 3e-5,
            lr_end: 3e-6,
            buffer_capacity: 100_000,
            tau: 1.2,
            alpha: 0.4,
            w_h: None,
            w_kl: None,
            exkl_kl_coef: 0.3,
            auto_entropy: true,
            target_entropy: -2.0,
            temperature_lr: 3e-4,
            update_every: 4,
            warmup_steps: 1000,
            init_log_std: -1.5,
            freeze_encoders: false,
            critic_bias_init: true,
            critic_prior: true,
            network: NetShape::default(),
        }
    }
}

impl SacConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    /// Applies the `(w_h, w_kl)` form if present and checks ranges.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        match (c.w_h, c.w_kl) {
            (Some(h), Some(k)) => (c.tau, c.alpha) = reparameterize(h, k)?,
            (None, None) => {}
            _ => return Err(Error::Config("w_h and w_kl must be given together".into())),
        }
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(c.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(0.0..=1.0).contains(&c.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(c.gamma > 0.0 && c.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&c.polyak) {
            return bad("polyak must lie in [0, 1]");
        }
        if c.batch_size == 0 || c.buffer_capacity < c.batch_size {
            return bad("batch_size must be positive and fit in the buffer");
        }
        if c.update_every == 0 {
            return bad("update_every must be at least 1");
        }
        if !(c.lr_start >= 0.0 && c.lr_end >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        Ok(c)
    }

    pub fn uses_auto_entropy(&self) -> bool {
        self.auto_entropy && self.variant != Variant::Imkl
    }

    /// Linear schedule from `lr_start` at step 0 to `lr_end` at `total`.
    pub fn lr_at(&self, step: u64, total: u64) -> f64 {
        if total == 0 {
            return self.lr_start;
        }
        let f = (step.min(total) as f64) / total as f64;
        self.lr_start * (1.0 - f) + self.lr_end * f
    }
}
