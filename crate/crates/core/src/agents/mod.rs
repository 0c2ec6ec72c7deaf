//! Behavior-cloned teacher, replay buffer and the soft actor-critic family.

mod bc;
mod buffer;
mod config;
mod sac;
mod train;

use rand_chacha::ChaCha8Rng;

pub use bc::{
    bc_loss_and_grads, build_dataset, evaluate_nll, fit, nll_floor, recovery_label, train_bc,
    BcConfig, BcOutcome, BcSample,
};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use config::{reparameterize, SacConfig, Variant};
pub use sac::{
    actor_loss_and_grads, critic_loss_and_grads, critic_target, temperature_grad, ActorStep,
    CriticPair, Prior, SacAgent, UpdateStats,
};
pub use train::{log_to_csv, train_rl, write_log, LogRow, RlOutcome, RlSchedule};

use crate::error::Result;
use crate::evalkit::{Controller, StepContext};
use crate::kinematics::Action;
use crate::neuralnet::{GaussianPolicy, ReferencePolicy};

/// Deterministic: the squashed mean.
impl Controller for GaussianPolicy {
    fn act(&self, ctx: &StepContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Action> {
        self.mean_action(ctx.observation)
    }
}

impl Controller for ReferencePolicy {
    fn act(&self, ctx: &StepContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Action> {
        self.mean_action(ctx.observation)
    }
}
