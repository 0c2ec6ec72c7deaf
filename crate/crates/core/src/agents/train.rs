use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, Transition};
use super::config::SacConfig;
use super::sac::SacAgent;
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalReport};
use crate::neuralnet::{GaussianPolicy, ReferencePolicy};
use crate::scenario::Scenario;
use crate::simulator::{DrivingEnv, SimConfig};

/// Length of a fine-tuning run and how often it is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSchedule {
    /// Environment steps.
    pub total_steps: u64,
    /// Environment steps between validation rows; 0 scores only step 0.
    pub eval_interval: u64,
    /// Base seed of validation rollouts.
    pub eval_seed: u64,
}

impl Default for RlSchedule {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            eval_interval: 1_000,
            eval_seed: 10_000,
        }
    }
}

impl RlSchedule {
    /// Steps at which a validation row is written.
    pub fn eval_steps(&self) -> Vec<u64> {
        if self.eval_interval == 0 {
            return vec![0];
        }
        (0..=self.total_steps / self.eval_interval)
            .map(|k| k * self.eval_interval)
            .collect()
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub mean_return: f64,
    pub failures: usize,
    pub collisions_f: usize,
    pub collisions_s: usize,
    pub collisions_r: usize,
    pub d2r_events: usize,
    pub discomfort_rate: f64,
    pub lr: f64,
    pub tau_eff: f64,
}

impl LogRow {
    fn from_report(step: u64, report: &EvalReport, lr: f64, tau_eff: f64) -> Self {
        let s = report.summary();
        let sum = |f: fn(&crate::evalkit::SceneResult) -> usize| report.scenes.iter().map(f).sum();
        Self {
            step,
            mean_return: s.mean_return,
            failures: s.failure,
            collisions_f: sum(|r| r.front_frames),
            collisions_s: sum(|r| r.side_frames),
            collisions_r: sum(|r| r.rear_frames),
            d2r_events: s.d2r_ge_4m,
            discomfort_rate: s.mu_acc,
            lr,
            tau_eff,
        }
    }

    /// Lowest failures, then lowest discomfort.
    fn beats(&self, other: &LogRow) -> bool {
        (self.failures, self.discomfort_rate) < (other.failures, other.discomfort_rate)
    }
}

pub fn log_to_csv(rows: &[LogRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_log(rows: &[LogRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, log_to_csv(rows)?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    pub agent: SacAgent,
    /// Actor with the best validation row.
    pub best_actor: GaussianPolicy,
    pub best_step: u64,
    pub log: Vec<LogRow>,
    pub final_report: EvalReport,
    pub best_report: EvalReport,
    pub updates: u64,
}

struct Episode {
    env: DrivingEnv,
    obs: Vec<f64>,
}

fn start_episode(
    scenarios: &[Arc<Scenario>],
    sim: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let s = scenarios[rng.random_range(0..scenarios.len())].clone();
    let last = s.num_frames.saturating_sub(sim.min_horizon.max(2));
    let start = rng.random_range(0..=last);
    let mut env = DrivingEnv::new(s, *sim);
    let obs = env.reset(start)?;
    Ok(Episode { env, obs })
}

/// Fine-tunes a teacher-initialized actor on `scenarios` and scores it on
/// `validation` at every row of `schedule`.
pub fn train_rl(
    scenarios: &[Arc<Scenario>],
    validation: &[Arc<Scenario>],
    sim: &SimConfig,
    config: &SacConfig,
    schedule: &RlSchedule,
    reference: &ReferencePolicy,
    seed: u64,
) -> Result<RlOutcome> {
    if scenarios.is_empty() || validation.is_empty() {
        return Err(Error::Config(
            "train_rl needs training and validation scenarios".into(),
        ));
    }
    if reference.obs_dim() != sim.observation.dim() {
        return Err(Error::DimensionMismatch {
            expected: sim.observation.dim(),
            actual: reference.obs_dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = SacAgent::new(config, reference, &mut rng)?;
    let cfg = agent.config.clone();
    let total = schedule.total_steps;
    let scale_term: f64 = sim.limits.scale().iter().map(|c| c.ln()).sum();

    let score = |agent: &SacAgent, step: u64| -> Result<(LogRow, EvalReport)> {
        let report = evaluate(&agent.actor, validation, sim, schedule.eval_seed, true)?;
        let row = LogRow::from_report(step, &report, cfg.lr_at(step, total), agent.tau());
        Ok((row, report))
    };

    let eval_steps = schedule.eval_steps();
    let (row0, report0) = score(&agent, 0)?;
    let mut log = vec![row0];
    let mut best = (row0, agent.actor.clone(), report0.clone());
    let mut last_report = report0;
    let mut next_eval = eval_steps.iter().skip(1).copied().peekable();

    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut ep = start_episode(scenarios, sim, &mut rng)?;
    for step in 1..=total {
        let (action, logprob) = agent.actor.sample_and_logprob(&ep.obs, &mut rng)?;
        let ref_logprob = reference.ref_logprob(&ep.obs, action)?;
        let out = ep.env.step(action)?;
        let done = out.done;
        buffer.push(Transition {
            obs: std::mem::take(&mut ep.obs),
            action: out.applied.to_array(),
            reward: out.reward,
            next_obs: out.observation.clone(),
            done,
            ref_logprob,
            behavior_logprob: logprob + scale_term,
        });
        ep.obs = out.observation;
        if done {
            ep = start_episode(scenarios, sim, &mut rng)?;
        }

        if step >= cfg.warmup_steps
            && step % cfg.update_every == 0
            && buffer.len() >= cfg.batch_size
        {
            let batch = buffer.sample(&mut rng, cfg.batch_size)?;
            agent.update(&batch, cfg.lr_at(step, total), &mut rng)?;
        }

        if next_eval.peek() == Some(&step) {
            next_eval.next();
            let (row, report) = score(&agent, step)?;
            if row.beats(&best.0) {
                best = (row, agent.actor.clone(), report.clone());
            }
            log.push(row);
            last_report = report;
        }
    }

    let final_report = if log.last().map(|r| r.step) == Some(total) {
        last_report
    } else {
        evaluate(&agent.actor, validation, sim, schedule.eval_seed, true)?
    };
    Ok(RlOutcome {
        updates: agent.updates,
        best_step: best.0.step,
        best_actor: best.1,
        best_report: best.2,
        agent,
        log,
        final_report,
    })
}
