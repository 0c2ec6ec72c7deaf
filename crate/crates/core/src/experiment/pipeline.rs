use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{CheckpointChoice, RunConfig};
use crate::agents::{train_bc, train_rl, write_log, BcOutcome, RlOutcome, SacConfig, Variant};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, Controller, EvalReport, Summary};
use crate::neuralnet::{load_json, save_json, GaussianPolicy, ReferencePolicy, CHECKPOINT_FORMAT};
use crate::scenario::{Scenario, ScenarioKind};
use crate::simulator::SimConfig;

pub const TEACHER_KIND: &str = "reference_policy";
pub const ACTOR_KIND: &str = "actor";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `count` generated scenes as `<kind>_<index>.json` and returns
/// their paths.
pub fn generate_files(
    kinds: &[ScenarioKind],
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    crate::scenario::generate_suite(kinds, count, seed)
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let path = out.join(format!("{i:03}_{}.json", s.id));
            s.save(&path)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BcRun {
    pub outcome: BcOutcome,
    pub checkpoint: PathBuf,
    pub hash: String,
    pub report: EvalReport,
}

/// Fits the teacher, saves it and scores it on the scenario suite.
pub fn run_bc(cfg: &RunConfig) -> Result<BcRun> {
    let cfg = cfg.resolved()?;
    let scenes = cfg.scenarios.load()?;
    create_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("config.toml"), &cfg.to_toml())?;
    let outcome = train_bc(&scenes, &cfg.sim, &cfg.bc, cfg.seed)?;
    let checkpoint = cfg.out_dir.join("teacher.json");
    let hash = save_json(TEACHER_KIND, &outcome.policy, &checkpoint)?;
    let mut log = String::from("epoch,loss\n");
    for (i, l) in outcome.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(&cfg.out_dir.join("bc_log.csv"), &log)?;
    let report = evaluate(
        &outcome.policy,
        &scenes,
        &cfg.sim,
        cfg.eval.seed,
        cfg.eval.parallel,
    )?;
    report.write(&cfg.out_dir)?;
    Ok(BcRun {
        outcome,
        checkpoint,
        hash,
        report,
    })
}

/// Sidecar record written next to an RL checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub format: String,
    pub variant: Variant,
    pub seed: u64,
    pub config: SacConfig,
    pub teacher_hash: String,
    pub checkpoint_hash: String,
    pub final_checkpoint_hash: String,
    pub best_step: u64,
    pub updates: u64,
}

#[derive(Debug, Clone)]
pub struct RlRun {
    pub outcome: RlOutcome,
    pub report: EvalReport,
    pub metadata: RunMetadata,
}

pub fn load_teacher(path: &Path) -> Result<ReferencePolicy> {
    load_json(TEACHER_KIND, path)
}

/// Fine-tunes from the teacher checkpoint, saves the best and final actors
/// and scores the configured one on the scenario suite.
pub fn run_rl(cfg: &RunConfig) -> Result<RlRun> {
    let cfg = cfg.resolved()?;
    let teacher_path = cfg.teacher_path();
    let teacher = load_teacher(&teacher_path)?;
    let teacher_hash = file_hash(&teacher_path)?;
    let scenes = cfg.scenarios.load()?;
    let validation = cfg.validation.load()?;
    create_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("config.toml"), &cfg.to_toml())?;
    let outcome = train_rl(
        &scenes,
        &validation,
        &cfg.sim,
        &cfg.rl,
        &cfg.schedule,
        &teacher,
        cfg.seed,
    )?;
    write_log(&outcome.log, cfg.out_dir.join("train_log.csv"))?;
    let checkpoint_hash = save_json(
        ACTOR_KIND,
        &outcome.best_actor,
        cfg.out_dir.join("actor.json"),
    )?;
    let final_checkpoint_hash = save_json(
        ACTOR_KIND,
        &outcome.agent.actor,
        cfg.out_dir.join("actor_final.json"),
    )?;
    let metadata = RunMetadata {
        format: CHECKPOINT_FORMAT.to_string(),
        variant: cfg.rl.variant,
        seed: cfg.seed,
        config: cfg.rl.clone(),
        teacher_hash,
        checkpoint_hash,
        final_checkpoint_hash,
        best_step: outcome.best_step,
        updates: outcome.updates,
    };
    let meta = serde_json::to_string_pretty(&metadata).expect("metadata is plain data") + "\n";
    write_text(&cfg.out_dir.join("metadata.json"), &meta)?;
    let actor = match cfg.eval.checkpoint {
        CheckpointChoice::Best => &outcome.best_actor,
        CheckpointChoice::Final => &outcome.agent.actor,
    };
    let report = evaluate(actor, &scenes, &cfg.sim, cfg.eval.seed, cfg.eval.parallel)?;
    report.write(&cfg.out_dir)?;
    Ok(RlRun {
        outcome,
        report,
        metadata,
    })
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::neuralnet::content_hash(&bytes))
}

/// A teacher or actor checkpoint, told apart by its kind label.
pub enum LoadedPolicy {
    Teacher(ReferencePolicy),
    Actor(GaussianPolicy),
}

impl LoadedPolicy {
    pub fn load(path: &Path) -> Result<Self> {
        match load_json::<ReferencePolicy>(TEACHER_KIND, path) {
            Ok(p) => Ok(LoadedPolicy::Teacher(p)),
            Err(Error::Checkpoint { .. }) => Ok(LoadedPolicy::Actor(load_json(ACTOR_KIND, path)?)),
            Err(e) => Err(e),
        }
    }

    pub fn controller(&self) -> &dyn Controller {
        match self {
            LoadedPolicy::Teacher(p) => p,
            LoadedPolicy::Actor(p) => p,
        }
    }
}

/// Scores a saved policy and writes `report.csv` and `report.json` to `out`.
pub fn run_eval(
    checkpoint: &Path,
    scenes: &[Arc<Scenario>],
    sim: &SimConfig,
    seed: u64,
    out: &Path,
) -> Result<EvalReport> {
    let policy = LoadedPolicy::load(checkpoint)?;
    let report = evaluate(policy.controller(), scenes, sim, seed, true)?;
    create_dir(out)?;
    report.write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    WH,
    WKl,
    ExklKlCoef,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::WH => "w_h",
            SweepAxis::WKl => "w_kl",
            SweepAxis::ExklKlCoef => "exkl_kl_coef",
        }
    }

    /// `base` with this axis set to `value`. The weight axes start from the
    /// weights implied by the base `tau` and `alpha` when none are given.
    pub fn apply(self, base: &SacConfig, value: f64) -> SacConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::ExklKlCoef => c.exkl_kl_coef = value,
            SweepAxis::WH | SweepAxis::WKl => {
                let (mut w_h, mut w_kl) = match (c.w_h, c.w_kl) {
                    (Some(h), Some(k)) => (h, k),
                    _ => ((1.0 - c.alpha) * c.tau, c.alpha * c.tau),
                };
                if self == SweepAxis::WH {
                    w_h = value;
                } else {
                    w_kl = value;
                }
                c.w_h = Some(w_h);
                c.w_kl = Some(w_kl);
            }
        }
        c
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::WH, SweepAxis::WKl, SweepAxis::ExklKlCoef]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sweep axis {s:?} (w_h, w_kl, exkl_kl_coef)"
                ))
            })
    }
}

/// One line of the combined sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub variant: Variant,
    pub tau: f64,
    pub alpha: f64,
    pub exkl_kl_coef: f64,
    pub best_step: u64,
    pub failure: usize,
    pub mu_ade: f64,
    pub mu_d2r: f64,
    pub d2r_ge_4m: usize,
    pub mu_cl: f64,
    pub cl_ge_1: usize,
    pub mu_cf: f64,
    pub mu_cs: f64,
    pub mu_cr: f64,
    pub mu_acc: f64,
    pub acc_ge_2: usize,
    pub mean_return: f64,
}

impl SweepRow {
    fn new(axis: SweepAxis, value: f64, rl: &SacConfig, best_step: u64, m: &Summary) -> Self {
        Self {
            axis,
            value,
            variant: rl.variant,
            tau: rl.tau,
            alpha: rl.alpha,
            exkl_kl_coef: rl.exkl_kl_coef,
            best_step,
            failure: m.failure,
            mu_ade: m.mu_ade,
            mu_d2r: m.mu_d2r,
            d2r_ge_4m: m.d2r_ge_4m,
            mu_cl: m.mu_cl,
            cl_ge_1: m.cl_ge_1,
            mu_cf: m.mu_cf,
            mu_cs: m.mu_cs,
            mu_cr: m.mu_cr,
            mu_acc: m.mu_acc,
            acc_ge_2: m.acc_ge_2,
            mean_return: m.mean_return,
        }
    }
}

/// The run directory of one sweep value.
pub fn sweep_dir(out: &Path, axis: SweepAxis, value: f64) -> PathBuf {
    out.join(format!("{axis}={value}"))
}

/// Trains and scores one run per value under `<out_dir>/<axis>=<value>`,
/// fitting a shared teacher first when none is configured, and writes
/// `sweep.csv`.
pub fn run_sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("a sweep needs at least one value".into()));
    }
    let base = base.resolved()?;
    create_dir(&base.out_dir)?;
    let teacher = match &base.teacher {
        Some(t) => t.clone(),
        None => {
            let bc = RunConfig {
                out_dir: base.out_dir.join("teacher"),
                ..base.clone()
            };
            run_bc(&bc)?.checkpoint
        }
    };
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let cfg = RunConfig {
            out_dir: sweep_dir(&base.out_dir, axis, value),
            teacher: Some(teacher.clone()),
            rl: axis.apply(&base.rl, value),
            ..base.clone()
        };
        let run = run_rl(&cfg)?;
        rows.push(SweepRow::new(
            axis,
            value,
            &run.metadata.config,
            run.outcome.best_step,
            &run.report.summary(),
        ));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    let path = base.out_dir.join("sweep.csv");
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
