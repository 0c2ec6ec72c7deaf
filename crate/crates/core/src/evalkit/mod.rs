//! Closed-loop metrics: ADE, distance to reference, collision taxonomy,
//! discomfort and the per-scene failure flag.

mod report;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::polyline_distance;
use crate::kinematics::{inverse_action, to_local, Action, EgoState};
use crate::scenario::Scenario;
use crate::simulator::{CollisionClass, DrivingEnv, SimConfig, StepOutcome};

pub use report::{EvalReport, Summary};

/// Off-reference distance that counts as an event, meters (strictly above).
pub const D2R_THRESHOLD: f64 = 4.0;
/// Discomfort threshold, m/s² (inclusive).
pub const ACCEL_THRESHOLD: f64 = 2.0;
/// Square of the frame rate, for m/frame² to m/s².
const FRAMES_PER_SECOND_SQ: f64 = 100.0;

pub fn to_mps2(accel_per_frame: f64) -> f64 {
    accel_per_frame * FRAMES_PER_SECOND_SQ
}

/// Mean per-frame centroid distance.
pub fn ade(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .sum();
    Ok(total / pred.len() as f64)
}

/// Distance from `p` to the closest segment of the reference polyline.
pub fn d2r(p: [f64; 2], reference: &[[f64; 2]]) -> f64 {
    polyline_distance(p, reference)
}

/// Fraction of accelerations (m/s²) with magnitude at or above the threshold.
pub fn discomfort(accels_mps2: &[f64]) -> f64 {
    if accels_mps2.is_empty() {
        return 0.0;
    }
    let n = accels_mps2
        .iter()
        .filter(|a| a.abs() >= ACCEL_THRESHOLD)
        .count();
    n as f64 / accels_mps2.len() as f64
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneResult {
    pub scene: String,
    pub frames: usize,
    pub ade: f64,
    /// Mean per-frame distance to the reference path.
    pub d2r_mean: f64,
    pub d2r_max: f64,
    pub d2r_event: bool,
    /// Frames with contact, total and by class.
    pub collision_frames: usize,
    pub front_frames: usize,
    pub side_frames: usize,
    pub rear_frames: usize,
    pub cl_event: bool,
    pub cf_event: bool,
    pub cs_event: bool,
    pub cr_event: bool,
    pub discomfort_rate: f64,
    pub acc_event: bool,
    pub failure: bool,
    pub episode_return: f64,
}

/// Folds step outcomes of one rollout into a `SceneResult`.
#[derive(Debug, Clone)]
pub struct SceneAccumulator {
    scene: String,
    reference: Vec<[f64; 2]>,
    driven: Vec<[f64; 2]>,
    logged: Vec<[f64; 2]>,
    d2r: Vec<f64>,
    accels: Vec<f64>,
    classes: [usize; 3],
    episode_return: f64,
}

impl SceneAccumulator {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            scene: scenario.id.clone(),
            reference: scenario.ego_positions(),
            driven: Vec::new(),
            logged: Vec::new(),
            d2r: Vec::new(),
            accels: Vec::new(),
            classes: [0; 3],
            episode_return: 0.0,
        }
    }

    pub fn record(&mut self, out: &StepOutcome) {
        let p = [out.ego.pose.x, out.ego.pose.y];
        self.driven.push(p);
        self.logged.push(self.reference[out.frame]);
        self.d2r.push(d2r(p, &self.reference));
        self.accels.push(to_mps2(out.applied.accel));
        self.record_collision(out.collision.map(|c| c.class));
        self.episode_return += out.reward;
    }

    /// Counts one frame's contact, if any.
    pub fn record_collision(&mut self, class: Option<CollisionClass>) {
        if let Some(c) = class {
            let i = match c {
                CollisionClass::Front => 0,
                CollisionClass::Side => 1,
                CollisionClass::Rear => 2,
            };
            self.classes[i] += 1;
        }
    }

    pub fn finish(self) -> SceneResult {
        let ade = ade(&self.driven, &self.logged).expect("pushed in pairs");
        let frames = self.driven.len();
        let d2r_max = self.d2r.iter().copied().fold(0.0, f64::max);
        let d2r_mean = if frames == 0 {
            0.0
        } else {
            self.d2r.iter().sum::<f64>() / frames as f64
        };
        let [front, side, rear] = self.classes;
        let collision_frames = front + side + rear;
        let discomfort_rate = discomfort(&self.accels);
        let d2r_event = d2r_max > D2R_THRESHOLD;
        let cl_event = collision_frames >= 1;
        SceneResult {
            scene: self.scene,
            frames,
            ade,
            d2r_mean,
            d2r_max,
            d2r_event,
            collision_frames,
            front_frames: front,
            side_frames: side,
            rear_frames: rear,
            cl_event,
            cf_event: front >= 1,
            cs_event: side >= 1,
            cr_event: rear >= 1,
            discomfort_rate,
            acc_event: discomfort_rate > 0.0,
            failure: d2r_event || cl_event,
            episode_return: self.episode_return,
        }
    }
}

/// What a controller sees at each step.
pub struct StepContext<'a> {
    pub observation: &'a [f64],
    pub scenario: &'a Scenario,
    pub frame: usize,
    pub ego: EgoState,
}

pub trait Controller: Sync {
    fn act(&self, ctx: &StepContext<'_>, rng: &mut ChaCha8Rng) -> Result<Action>;
}

/// Tracks the log exactly by inverting the dynamics from the current state.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertReplay;

impl Controller for ExpertReplay {
    fn act(&self, ctx: &StepContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Action> {
        let next = ctx.scenario.ego_log[ctx.frame + 1];
        inverse_action(&ctx.ego, &to_local(&ctx.ego.pose, &next))
    }
}

/// Always outputs the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantAction(pub Action);

impl Controller for ConstantAction {
    fn act(&self, _ctx: &StepContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Action> {
        Ok(self.0)
    }
}

/// Full-segment rollout from frame 0, no intervention.
pub fn rollout(
    controller: &dyn Controller,
    scenario: Arc<Scenario>,
    sim: &SimConfig,
    seed: u64,
) -> Result<SceneResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = SceneAccumulator::new(&scenario);
    let mut env = DrivingEnv::new(scenario, *sim);
    let mut obs = env.reset(0)?;
    loop {
        let ctx = StepContext {
            observation: &obs,
            scenario: env.scenario(),
            frame: env.frame().expect("reset"),
            ego: env.ego().expect("reset"),
        };
        let action = controller.act(&ctx, &mut rng)?;
        let out = env.step(action)?;
        acc.record(&out);
        if out.done {
            break;
        }
        obs = out.observation;
    }
    Ok(acc.finish())
}

/// Evaluates on every scenario; scene `i` draws from seed `seed + i`.
pub fn evaluate(
    controller: &dyn Controller,
    scenarios: &[Arc<Scenario>],
    sim: &SimConfig,
    seed: u64,
    parallel: bool,
) -> Result<EvalReport> {
    let run =
        |(i, s): (usize, &Arc<Scenario>)| rollout(controller, s.clone(), sim, seed + i as u64);
    let scenes = if parallel {
        scenarios
            .par_iter()
            .enumerate()
            .map(run)
            .collect::<Result<Vec<_>>>()?
    } else {
        scenarios
            .iter()
            .enumerate()
            .map(run)
            .collect::<Result<Vec<_>>>()?
    };
    Ok(EvalReport::new(scenes))
}
