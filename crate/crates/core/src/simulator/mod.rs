//! Log-playback closed-loop environment.
//!
//! The ego is driven by the policy through the unicycle model; every other
//! agent replays its logged track regardless of what the ego does. Episodes
//! always run to the last frame of the scene.

mod collision;
mod observation;
mod reward;
mod trace;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use crate::kinematics::{step_forward, Action, EgoState, KinematicLimits, Pose};
use crate::scenario::Scenario;

pub use collision::{detect_collision, CollisionClass, CollisionEvent};
pub use observation::{build_observation, nearest_agents, ObservationConfig, SceneIndex};
pub use reward::{compute_reward, RewardTerms, RewardWeights};
pub use trace::TraceWriter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub limits: KinematicLimits,
    pub reward: RewardWeights,
    pub observation: ObservationConfig,
    /// Minimum number of frames an episode must be able to run.
    pub min_horizon: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            limits: KinematicLimits::default(),
            reward: RewardWeights::default(),
            observation: ObservationConfig::default(),
            min_horizon: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        if self.min_horizon < 1 {
            return Err(Error::Config("min_horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub reward_terms: RewardTerms,
    pub collision: Option<CollisionEvent>,
    pub done: bool,
    pub ego: EgoState,
    /// The action after clamping to the kinematic limits.
    pub applied: Action,
    pub frame: usize,
}

struct Episode {
    start: usize,
    frame: usize,
    ego: EgoState,
    /// Ego poses indexed by frame; log poses before `start`.
    poses: Vec<Pose>,
    done: bool,
}

pub struct DrivingEnv {
    scenario: Arc<Scenario>,
    index: SceneIndex,
    config: SimConfig,
    episode: Option<Episode>,
}

impl DrivingEnv {
    pub fn new(scenario: Arc<Scenario>, config: SimConfig) -> Self {
        let index = SceneIndex::new(&scenario);
        Self {
            scenario,
            index,
            config,
            episode: None,
        }
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn observation_dim(&self) -> usize {
        self.config.observation.dim()
    }

    pub fn ego(&self) -> Option<EgoState> {
        self.episode.as_ref().map(|e| e.ego)
    }

    pub fn frame(&self) -> Option<usize> {
        self.episode.as_ref().map(|e| e.frame)
    }

    pub fn start_frame(&self) -> Option<usize> {
        self.episode.as_ref().map(|e| e.start)
    }

    /// Places the ego on its logged pose at `start_frame`.
    pub fn reset(&mut self, start_frame: usize) -> Result<Vec<f64>> {
        let n = self.scenario.num_frames;
        if start_frame + self.config.min_horizon > n || start_frame + 1 >= n {
            return Err(Error::OutOfRange {
                what: "start_frame",
                detail: format!(
                    "{start_frame} leaves fewer than {} of {n} frames",
                    self.config.min_horizon
                ),
            });
        }
        let ego = self.scenario.ego_state_at(start_frame);
        self.episode = Some(Episode {
            start: start_frame,
            frame: start_frame,
            ego,
            poses: self.scenario.ego_log[..=start_frame].to_vec(),
            done: false,
        });
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let ep = self.episode.as_ref().expect("observe after reset");
        let frame = ep.frame;
        build_observation(
            &self.config.observation,
            &self.scenario,
            &self.index,
            frame,
            &ep.ego,
            |k| frame.checked_sub(k).map(|t| ep.poses[t]),
        )
    }

    pub fn ego_box(&self, pose: Pose) -> OrientedBox {
        let (l, w) = self.scenario.ego_extent;
        OrientedBox::new(pose, l, w)
    }

    /// Agent boxes present at `frame`, in track order.
    pub fn agent_boxes(&self, frame: usize) -> Vec<(u32, OrientedBox)> {
        self.scenario
            .agents
            .iter()
            .filter(|a| a.frames[frame].present)
            .map(|a| {
                (
                    a.id,
                    OrientedBox::new(a.frames[frame].pose, a.length, a.width),
                )
            })
            .collect()
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let limits = self.config.limits;
        let n = self.scenario.num_frames;
        let ep = self.episode.as_mut().ok_or(Error::NotReset)?;
        if ep.done {
            return Err(Error::SteppedAfterDone);
        }
        let applied = limits.clamp(action);
        ep.ego = step_forward(&ep.ego, applied, limits.v_max);
        ep.frame += 1;
        ep.poses.push(ep.ego.pose);
        ep.done = ep.frame == n - 1;
        let (frame, ego, done) = (ep.frame, ep.ego, ep.done);

        let ego_box = self.ego_box(ego.pose);
        let boxes = self.agent_boxes(frame);
        let collision = detect_collision(frame, &ego_box, boxes.iter().map(|(id, b)| (*id, b)));
        let (reward, reward_terms) = compute_reward(
            &ego,
            &self.scenario.ego_log[frame],
            collision.map(|c| c.class),
            &self.config.reward,
        );
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            reward_terms,
            collision,
            done,
            ego,
            applied,
            frame,
        })
    }
}
