//! Closed-loop scenes: static map, log-playback agents and the expert ego log.

mod generate;

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{inverse_action, normalize_angle, to_local, Action, EgoState, Pose};

pub use generate::{generate, generate_suite};

pub const FORMAT_TAG: &str = "softctrl-scene-v1";
pub const DEFAULT_NUM_FRAMES: usize = 250;
/// Seconds per frame.
pub const FRAME_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentClass {
    Vehicle,
    Pedestrian,
    Cyclist,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentFrame {
    pub pose: Pose,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: u32,
    pub class: AgentClass,
    pub length: f64,
    pub width: f64,
    pub frames: Vec<AgentFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Lane,
    Crosswalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    None,
    Green,
    Red,
}

impl Signal {
    pub fn code(self) -> u8 {
        match self {
            Signal::None => 0,
            Signal::Green => 1,
            Signal::Red => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Signal::None),
            1 => Some(Signal::Green),
            2 => Some(Signal::Red),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapElement {
    pub kind: MapKind,
    pub points: Vec<[f64; 2]>,
    /// Per-frame signal state, lanes only.
    pub signal: Option<Vec<Signal>>,
}

impl MapElement {
    pub fn signal_at(&self, frame: usize) -> Signal {
        self.signal
            .as_ref()
            .and_then(|s| s.get(frame).copied())
            .unwrap_or(Signal::None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub num_frames: usize,
    pub ego_log: Vec<Pose>,
    /// (length, width) in meters.
    pub ego_extent: (f64, f64),
    pub agents: Vec<AgentTrack>,
    pub map: Vec<MapElement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RedLightLead,
    TJunction,
    CrossingPedestrian,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::RedLightLead,
        ScenarioKind::TJunction,
        ScenarioKind::CrossingPedestrian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::RedLightLead => "red_light_lead",
            ScenarioKind::TJunction => "t_junction",
            ScenarioKind::CrossingPedestrian => "crossing_pedestrian",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario kind `{s}`")))
    }
}

impl Scenario {
    /// Checks every structural invariant of the scene format.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_frames;
        let fail = |msg: String| Err(Error::InvariantViolation(msg));
        if n < 2 {
            return fail(format!("num_frames must be at least 2, got {n}"));
        }
        if self.ego_log.len() != n {
            return fail(format!(
                "ego_log has {} poses but num_frames is {n}",
                self.ego_log.len()
            ));
        }
        if !(self.ego_extent.0 > 0.0 && self.ego_extent.1 > 0.0) {
            return fail("ego_extent must be positive".to_string());
        }
        for (t, w) in self.ego_log.windows(2).enumerate() {
            let dtheta = normalize_angle(w[1].theta - w[0].theta);
            if dtheta.abs() >= FRAC_PI_2 {
                return fail(format!(
                    "ego_log heading jumps by {dtheta} between frames {t} and {}",
                    t + 1
                ));
            }
        }
        for agent in &self.agents {
            if agent.frames.len() != n {
                return fail(format!(
                    "agent {} has {} frames but num_frames is {n}",
                    agent.id,
                    agent.frames.len()
                ));
            }
            if !(agent.length > 0.0 && agent.width > 0.0) {
                return fail(format!("agent {} has non-positive extent", agent.id));
            }
        }
        for (i, el) in self.map.iter().enumerate() {
            if el.points.len() < 2 {
                return fail(format!("map element {i} has fewer than 2 points"));
            }
            if el.points.windows(2).any(|w| w[0] == w[1]) {
                return fail(format!("map element {i} repeats a polyline point"));
            }
            if let Some(sig) = &el.signal {
                if el.kind != MapKind::Lane {
                    return fail(format!("map element {i}: only lanes carry signals"));
                }
                if sig.len() != n {
                    return fail(format!(
                        "map element {i}: signal has {} frames but num_frames is {n}",
                        sig.len()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Signed speed the ego holds when it stands at `frame`.
    ///
    /// Frame 0 has no history, so the 0→1 displacement stands in for it.
    pub fn log_speed(&self, frame: usize) -> f64 {
        let (a, b) = if frame == 0 {
            (self.ego_log[0], self.ego_log[1])
        } else {
            (self.ego_log[frame - 1], self.ego_log[frame])
        };
        let local = to_local(&a, &b);
        let eta = if local.x * local.theta.cos() > 0.0 {
            1.0
        } else {
            -1.0
        };
        eta * local.x.hypot(local.y)
    }

    pub fn ego_state_at(&self, frame: usize) -> EgoState {
        EgoState::new(self.ego_log[frame], self.log_speed(frame))
    }

    pub fn ego_positions(&self) -> Vec<[f64; 2]> {
        self.ego_log.iter().map(|p| [p.x, p.y]).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile::from(self);
        let mut s = serde_json::to_string(&file).expect("scene serialization is infallible");
        s.push('\n');
        s
    }

    /// Parses and validates a scene document. `origin` labels diagnostics.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: SceneFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            Error::Parse {
                path: origin.to_string(),
                line: inner.line(),
                field,
                message: inner.to_string(),
            }
        })?;
        let scenario = file.into_scenario(origin)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Recovers the action sequence that reproduces the ego log under
/// [`crate::kinematics::step_forward`] from the frame-0 state.
pub fn expert_actions(s: &Scenario) -> Result<Vec<Action>> {
    let mut actions = Vec::with_capacity(s.num_frames.saturating_sub(1));
    let mut speed = s.log_speed(0);
    for w in s.ego_log.windows(2) {
        let state = EgoState::new(w[0], speed);
        let a = inverse_action(&state, &to_local(&w[0], &w[1]))?;
        speed += a.accel;
        actions.push(a);
    }
    Ok(actions)
}

// On-disk layout.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    format: String,
    id: String,
    num_frames: usize,
    ego_extent: [f64; 2],
    ego_log: Vec<[f64; 3]>,
    agents: Vec<AgentFile>,
    map: Vec<MapFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: u32,
    class: AgentClass,
    extent: [f64; 2],
    frames: Vec<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    kind: MapKind,
    points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signal: Option<Vec<u8>>,
}

impl From<&Scenario> for SceneFile {
    fn from(s: &Scenario) -> Self {
        SceneFile {
            format: FORMAT_TAG.to_string(),
            id: s.id.clone(),
            num_frames: s.num_frames,
            ego_extent: [s.ego_extent.0, s.ego_extent.1],
            ego_log: s.ego_log.iter().map(|p| [p.x, p.y, p.theta]).collect(),
            agents: s
                .agents
                .iter()
                .map(|a| AgentFile {
                    id: a.id,
                    class: a.class,
                    extent: [a.length, a.width],
                    frames: a
                        .frames
                        .iter()
                        .map(|f| {
                            [
                                f.pose.x,
                                f.pose.y,
                                f.pose.theta,
                                if f.present { 1.0 } else { 0.0 },
                            ]
                        })
                        .collect(),
                })
                .collect(),
            map: s
                .map
                .iter()
                .map(|m| MapFile {
                    kind: m.kind,
                    points: m.points.clone(),
                    signal: m
                        .signal
                        .as_ref()
                        .map(|sig| sig.iter().map(|s| s.code()).collect()),
                })
                .collect(),
        }
    }
}

impl SceneFile {
    fn into_scenario(self, origin: &str) -> Result<Scenario> {
        let field_err = |field: String, message: String| Error::Parse {
            path: origin.to_string(),
            line: 0,
            field,
            message,
        };
        if self.format != FORMAT_TAG {
            return Err(field_err(
                "format".into(),
                format!("expected `{FORMAT_TAG}`, found `{}`", self.format),
            ));
        }
        let mut map = Vec::with_capacity(self.map.len());
        for (i, m) in self.map.into_iter().enumerate() {
            let signal = match m.signal {
                None => None,
                Some(codes) => Some(
                    codes
                        .iter()
                        .enumerate()
                        .map(|(t, &c)| {
                            Signal::from_code(c).ok_or_else(|| {
                                field_err(
                                    format!("map[{i}].signal[{t}]"),
                                    format!("unknown signal code {c}"),
                                )
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
            };
            map.push(MapElement {
                kind: m.kind,
                points: m.points,
                signal,
            });
        }
        Ok(Scenario {
            id: self.id,
            num_frames: self.num_frames,
            ego_extent: (self.ego_extent[0], self.ego_extent[1]),
            ego_log: self
                .ego_log
                .iter()
                .map(|p| Pose {
                    x: p[0],
                    y: p[1],
                    theta: p[2],
                })
                .collect(),
            agents: self
                .agents
                .into_iter()
                .map(|a| AgentTrack {
                    id: a.id,
                    class: a.class,
                    length: a.extent[0],
                    width: a.extent[1],
                    frames: a
                        .frames
                        .iter()
                        .map(|f| AgentFrame {
                            pose: Pose {
                                x: f[0],
                                y: f[1],
                                theta: f[2],
                            },
                            present: f[3] != 0.0,
                        })
                        .collect(),
                })
                .collect(),
            map,
        })
    }
}
