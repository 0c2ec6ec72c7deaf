//! Flat ego-centric feature vector.
//!
//! Layout, in order:
//! - ego history: `history` slots of `[x, y, theta, presence]`, then speed
//! - agents: `agents` nearest slots of
//!   `[x, y, cos dtheta, sin dtheta, speed, length, width, presence]`
//! - lanes: `lanes` nearest polylines, each `points` samples of
//!   `[x, y, presence]` followed by a one-hot signal `[none, green, red]`
//! - crosswalks: `crosswalks` nearest, each `points` samples of `[x, y, presence]`
//! - route: `route_points` samples of the logged ego path ahead, `[x, y, presence]`
//! - reference: the logged ego pose at the current frame, `[x, y, cos dtheta, sin dtheta]`,
//!   when `reference` is set
//!
//! Every position is in the current ego frame and multiplied by
//! `position_scale`. Empty slots are all zero.

use serde::{Deserialize, Serialize};

use crate::geometry::{polyline_distance, Path};
use crate::kinematics::{normalize_angle, point_to_local, to_local, EgoState, Pose};
use crate::scenario::{MapKind, Scenario, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationConfig {
    pub history: usize,
    pub agents: usize,
    pub lanes: usize,
    pub crosswalks: usize,
    pub points: usize,
    /// Meters between lane samples.
    pub lane_spacing: f64,
    pub route_points: usize,
    /// Meters between route samples.
    pub route_spacing: f64,
    pub reference: bool,
    pub position_scale: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            history: 5,
            agents: 8,
            lanes: 6,
            crosswalks: 2,
            points: 5,
            lane_spacing: 5.0,
            route_points: 8,
            route_spacing: 4.0,
            reference: false,
            position_scale: 0.1,
        }
    }
}

impl ObservationConfig {
    pub const AGENT_FEATURES: usize = 8;

    pub fn history_dim(&self) -> usize {
        self.history * 4 + 1
    }

    pub fn agents_offset(&self) -> usize {
        self.history_dim()
    }

    pub fn lanes_offset(&self) -> usize {
        self.agents_offset() + self.agents * Self::AGENT_FEATURES
    }

    pub fn crosswalks_offset(&self) -> usize {
        self.lanes_offset() + self.lanes * (self.points * 3 + 3)
    }

    pub fn route_offset(&self) -> usize {
        self.crosswalks_offset() + self.crosswalks * self.points * 3
    }

    pub fn reference_offset(&self) -> usize {
        self.route_offset() + self.route_points * 3
    }

    pub fn dim(&self) -> usize {
        self.reference_offset() + if self.reference { 4 } else { 0 }
    }
}

/// Map geometry prepared once per scenario.
#[derive(Debug, Clone)]
pub struct SceneIndex {
    lanes: Vec<(Path, usize)>,
    crosswalks: Vec<Path>,
    route: Option<Path>,
    route_anchor: [f64; 2],
}

impl SceneIndex {
    pub fn new(s: &Scenario) -> Self {
        let mut lanes = Vec::new();
        let mut crosswalks = Vec::new();
        for (i, el) in s.map.iter().enumerate() {
            let path = Path::new(el.points.iter().copied());
            match el.kind {
                MapKind::Lane => lanes.push((path, i)),
                MapKind::Crosswalk => crosswalks.push(path),
            }
        }
        let positions = s.ego_positions();
        let moves = positions.windows(2).any(|w| w[0] != w[1]);
        Self {
            lanes,
            crosswalks,
            route: moves.then(|| Path::new(positions.iter().copied())),
            route_anchor: positions[0],
        }
    }

    pub fn route(&self) -> Option<&Path> {
        self.route.as_ref()
    }
}

/// Builds the observation at `frame` for the ego in `ego`.
///
/// `past(k)` returns the ego pose `k` frames ago, if one exists.
pub fn build_observation(
    cfg: &ObservationConfig,
    scenario: &Scenario,
    index: &SceneIndex,
    frame: usize,
    ego: &EgoState,
    past: impl Fn(usize) -> Option<Pose>,
) -> Vec<f64> {
    let scale = cfg.position_scale;
    let pose = &ego.pose;
    let mut obs = Vec::with_capacity(cfg.dim());

    for k in 1..=cfg.history {
        match past(k) {
            Some(p) => {
                let l = to_local(pose, &p);
                obs.extend_from_slice(&[l.x * scale, l.y * scale, l.theta, 1.0]);
            }
            None => obs.extend_from_slice(&[0.0; 4]),
        }
    }
    obs.push(ego.speed);

    let near = nearest_agents(scenario, frame, pose);
    for slot in 0..cfg.agents {
        match near.get(slot) {
            Some(&(i, _)) => {
                let a = &scenario.agents[i];
                let f = &a.frames[frame];
                let (x, y) = point_to_local(pose, f.pose.x, f.pose.y);
                let dtheta = normalize_angle(f.pose.theta - pose.theta);
                let speed = if frame > 0 && a.frames[frame - 1].present {
                    f.pose.distance(&a.frames[frame - 1].pose)
                } else {
                    0.0
                };
                obs.extend_from_slice(&[
                    x * scale,
                    y * scale,
                    dtheta.cos(),
                    dtheta.sin(),
                    speed,
                    a.length * scale,
                    a.width * scale,
                    1.0,
                ]);
            }
            None => obs.extend(std::iter::repeat(0.0).take(ObservationConfig::AGENT_FEATURES)),
        }
    }

    let here = [pose.x, pose.y];
    let mut lanes: Vec<(f64, usize)> = index
        .lanes
        .iter()
        .enumerate()
        .map(|(i, (path, _))| (polyline_distance(here, path.points()), i))
        .collect();
    lanes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for slot in 0..cfg.lanes {
        match lanes.get(slot) {
            Some(&(_, i)) => {
                let (path, map_idx) = &index.lanes[i];
                let s0 = path.project(here);
                for k in 0..cfg.points {
                    let s = s0 + k as f64 * cfg.lane_spacing;
                    if s <= path.length() {
                        let p = path.sample(s);
                        let (x, y) = point_to_local(pose, p.x, p.y);
                        obs.extend_from_slice(&[x * scale, y * scale, 1.0]);
                    } else {
                        obs.extend_from_slice(&[0.0; 3]);
                    }
                }
                let one_hot = match scenario.map[*map_idx].signal_at(frame) {
                    Signal::None => [1.0, 0.0, 0.0],
                    Signal::Green => [0.0, 1.0, 0.0],
                    Signal::Red => [0.0, 0.0, 1.0],
                };
                obs.extend_from_slice(&one_hot);
            }
            None => obs.extend(std::iter::repeat(0.0).take(cfg.points * 3 + 3)),
        }
    }

    let mut walks: Vec<(f64, usize)> = index
        .crosswalks
        .iter()
        .enumerate()
        .map(|(i, path)| (polyline_distance(here, path.points()), i))
        .collect();
    walks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for slot in 0..cfg.crosswalks {
        match walks.get(slot) {
            Some(&(_, i)) => {
                let path = &index.crosswalks[i];
                let denom = (cfg.points.max(2) - 1) as f64;
                for k in 0..cfg.points {
                    let p = path.sample(path.length() * k as f64 / denom);
                    let (x, y) = point_to_local(pose, p.x, p.y);
                    obs.extend_from_slice(&[x * scale, y * scale, 1.0]);
                }
            }
            None => obs.extend(std::iter::repeat(0.0).take(cfg.points * 3)),
        }
    }

    match &index.route {
        Some(route) => {
            let s0 = route.project(here);
            for k in 1..=cfg.route_points {
                let s = s0 + k as f64 * cfg.route_spacing;
                if s <= route.length() {
                    let p = route.sample(s);
                    let (x, y) = point_to_local(pose, p.x, p.y);
                    obs.extend_from_slice(&[x * scale, y * scale, 1.0]);
                } else {
                    obs.extend_from_slice(&[0.0; 3]);
                }
            }
        }
        None => {
            let [ax, ay] = index.route_anchor;
            let (x, y) = point_to_local(pose, ax, ay);
            for _ in 0..cfg.route_points {
                obs.extend_from_slice(&[x * scale, y * scale, 1.0]);
            }
        }
    }
    if cfg.reference {
        let log = &scenario.ego_log[frame.min(scenario.ego_log.len() - 1)];
        let l = to_local(pose, log);
        obs.extend_from_slice(&[l.x * scale, l.y * scale, l.theta.cos(), l.theta.sin()]);
    }
    debug_assert_eq!(obs.len(), cfg.dim());
    obs
}

/// Present agents at `frame` ordered by center distance, ties by list index.
pub fn nearest_agents(scenario: &Scenario, frame: usize, pose: &Pose) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = scenario
        .agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.frames[frame].present)
        .map(|(i, a)| (i, a.frames[frame].pose.distance(pose)))
        .collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate, ScenarioKind};

    #[test]
    fn dimension_matches_layout() {
        let cfg = ObservationConfig::default();
        assert_eq!(cfg.dim(), 21 + 64 + 108 + 30 + 24);
        let bare = cfg;
        let cfg = ObservationConfig {
            reference: true,
            ..bare
        };
        assert_eq!(cfg.dim(), bare.dim() + 4);
        let s = generate(ScenarioKind::TJunction, 3);
        let index = SceneIndex::new(&s);
        for t in [0, 100, 249] {
            let obs = build_observation(&cfg, &s, &index, t, &s.ego_state_at(t), |_| None);
            assert_eq!(obs.len(), cfg.dim());
            let b = build_observation(&bare, &s, &index, t, &s.ego_state_at(t), |_| None);
            assert_eq!(b[..], obs[..bare.dim()]);
        }
    }

    #[test]
    fn reference_block_tracks_the_log() {
        let cfg = ObservationConfig {
            reference: true,
            ..ObservationConfig::default()
        };
        let s = generate(ScenarioKind::TJunction, 1);
        let index = SceneIndex::new(&s);
        let at = cfg.reference_offset();
        let on_log = build_observation(&cfg, &s, &index, 40, &s.ego_state_at(40), |_| None);
        assert_eq!(on_log[at..], [0.0, 0.0, 1.0, 0.0]);
        // Ten frames behind the log: the reference sits ahead of the ego.
        let lagging = build_observation(&cfg, &s, &index, 50, &s.ego_state_at(40), |_| None);
        let expect = to_local(&s.ego_log[40], &s.ego_log[50]);
        assert!((lagging[at] - expect.x * cfg.position_scale).abs() < 1e-12);
        assert!(lagging[at] > 0.0);
    }

    #[test]
    fn nearest_order_matches_exhaustive_sort() {
        for seed in 0..5 {
            let s = generate(ScenarioKind::RedLightLead, seed);
            for t in (0..s.num_frames).step_by(17) {
                let p = s.ego_log[t];
                let got = nearest_agents(&s, t, &p);
                // Oracle: selection by repeated minimum.
                let mut pool: Vec<usize> = (0..s.agents.len())
                    .filter(|&i| s.agents[i].frames[t].present)
                    .collect();
                let mut want = Vec::new();
                while !pool.is_empty() {
                    let (j, _) = pool
                        .iter()
                        .enumerate()
                        .min_by(|a, b| {
                            let da = s.agents[*a.1].frames[t].pose.distance(&p);
                            let db = s.agents[*b.1].frames[t].pose.distance(&p);
                            da.partial_cmp(&db).unwrap().then(a.1.cmp(b.1))
                        })
                        .unwrap();
                    want.push(pool.remove(j));
                }
                assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), want);
            }
        }
    }
}
