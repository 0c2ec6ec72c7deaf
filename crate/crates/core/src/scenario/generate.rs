//! Seeded synthetic scenes.
//!
//! The ego log is produced by rolling the unicycle model under a simple
//! driver (car-following plus lookahead steering) with bounded, comfortable
//! actions, so every consecutive pose pair inverts to an in-bound action.
//! Background agents are dropped when they would touch the ego log.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AgentClass, AgentFrame, AgentTrack, MapElement, MapKind, Scenario, ScenarioKind, Signal,
    DEFAULT_NUM_FRAMES,
};
use crate::geometry::{OrientedBox, Path};
use crate::kinematics::{normalize_angle, step_forward, Action, EgoState, Pose};

const EGO_EXTENT: (f64, f64) = (4.5, 1.9);
const VEHICLE_EXTENT: (f64, f64) = (4.5, 1.9);
const PEDESTRIAN_EXTENT: (f64, f64) = (0.8, 0.8);
const CYCLIST_EXTENT: (f64, f64) = (1.8, 0.7);

/// Expert actions stay well inside the default bounds (and under the
/// 2 m/s² discomfort threshold).
const EXPERT_ACCEL: f64 = 0.018;
const EXPERT_STEER: f64 = 0.15;
const V_MAX: f64 = 1.7;
const MAX_AGENTS: usize = 12;

/// Generates one scene. Identical `(kind, seed)` give identical scenes.
pub fn generate(kind: ScenarioKind, seed: u64) -> Scenario {
    let stream = match kind {
        ScenarioKind::RedLightLead => 1,
        ScenarioKind::TJunction => 2,
        ScenarioKind::CrossingPedestrian => 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut b = Builder::new(rng, DEFAULT_NUM_FRAMES);
    match kind {
        ScenarioKind::RedLightLead => red_light_lead(&mut b),
        ScenarioKind::TJunction => t_junction(&mut b),
        ScenarioKind::CrossingPedestrian => crossing_pedestrian(&mut b),
    }
    let scenario = b.finish(format!("{kind}-{seed:04}"));
    debug_assert!(scenario.validate().is_ok());
    scenario
}

/// `count` scenes cycling through `kinds`, scene `i` seeded with `seed + i`.
pub fn generate_suite(kinds: &[ScenarioKind], count: usize, seed: u64) -> Vec<Scenario> {
    (0..count)
        .map(|i| generate(kinds[i % kinds.len()], seed + i as u64))
        .collect()
}

#[derive(Clone, Copy)]
struct Driver {
    a_comf: f64,
    b_comf: f64,
    /// Time headway in frames.
    headway: f64,
    min_gap: f64,
}

impl Default for Driver {
    fn default() -> Self {
        Self {
            a_comf: 0.012,
            b_comf: 0.015,
            headway: 12.0,
            min_gap: 2.5,
        }
    }
}

impl Driver {
    /// Intelligent-driver acceleration toward `v_des`, optionally following
    /// an obstacle `gap` meters ahead moving at `lead_speed`.
    fn accel(&self, v: f64, v_des: f64, obstacle: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / v_des).powi(4);
        let interaction = obstacle.map_or(0.0, |(gap, lead_speed)| {
            let dyn_gap = v * self.headway
                + v * (v - lead_speed) / (2.0 * (self.a_comf * self.b_comf).sqrt());
            let s_star = self.min_gap + dyn_gap.max(0.0);
            (s_star / gap.max(0.05)).powi(2)
        });
        (self.a_comf * (free - interaction)).clamp(-EXPERT_ACCEL, EXPERT_ACCEL)
    }
}

fn nearest(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> Option<(f64, f64)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Rolls the ego along `path` from arc length `s_start`.
///
/// `obstacle(t, s_front)` returns the gap ahead of the ego front bumper and
/// the obstacle speed.
fn drive_ego(
    path: &Path,
    s_start: f64,
    v0: f64,
    n: usize,
    v_des: impl Fn(f64) -> f64,
    mut obstacle: impl FnMut(usize, f64) -> Option<(f64, f64)>,
) -> Vec<Pose> {
    let driver = Driver::default();
    let mut state = EgoState::new(path.sample(s_start), v0);
    let mut log = Vec::with_capacity(n);
    log.push(state.pose);
    for t in 0..n - 1 {
        let s = path.project([state.pose.x, state.pose.y]);
        let front = s + EGO_EXTENT.0 / 2.0;
        let accel = driver
            .accel(state.speed, v_des(s), obstacle(t, front))
            .max(-state.speed);
        let v_new = state.speed + accel;
        let steer = if v_new < 1e-3 {
            0.0
        } else {
            let look = path.sample(s + (6.0 * v_new).max(4.0));
            let desired = (look.y - state.pose.y).atan2(look.x - state.pose.x);
            normalize_angle(desired - state.pose.theta).clamp(-EXPERT_STEER, EXPERT_STEER)
        };
        state = step_forward(&state, Action::new(steer, accel), V_MAX);
        log.push(state.pose);
    }
    log
}

/// Point mass moving along a path, one arc-length value per frame.
fn follow_path(
    n: usize,
    s0: f64,
    v0: f64,
    v_des: f64,
    mut obstacle: impl FnMut(usize, f64) -> Option<(f64, f64)>,
    half_length: f64,
) -> Vec<(f64, f64)> {
    let driver = Driver::default();
    let (mut s, mut v) = (s0, v0);
    let mut out = Vec::with_capacity(n);
    out.push((s, v));
    for t in 0..n - 1 {
        let a = driver.accel(v, v_des, obstacle(t, s + half_length)).max(-v);
        v += a;
        s += v;
        out.push((s, v));
    }
    out
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

struct Candidate {
    class: AgentClass,
    extent: (f64, f64),
    poses: Vec<Pose>,
    present: Vec<bool>,
}

impl Candidate {
    fn along(path: &Path, arc: &[f64], class: AgentClass, extent: (f64, f64)) -> Self {
        let poses = arc.iter().map(|&s| path.sample(s)).collect::<Vec<_>>();
        let present = vec![true; poses.len()];
        Self {
            class,
            extent,
            poses,
            present,
        }
    }

    /// Marks frames where the agent sits outside the axis-aligned window as
    /// absent.
    fn within(mut self, x: (f64, f64), y: (f64, f64)) -> Self {
        for (p, flag) in self.poses.iter().zip(self.present.iter_mut()) {
            *flag &= p.x >= x.0 && p.x <= x.1 && p.y >= y.0 && p.y <= y.1;
        }
        self
    }

    fn from_frame(mut self, t0: usize) -> Self {
        for flag in self.present.iter_mut().take(t0) {
            *flag = false;
        }
        self
    }

    fn touches(
        &self,
        poses: &[Pose],
        present: Option<&[bool]>,
        extent: (f64, f64),
        margin: f64,
    ) -> bool {
        self.poses.iter().enumerate().any(|(t, p)| {
            self.present[t]
                && present.map_or(true, |pr| pr[t])
                && OrientedBox::new(*p, self.extent.0, self.extent.1)
                    .inflated(margin)
                    .overlaps(&OrientedBox::new(poses[t], extent.0, extent.1))
        })
    }
}

struct Builder {
    rng: ChaCha8Rng,
    n: usize,
    ego_log: Vec<Pose>,
    agents: Vec<AgentTrack>,
    required: Vec<Candidate>,
    optional: Vec<Candidate>,
    map: Vec<MapElement>,
}

impl Builder {
    fn new(rng: ChaCha8Rng, n: usize) -> Self {
        Self {
            rng,
            n,
            ego_log: Vec::new(),
            agents: Vec::new(),
            required: Vec::new(),
            optional: Vec::new(),
            map: Vec::new(),
        }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn frames(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..hi)
    }

    fn coin(&mut self) -> bool {
        self.rng.random_bool(0.5)
    }

    fn lane(&mut self, points: Vec<[f64; 2]>, signal: Option<Vec<Signal>>) {
        self.map.push(MapElement {
            kind: MapKind::Lane,
            points,
            signal,
        });
    }

    fn crosswalk(&mut self, a: [f64; 2], b: [f64; 2]) {
        self.map.push(MapElement {
            kind: MapKind::Crosswalk,
            points: vec![a, b],
            signal: None,
        });
    }

    fn stationary(&self, pose: Pose, class: AgentClass, extent: (f64, f64)) -> Candidate {
        Candidate {
            class,
            extent,
            poses: vec![pose; self.n],
            present: vec![true; self.n],
        }
    }

    /// Straight-line walker/rider at constant speed starting at `start`.
    fn constant_velocity(
        &self,
        start: Pose,
        speed: f64,
        class: AgentClass,
        extent: (f64, f64),
    ) -> Candidate {
        let (s, c) = start.theta.sin_cos();
        let poses = (0..self.n)
            .map(|t| {
                let d = speed * t as f64;
                Pose::new(start.x + d * c, start.y + d * s, start.theta)
            })
            .collect::<Vec<_>>();
        Candidate {
            class,
            extent,
            poses,
            present: vec![true; self.n],
        }
    }

    fn parked_and_walkers(&mut self, x_range: (f64, f64), curb_y: f64, walk_y: f64) {
        let parked = self.frames(0, 4);
        for _ in 0..parked {
            let x = self.uniform(x_range.0, x_range.1);
            let c = self.stationary(
                Pose::new(x, curb_y, 0.0),
                AgentClass::Vehicle,
                VEHICLE_EXTENT,
            );
            self.optional.push(c);
        }
        let walkers = self.frames(1, 4);
        for _ in 0..walkers {
            let x = self.uniform(x_range.0 - 20.0, x_range.1 + 20.0);
            let heading = if self.coin() { 0.0 } else { PI };
            let y = if self.coin() { walk_y } else { -walk_y + 3.5 };
            let (class, extent, speed) = if self.rng.random_bool(0.25) {
                (AgentClass::Cyclist, CYCLIST_EXTENT, self.uniform(0.3, 0.5))
            } else {
                (
                    AgentClass::Pedestrian,
                    PEDESTRIAN_EXTENT,
                    self.uniform(0.1, 0.15),
                )
            };
            let c = self.constant_velocity(Pose::new(x, y, heading), speed, class, extent);
            self.optional.push(c);
        }
    }

    fn finish(mut self, id: String) -> Scenario {
        let mut accepted: Vec<Candidate> = std::mem::take(&mut self.required);
        for cand in std::mem::take(&mut self.optional) {
            if accepted.len() >= MAX_AGENTS {
                break;
            }
            if cand.touches(&self.ego_log, None, EGO_EXTENT, 0.5) {
                continue;
            }
            let clash = accepted.iter().any(|other| {
                cand.class == AgentClass::Vehicle
                    && cand.touches(&other.poses, Some(&other.present), other.extent, 0.3)
            });
            if !clash {
                accepted.push(cand);
            }
        }
        for (i, c) in accepted.into_iter().enumerate() {
            let frames = c
                .poses
                .iter()
                .zip(&c.present)
                .map(|(p, &present)| AgentFrame {
                    pose: Pose::new(
                        round_to(p.x, 1e-3),
                        round_to(p.y, 1e-3),
                        round_to(p.theta, 1e-4),
                    ),
                    present,
                })
                .collect();
            self.agents.push(AgentTrack {
                id: i as u32 + 1,
                class: c.class,
                length: c.extent.0,
                width: c.extent.1,
                frames,
            });
        }
        Scenario {
            id,
            num_frames: self.n,
            ego_log: self.ego_log,
            ego_extent: EGO_EXTENT,
            agents: self.agents,
            map: self.map,
        }
    }
}

/// Ego follows a lead vehicle that stops at a red light.
fn red_light_lead(b: &mut Builder) {
    let n = b.n;
    let v_cruise = b.uniform(0.85, 1.05);
    let lead_gap = b.uniform(18.0, 28.0);
    let lead_v0 = v_cruise * b.uniform(0.9, 1.0);
    let t_red = b.frames(40, 80);
    let t_green = (t_red + b.frames(110, 150)).min(n - 10);
    let x_stop = lead_gap + lead_v0 * t_red as f64 + b.uniform(38.0, 55.0);
    let x_cross = x_stop + 12.0;

    let ego_signal: Vec<Signal> = (0..n)
        .map(|t| {
            if t >= t_red && t < t_green {
                Signal::Red
            } else {
                Signal::Green
            }
        })
        .collect();
    let cross_signal: Vec<Signal> = ego_signal
        .iter()
        .map(|s| {
            if *s == Signal::Red {
                Signal::Green
            } else {
                Signal::Red
            }
        })
        .collect();
    b.lane(vec![[-50.0, 0.0], [x_stop, 0.0]], Some(ego_signal.clone()));
    b.lane(vec![[x_stop, 0.0], [600.0, 0.0]], None);
    b.lane(vec![[600.0, 3.5], [x_stop + 24.0, 3.5]], None);
    b.lane(
        vec![[x_stop + 24.0, 3.5], [-50.0, 3.5]],
        Some(ego_signal.clone()),
    );
    b.lane(
        vec![[x_cross + 1.75, -80.0], [x_cross + 1.75, 80.0]],
        Some(cross_signal.clone()),
    );
    b.lane(
        vec![[x_cross - 1.75, 80.0], [x_cross - 1.75, -80.0]],
        Some(cross_signal),
    );
    b.crosswalk([x_stop + 3.0, -4.0], [x_stop + 3.0, 7.5]);

    // Arc length on the ego path is x + 50.
    let path = Path::new([[-50.0, 0.0], [600.0, 0.0]]);
    let s_stop = x_stop + 50.0;
    let red = |t: usize| ego_signal[t] == Signal::Red;
    let lead = follow_path(
        n,
        50.0 + lead_gap,
        lead_v0,
        v_cruise,
        |t, front| (red(t) && front < s_stop).then(|| (s_stop - front, 0.0)),
        VEHICLE_EXTENT.0 / 2.0,
    );
    let lead_arc: Vec<f64> = lead.iter().map(|p| p.0).collect();
    b.ego_log = drive_ego(
        &path,
        50.0,
        v_cruise * b.uniform(0.9, 1.0),
        n,
        |_| v_cruise,
        |t, front| {
            let (ls, lv) = lead[t];
            let follow = Some((ls - VEHICLE_EXTENT.0 / 2.0 - front, lv));
            let light = (red(t) && front < s_stop).then(|| (s_stop - front, 0.0));
            nearest(follow, light)
        },
    );
    b.required.push(Candidate::along(
        &path,
        &lead_arc,
        AgentClass::Vehicle,
        VEHICLE_EXTENT,
    ));

    // Cross traffic passes while the ego approach is red.
    let crossers = b.frames(1, 3);
    for _ in 0..crossers {
        let t_mid = b.frames(t_red + 15, (t_green - 20).max(t_red + 16)) as f64;
        let v = b.uniform(0.8, 1.0);
        let northbound = b.coin();
        let (x, dir) = if northbound {
            (x_cross + 1.75, 1.0)
        } else {
            (x_cross - 1.75, -1.0)
        };
        let start = Pose::new(x, -dir * v * t_mid, dir * FRAC_PI_2);
        let c = b
            .constant_velocity(start, v, AgentClass::Vehicle, VEHICLE_EXTENT)
            .within((-1e9, 1e9), (-70.0, 70.0));
        b.optional.push(c);
    }
    // Oncoming traffic crosses the junction while the ego approach is green.
    let oncoming = b.frames(1, 3);
    for _ in 0..oncoming {
        let v = b.uniform(0.8, 1.0);
        let t_pass = if b.coin() {
            b.frames(0, t_red.saturating_sub(10).max(1)) as f64
        } else {
            b.frames(t_green.min(n - 2), n) as f64
        };
        let start = Pose::new(x_stop + 10.0 + v * t_pass, 3.5, PI);
        let c = b
            .constant_velocity(start, v, AgentClass::Vehicle, VEHICLE_EXTENT)
            .within((-40.0, x_stop + 150.0), (-1e9, 1e9));
        b.optional.push(c);
    }
    b.parked_and_walkers((15.0, x_stop - 15.0), -3.3, -6.0);
}

/// Left turn at a T-junction; right turn and straight-through are also legal.
fn t_junction(b: &mut Builder) {
    let n = b.n;
    let x0 = b.uniform(45.0, 65.0);
    let radius = b.uniform(9.0, 12.0);
    let v_cruise = b.uniform(0.85, 1.0);
    let v_turn = b.uniform(0.45, 0.55);
    let north_x = x0 + radius;
    let south_x = north_x - 3.5;
    let right_r = radius - 3.5;

    let left_arc = Path::arc_points(Pose::new(x0, 0.0, 0.0), radius, FRAC_PI_2, 24);
    let right_arc = Path::arc_points(Pose::new(x0, 0.0, 0.0), right_r, -FRAC_PI_2, 16);
    b.lane(vec![[-50.0, 0.0], [x0, 0.0]], None);
    b.lane(left_arc.clone(), None);
    b.lane(right_arc, None);
    b.lane(vec![[north_x, -80.0], [north_x, 320.0]], None);
    b.lane(vec![[south_x, 320.0], [south_x, -80.0]], None);
    b.lane(vec![[x0, 3.5], [-50.0, 3.5]], None);
    b.crosswalk([x0 - 3.0, -4.0], [x0 - 3.0, 7.5]);

    let mut pts = vec![[-50.0, 0.0]];
    pts.extend(left_arc.iter().copied());
    pts.push([north_x, radius + 320.0]);
    let path = Path::new(pts);
    let s_turn = 50.0 + x0;
    let s_turn_end = s_turn + radius * FRAC_PI_2;
    let brake = 0.01;
    b.ego_log = drive_ego(
        &path,
        50.0,
        v_cruise,
        n,
        move |s| {
            if s < s_turn {
                v_cruise.min((v_turn * v_turn + 2.0 * brake * (s_turn - s)).sqrt())
            } else if s < s_turn_end {
                v_turn
            } else {
                v_cruise
            }
        },
        |_, _| None,
    );

    let through = b.frames(2, 5);
    for _ in 0..through {
        let v = b.uniform(0.8, 1.0);
        let t_mid = b.frames(0, n) as f64;
        let northbound = b.coin();
        let (x, dir) = if northbound {
            (north_x, 1.0)
        } else {
            (south_x, -1.0)
        };
        let start = Pose::new(x, -dir * v * t_mid, dir * FRAC_PI_2);
        let c = b
            .constant_velocity(start, v, AgentClass::Vehicle, VEHICLE_EXTENT)
            .within((-1e9, 1e9), (-70.0, 300.0));
        b.optional.push(c);
    }

    // A southbound vehicle turning right into the stem, passing beside the ego.
    let mut turn_pts = vec![[south_x, 300.0]];
    turn_pts.extend(Path::arc_points(
        Pose::new(south_x, 3.5 + right_r, -FRAC_PI_2),
        right_r,
        -FRAC_PI_2,
        16,
    ));
    turn_pts.push([-80.0, 3.5]);
    let turn_path = Path::new(turn_pts);
    let v = b.uniform(0.6, 0.8);
    let s0 = b.uniform(150.0, 330.0);
    let arc: Vec<f64> = (0..n).map(|t| s0 + v * t as f64 - 250.0).collect();
    let c = Candidate::along(&turn_path, &arc, AgentClass::Vehicle, VEHICLE_EXTENT)
        .within((-45.0, 1e9), (-1e9, 250.0));
    b.optional.push(c);

    b.parked_and_walkers((10.0, x0 - 12.0), -3.3, -6.0);
}

/// A pedestrian crosses the ego's path at a crosswalk; the ego yields.
fn crossing_pedestrian(b: &mut Builder) {
    let n = b.n;
    let v_cruise = b.uniform(0.85, 1.0);
    let t_appear = b.frames(15, 50);
    let x_cw = v_cruise * t_appear as f64 + b.uniform(50.0, 70.0);
    let walk_speed = b.uniform(0.12, 0.15);
    let from_right = b.coin();
    let (y0, dir) = if from_right { (-5.0, 1.0) } else { (8.5, -1.0) };
    let road = (-3.6, 7.1);

    b.lane(vec![[-50.0, 0.0], [600.0, 0.0]], None);
    b.lane(vec![[600.0, 3.5], [-50.0, 3.5]], None);
    b.crosswalk([x_cw, -5.0], [x_cw, 8.5]);

    let ped_y: Vec<f64> = (0..n)
        .map(|t| y0 + dir * walk_speed * t.saturating_sub(t_appear) as f64)
        .collect();
    let y_end = if from_right { 8.5 } else { -5.0 };
    let ped = Candidate {
        class: AgentClass::Pedestrian,
        extent: PEDESTRIAN_EXTENT,
        poses: ped_y
            .iter()
            .map(|&y| Pose::new(x_cw, y, dir * FRAC_PI_2))
            .collect(),
        present: ped_y
            .iter()
            .enumerate()
            .map(|(t, &y)| t >= t_appear && dir * (y_end + dir * 2.0 - y) >= 0.0)
            .collect(),
    };

    let path = Path::new([[-50.0, 0.0], [600.0, 0.0]]);
    let s_line = x_cw - 2.5 + 50.0;
    let ped_present = ped.present.clone();
    b.ego_log = drive_ego(
        &path,
        50.0,
        v_cruise * b.uniform(0.9, 1.0),
        n,
        |_| v_cruise,
        |t, front| {
            let on_road = ped_present[t] && ped_y[t] > road.0 && ped_y[t] < road.1;
            (on_road && front < s_line + 1.0).then(|| (s_line - front, 0.0))
        },
    );
    b.required.push(ped);

    let oncoming = b.frames(1, 4);
    for _ in 0..oncoming {
        let v = b.uniform(0.7, 1.0);
        let x = b.uniform(40.0, 400.0);
        let c = b
            .constant_velocity(
                Pose::new(x, 3.5, PI),
                v,
                AgentClass::Vehicle,
                VEHICLE_EXTENT,
            )
            .within((-40.0, 1e9), (-1e9, 1e9));
        b.optional.push(c);
    }
    if b.coin() {
        let c = b
            .constant_velocity(
                Pose::new(x_cw + 60.0, 5.2, PI),
                0.35,
                AgentClass::Cyclist,
                CYCLIST_EXTENT,
            )
            .from_frame(b.frames(0, 100));
        b.optional.push(c);
    }
    b.parked_and_walkers((15.0, x_cw - 15.0), -3.3, -6.0);
}
