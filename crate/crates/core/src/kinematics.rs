//! Unicycle motion model in frame units and its closed-form inverse.
//!
//! One call to [`step_forward`] advances the ego by one frame: the heading
//! turns by `steer`, the speed changes by `accel`, and the vehicle then moves
//! `speed` meters along the *new* heading. [`inverse_action`] recovers the
//! action that produced a given one-frame displacement exactly.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Global pose. `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A pose expressed in the frame of some source pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose,
    /// Meters per frame; negative while reversing.
    pub speed: f64,
}

impl EgoState {
    pub fn new(pose: Pose, speed: f64) -> Self {
        Self { pose, speed }
    }
}

/// Steering increment (rad/frame) and speed increment (m/frame²).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub accel: f64,
}

impl Action {
    pub fn new(steer: f64, accel: f64) -> Self {
        Self { steer, accel }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.steer, self.accel]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            steer: v[0],
            accel: v[1],
        }
    }
}

/// Bounds of the shared IL/RL action space and the ego speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicLimits {
    /// rad/frame, must stay below pi/2.
    pub steer_max: f64,
    /// m/frame².
    pub accel_max: f64,
    /// m/frame.
    pub v_max: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self {
            steer_max: 0.3,
            accel_max: 0.06,
            v_max: 1.7,
        }
    }
}

impl KinematicLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.steer_max > 0.0 && self.steer_max < FRAC_PI_2) {
            return Err(Error::Config(format!(
                "steer_max must lie in (0, pi/2), got {}",
                self.steer_max
            )));
        }
        if !(self.accel_max > 0.0) || !(self.v_max > 0.0) {
            return Err(Error::Config(
                "accel_max and v_max must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn clamp(&self, action: Action) -> Action {
        Action {
            steer: action.steer.clamp(-self.steer_max, self.steer_max),
            accel: action.accel.clamp(-self.accel_max, self.accel_max),
        }
    }

    pub fn contains(&self, action: Action) -> bool {
        action.steer.abs() <= self.steer_max && action.accel.abs() <= self.accel_max
    }

    pub fn scale(&self) -> [f64; 2] {
        [self.steer_max, self.accel_max]
    }
}

/// Advances one frame. The new speed is clamped to `[-v_max, v_max]`.
pub fn step_forward(state: &EgoState, action: Action, v_max: f64) -> EgoState {
    let theta = normalize_angle(state.pose.theta + action.steer);
    let speed = (state.speed + action.accel).clamp(-v_max, v_max);
    EgoState {
        pose: Pose {
            x: state.pose.x + speed * theta.cos(),
            y: state.pose.y + speed * theta.sin(),
            theta,
        },
        speed,
    }
}

/// Expresses `target` in the frame of `source`.
pub fn to_local(source: &Pose, target: &Pose) -> LocalPose {
    let (s, c) = source.theta.sin_cos();
    let dx = target.x - source.x;
    let dy = target.y - source.y;
    LocalPose {
        x: c * dx + s * dy,
        y: -s * dx + c * dy,
        theta: normalize_angle(target.theta - source.theta),
    }
}

/// Inverse of [`to_local`].
pub fn to_global(source: &Pose, local: &LocalPose) -> Pose {
    let (s, c) = source.theta.sin_cos();
    Pose {
        x: source.x + c * local.x - s * local.y,
        y: source.y + s * local.x + c * local.y,
        theta: normalize_angle(source.theta + local.theta),
    }
}

/// Closed-form action that moves `state` onto `target` (given in the
/// state's local frame) in one frame.
///
/// The result is not clamped to any action bounds.
pub fn inverse_action(state: &EgoState, target: &LocalPose) -> Result<Action> {
    if target.theta.abs() >= FRAC_PI_2 {
        return Err(Error::DegenerateTarget {
            theta: target.theta,
        });
    }
    let eta = if target.x * target.theta.cos() > 0.0 {
        1.0
    } else {
        -1.0
    };
    Ok(Action {
        steer: target.theta,
        accel: eta * target.x.hypot(target.y) - state.speed,
    })
}

/// Transforms a world-frame point into the frame of `pose`.
pub fn point_to_local(pose: &Pose, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = pose.theta.sin_cos();
    let dx = x - pose.x;
    let dy = y - pose.y;
    (c * dx + s * dy, -s * dx + c * dy)
}
