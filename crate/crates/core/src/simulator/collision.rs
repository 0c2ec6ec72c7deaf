use std::f64::consts::FRAC_PI_4;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::OrientedBox;
use crate::kinematics::point_to_local;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionClass {
    Front,
    Side,
    Rear,
}

impl CollisionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CollisionClass::Front => "front",
            CollisionClass::Side => "side",
            CollisionClass::Rear => "rear",
        }
    }

    /// Classifies by the bearing of the other agent's center in the ego
    /// frame. Exact 45/135 degree bearings go to front/rear.
    pub fn from_bearing(bearing: f64) -> Self {
        let b = bearing.abs();
        if b <= FRAC_PI_4 {
            CollisionClass::Front
        } else if b >= 3.0 * FRAC_PI_4 {
            CollisionClass::Rear
        } else {
            CollisionClass::Side
        }
    }
}

impl fmt::Display for CollisionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub frame: usize,
    pub class: CollisionClass,
    pub other_agent: u32,
}

/// First overlapping agent in list order, classified by bearing.
pub fn detect_collision<'a>(
    frame: usize,
    ego: &OrientedBox,
    agents: impl IntoIterator<Item = (u32, &'a OrientedBox)>,
) -> Option<CollisionEvent> {
    agents.into_iter().find_map(|(id, other)| {
        ego.overlaps(other).then(|| {
            let (x, y) = point_to_local(&ego.center, other.center.x, other.center.y);
            CollisionEvent {
                frame,
                class: CollisionClass::from_bearing(y.atan2(x)),
                other_agent: id,
            }
        })
    })
}
